"""Two-phase online mechanism: serial dictatorship on a sample, then budgets.

The first ``s = ceil(eps_s·n)`` arrivals pick greedily under scaled-down
capacities. An expected equilibrium of the sample economy fixes prices and a
random budget per sampled type; every later arrival draws a budget for its
reported type and buys its favourite affordable bundle.

Randomness: the budget draw of the agent at arrival position ``k`` uses its
own stream ``default_rng([seed, BUDGET_STREAM, k])``, so outcomes at one
position never depend on reports made at other online positions.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .demand import optimal_bundle
from .economy import AgentType, Bundle, Economy, as_fraction, bundle_goods, fmt_fraction
from .eceei import Eceei, RandomBudget, construct_eceei, eceei_to_dict
from .solver import SolverConfig, SolverFailure, solve_pseudoequilibrium

BUDGET_STREAM = 0xB0D6
ARRIVAL_STREAM = 0xA771


@dataclass(frozen=True)
class MechanismParams:
    eps_b: Fraction
    eps_n: Fraction
    eps_f: Fraction
    unseen_type_budget: Fraction | None = None
    sample_budget: Fraction = Fraction(1)
    seed: int = 0
    batch_size: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        for name in ("eps_b", "eps_n", "eps_f"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        object.__setattr__(self, "sample_budget", as_fraction(self.sample_budget))
        if self.unseen_type_budget is None:
            object.__setattr__(self, "unseen_type_budget", 1 - self.eps_b)
        else:
            object.__setattr__(self, "unseen_type_budget", as_fraction(self.unseen_type_budget))
        if not 0 < self.eps_b < 1:
            raise ValueError("eps_b must lie in (0, 1)")
        if not 0 < self.eps_n <= 1 or not 0 < self.eps_f <= 1:
            raise ValueError("eps_n and eps_f must lie in (0, 1]")
        for name in ("unseen_type_budget", "sample_budget"):
            if not 1 - self.eps_b <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [1 - eps_b, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        assert self.eps_s < self.eps_n

    @property
    def eps_s(self) -> Fraction:
        return self.eps_f * self.eps_n / 4

    def sample_size(self, n: int) -> int:
        return math.ceil(self.eps_s * n)

    def scaled_capacities(self, capacities) -> tuple:
        return tuple(math.floor(self.eps_s * c) for c in capacities)

    def ef1_guaranteed(self, m: int) -> bool:
        return self.eps_b < Fraction(1, m)

    def to_dict(self) -> dict:
        return {
            "eps_b": fmt_fraction(self.eps_b),
            "eps_n": fmt_fraction(self.eps_n),
            "eps_f": fmt_fraction(self.eps_f),
            "eps_s": fmt_fraction(self.eps_s),
            "unseen_type_budget": fmt_fraction(self.unseen_type_budget),
            "sample_budget": fmt_fraction(self.sample_budget),
            "seed": self.seed,
            "batch_size": self.batch_size,
            "solver": self.solver.to_dict(),
        }


@dataclass(frozen=True)
class SamplePosterior:
    """What the mechanism learned from the sample: types seen, budgets, prices."""

    type_multiset: Counter
    budget_map: Mapping  # AgentType -> RandomBudget
    prices: tuple

    def budget_for(self, t: AgentType) -> RandomBudget | None:
        return self.budget_map.get(t)


@dataclass
class MechanismOutput:
    allocation: tuple  # bundle per arrival position
    agents: tuple  # agent id per arrival position
    budgets: tuple
    prices: tuple
    trace: tuple
    sample_size: int
    eceei: Eceei | None
    sample_economy: Economy
    posterior: SamplePosterior | None
    failure_flag: str | None = None
    params: MechanismParams | None = None

    def header(self) -> dict:
        return {
            "n": len(self.allocation),
            "sample_size": self.sample_size,
            "prices": [fmt_fraction(v) for v in self.prices],
            "failure_flag": self.failure_flag,
            "params": self.params.to_dict() if self.params else None,
            "eceei": eceei_to_dict(self.eceei) if self.eceei else None,
        }

    def trace_lines(self) -> list[str]:
        lines = [json.dumps(self.header(), separators=(",", ":"))]
        lines.extend(json.dumps(r, separators=(",", ":")) for r in self.trace)
        return lines

    def trace_jsonl(self) -> str:
        return "\n".join(self.trace_lines()) + "\n"


def _type_index(e: Economy) -> dict:
    return {t: i for i, t in enumerate(e.types.types)}


def run_sample_phase(e: Economy, params: MechanismParams) -> tuple[list, list]:
    """Serial dictatorship over the first ``s`` arrivals under floored caps."""
    s = params.sample_size(e.n)
    caps = params.scaled_capacities(e.capacities)
    used = [0] * e.m
    bundles, budgets = [], []
    for k in range(1, s + 1):
        t = e.type_at(k)
        x = next(y for y in t.order if all(u + v <= c for u, v, c in zip(used, y, caps)))
        used = [u + v for u, v in zip(used, x)]
        bundles.append(x)
        budgets.append(params.sample_budget)
    return bundles, budgets


def sample_economy(e: Economy, params: MechanismParams) -> Economy:
    s = params.sample_size(e.n)
    return Economy.build([e.type_at(k) for k in range(1, s + 1)], params.scaled_capacities(e.capacities))


def build_budget_map(sample_types, eceei: Eceei, sample: Economy) -> dict:
    """Sampled type -> its random budget (same for all agents of the type)."""
    budgets = eceei.budgets
    index = _type_index(sample)
    return {t: budgets[index[t]] for t in dict.fromkeys(sample_types)}


def allocate_online(
    t: AgentType,
    posterior: SamplePosterior,
    params: MechanismParams,
    rng: np.random.Generator | None = None,
    atom: int | None = None,
) -> tuple[Bundle, Fraction]:
    """Budget for the reported type, then the favourite affordable bundle.

    ``atom`` forces a particular budget atom (used to enumerate outcomes).
    """
    f = posterior.budget_for(t)
    if f is None:
        b = params.unseen_type_budget
    elif atom is not None:
        b = f.atoms[atom][0]
    else:
        b = f.draw(rng)
    return optimal_bundle(t, posterior.prices, b), b


def budget_rng(params: MechanismParams, position: int) -> np.random.Generator:
    return np.random.default_rng([params.seed, BUDGET_STREAM, position])


def solve_sample(sample: Economy, params: MechanismParams) -> Eceei:
    p, fa = solve_pseudoequilibrium(sample, params.eps_b, params.solver)
    return construct_eceei(sample, params.eps_b, p, fa)


def run_ocam(e: Economy, params: MechanismParams, draws: Mapping[int, int] | None = None) -> MechanismOutput:
    """Run the mechanism over ``e``'s arrival order.

    ``draws`` maps arrival positions to forced budget-atom indices; positions
    not listed draw from their own seeded stream.
    """
    s = params.sample_size(e.n)
    index = _type_index(e)
    bundles, budgets = run_sample_phase(e, params)
    sample = sample_economy(e, params)
    failure = None
    eceei = posterior = None
    try:
        eceei = solve_sample(sample, params)
    except SolverFailure as exc:
        failure = f"solver failure: {exc}; remaining arrivals served by serial dictatorship"
    if eceei is not None:
        sample_types = [e.type_at(k) for k in range(1, s + 1)]
        posterior = SamplePosterior(
            type_multiset=Counter(index[t] for t in sample_types),
            budget_map=build_budget_map(sample_types, eceei, sample),
            prices=eceei.prices,
        )
        prices = eceei.prices
        for k in range(s + 1, e.n + 1):
            forced = draws.get(k) if draws else None
            rng = None if forced is not None else budget_rng(params, k)
            x, b = allocate_online(e.type_at(k), posterior, params, rng, forced)
            bundles.append(x)
            budgets.append(b)
    else:
        prices = tuple(Fraction(0) for _ in range(e.m))
        used = [sum(x[j] for x in bundles) for j in range(e.m)]
        for k in range(s + 1, e.n + 1):
            t = e.type_at(k)
            x = next(y for y in t.order if all(u + v <= c for u, v, c in zip(used, y, e.capacities)))
            used = [u + v for u, v in zip(used, x)]
            bundles.append(x)
            budgets.append(params.sample_budget)

    trace = []
    cum = [0] * e.m
    for k, (x, b) in enumerate(zip(bundles, budgets), start=1):
        cum = [c + v for c, v in zip(cum, x)]
        trace.append(
            {
                "k": k,
                "agent": e.arrival[k - 1],
                "type": index[e.type_at(k)],
                "batch": (k - 1) // params.batch_size,
                "phase": "sample" if k <= s else "online",
                "bundle": list(bundle_goods(x)),
                "budget": fmt_fraction(b),
                "cum": list(cum),
            }
        )
    return MechanismOutput(
        allocation=tuple(bundles),
        agents=tuple(e.arrival),
        budgets=tuple(budgets),
        prices=tuple(prices),
        trace=tuple(trace),
        sample_size=s,
        eceei=eceei,
        sample_economy=sample,
        posterior=posterior,
        failure_flag=failure,
        params=params,
    )


def shuffled(e: Economy, seed: int, trial: int) -> Economy:
    """``e`` with a uniformly random arrival order drawn from its own stream."""
    rng = np.random.default_rng([seed, ARRIVAL_STREAM, trial])
    return e.with_arrival(tuple(int(a) for a in rng.permutation(np.arange(1, e.n + 1))))


__all__ = [
    "MechanismOutput",
    "MechanismParams",
    "SamplePosterior",
    "allocate_online",
    "build_budget_map",
    "run_ocam",
    "run_sample_phase",
]
