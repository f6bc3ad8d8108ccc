"""Checks on mechanism outputs: per-prefix clearing, EF1, Pareto, and
group manipulation up to one object (exhaustive, small instances only).

The checks read ``MechanismOutput`` fields and call ``run_ocam`` as a black
box; they never reach into the mechanism's internals.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterable, Sequence

from .demand import optimal_bundle
from .economy import AgentType, Bundle, Economy, bundle_goods, bundle_minus, empty_bundle, fmt_fraction
from .ocam import MechanismOutput, MechanismParams, run_ocam
from .report import NOT_CHECKED, Report

PARETO_BUDGET = 10**7
GSP_BUDGET = 10**7


def daceei_range(n: int, params: MechanismParams) -> range:
    return range(max(1, math.ceil(params.eps_n * n)), n + 1)


def check_daceei(out: MechanismOutput, e: Economy, params: MechanismParams) -> Report:
    """Conditions (i)-(iv) at every prefix ``k`` from ``ceil(eps_n·n)`` to ``n``."""
    n = e.n
    report = Report("daceei", notes={"params": params.to_dict(), "k_from": math.ceil(params.eps_n * n)})
    if out.failure_flag:
        report.notes["failure_flag"] = out.failure_flag
    p = out.prices
    cum = [0] * e.m
    ks = daceei_range(n, params)
    for k in range(1, n + 1):
        x = out.allocation[k - 1]
        cum = [c + v for c, v in zip(cum, x)]
        if k not in ks:
            continue
        b = Fraction(out.budgets[k - 1])
        t = e.type_at(k)
        best = optimal_bundle(t, p, b)
        if best != x:
            report.fail(condition="i", k=k, agent=e.arrival[k - 1], bundle=list(bundle_goods(x)), optimal=list(bundle_goods(best)))
        if not 1 - params.eps_b <= b <= 1:
            report.fail(condition="ii", k=k, agent=e.arrival[k - 1], budget=fmt_fraction(b))
        for j, (used, c) in enumerate(zip(cum, e.capacities)):
            if n * used > (1 + params.eps_f) * k * c:
                report.fail(condition="iii", k=k, good=j, consumed=used, rate=fmt_fraction(Fraction(k * c, n)))
            if p[j] > 0 and n * used < (1 - params.eps_f) * k * c:
                report.fail(condition="iv", k=k, good=j, consumed=used, rate=fmt_fraction(Fraction(k * c, n)))
    return report


def _ef1_ok(t: AgentType, x: Bundle, other: Bundle) -> tuple[bool, bool]:
    """(no envy up to one object, infeasible-bundle convention used)."""
    invoked = t.rank(other) is None
    if t.weakly_prefers(x, other):
        return True, invoked
    for j in range(len(other)):
        y = bundle_minus(other, j)
        invoked = invoked or t.rank(y) is None
        if t.weakly_prefers(x, y):
            return True, invoked
    return False, invoked


def check_ef1(alloc: Sequence[Bundle], e: Economy, agents: Iterable[int]) -> Report:
    """EF1 among the given arrival positions (1-based)."""
    agents = list(agents)
    report = Report("ef1", notes={"agents": len(agents)})
    invoked = 0
    for i in agents:
        t = e.type_at(i)
        for i2 in agents:
            if i2 == i:
                continue
            ok, used = _ef1_ok(t, alloc[i - 1], alloc[i2 - 1])
            invoked += used
            if not ok:
                report.fail(k=i, envied=i2, bundle=list(bundle_goods(alloc[i - 1])), other=list(bundle_goods(alloc[i2 - 1])))
    report.notes["infeasible_comparisons"] = invoked
    if invoked:
        report.notes["convention"] = "bundles outside an agent's feasible set rank below all of its feasible bundles"
    return report


def check_pareto(
    alloc: Sequence[Bundle],
    e: Economy,
    realized_caps: Sequence[int] | None = None,
    agents: Iterable[int] | None = None,
    budget: int = PARETO_BUDGET,
) -> Report:
    """Search for a reallocation among ``agents`` (arrival positions) that
    fits the realised consumption and Pareto dominates ``alloc``."""
    agents = list(range(1, e.n + 1) if agents is None else agents)
    if realized_caps is None:
        realized_caps = [sum(alloc[k - 1][j] for k in agents) for j in range(e.m)]
    report = Report("pareto", notes={"agents": len(agents), "realized_caps": list(realized_caps)})
    options = []
    for k in agents:
        t = e.type_at(k)
        r = t.rank(alloc[k - 1])
        if r is None:
            report.fail(condition="infeasible", k=k)
            return report
        options.append(t.order[: t.order.index(alloc[k - 1]) + 1])  # weakly better bundles
    size = math.prod(len(o) for o in options)
    report.notes["search_space"] = size
    if size > budget:
        report.status = NOT_CHECKED
        return report

    m = e.m
    caps = list(realized_caps)
    chosen: list[Bundle] = []

    def dfs(pos: int, used: list, strict: bool) -> bool:
        if pos == len(options):
            return strict
        current = alloc[agents[pos] - 1]
        for y in options[pos]:
            nxt = [u + v for u, v in zip(used, y)]
            if any(u > c for u, c in zip(nxt, caps)):
                continue
            chosen.append(y)
            if dfs(pos + 1, nxt, strict or y != current):
                return True
            chosen.pop()
        return False

    if dfs(0, [0] * m, False):
        report.fail(witness=[{"k": k, "bundle": list(bundle_goods(y))} for k, y in zip(agents, chosen)])
    return report


# ---------------------------------------------------------------- group manipulation


def full_type_space(m: int) -> list[AgentType]:
    """Every feasible set containing the empty bundle, with every strict order
    of its nonempty bundles (the empty bundle last)."""
    nonempty = [x for x in itertools.product((0, 1), repeat=m) if any(x)]
    out = []
    for r in range(len(nonempty) + 1):
        for subset in itertools.combinations(nonempty, r):
            for perm in itertools.permutations(subset):
                out.append(AgentType.from_order(list(perm) + [empty_bundle(m)]))
    return out


class OutcomeOracle:
    """Per-position realisation sets of the mechanism, memoised per report profile."""

    def __init__(self, capacities: Sequence[int], params: MechanismParams, budget: int = GSP_BUDGET):
        self.capacities = tuple(capacities)
        self.params = params
        self.budget = budget
        self.cache: dict[tuple, tuple] = {}
        self.runs = 0

    def supports(self, profile: tuple) -> tuple | None:
        """Realisation set per arrival position; ``None`` when over budget."""
        if profile in self.cache:
            return self.cache[profile]
        e = Economy.build(list(profile), self.capacities)
        base = run_ocam(e, self.params)
        self.runs += 1
        n_atoms = []
        for k in range(base.sample_size + 1, e.n + 1):
            f = base.posterior.budget_for(profile[k - 1]) if base.posterior else None
            n_atoms.append(range(len(f.atoms)) if f else range(1))
        positions = list(range(base.sample_size + 1, e.n + 1))
        if math.prod(len(a) for a in n_atoms) > self.budget:
            self.cache[profile] = None
            return None
        sets = [set() for _ in range(e.n)]
        for combo in itertools.product(*n_atoms):
            out = run_ocam(e, self.params, dict(zip(positions, combo))) if base.posterior else base
            self.runs += 1
            for k, x in enumerate(out.allocation):
                sets[k].add(x)
        result = tuple(frozenset(s) for s in sets)
        self.cache[profile] = result
        return result


def _weakly_worse_everywhere(t: AgentType, truthful: frozenset, manip: frozenset) -> bool:
    return all(t.weakly_prefers(x, y) for x in truthful for y in manip)


def _dominated_up_to_one(t: AgentType, truthful: frozenset, manip: frozenset) -> bool:
    return all(_ef1_ok(t, x, y)[0] for x in truthful for y in manip)


def check_group_sp_up_to_one(
    e: Economy,
    params: MechanismParams,
    group_max: int,
    type_space: Sequence[AgentType] | None = None,
    oracle: OutcomeOracle | None = None,
) -> Report:
    """Every group of at most ``group_max`` arrival positions and every joint
    report from ``type_space``, under ``e``'s fixed arrival order."""
    e = e.in_arrival_order()
    type_space = list(type_space if type_space is not None else full_type_space(e.m))
    oracle = oracle or OutcomeOracle(e.capacities, params)
    truth = tuple(e.type_at(k) for k in range(1, e.n + 1))
    report = Report("group_sp_up_to_one", notes={"group_max": group_max, "arrival": "fixed"})
    base = oracle.supports(truth)
    if base is None:
        report.status = NOT_CHECKED
        return report
    cache_i: dict = {}
    cache_ii: dict = {}
    checked = 0
    for size in range(1, group_max + 1):
        for group in itertools.combinations(range(e.n), size):
            for reports in itertools.product(type_space, repeat=size):
                profile = list(truth)
                for g, t in zip(group, reports):
                    profile[g] = t
                alt = oracle.supports(tuple(profile))
                if alt is None:
                    report.status = NOT_CHECKED
                    report.notes["profiles_checked"] = checked
                    return report
                checked += 1
                cond_i = False
                cond_ii = True
                for g in group:
                    key = (truth[g], base[g], alt[g])
                    if key not in cache_i:
                        cache_i[key] = _weakly_worse_everywhere(*key)
                        cache_ii[key] = _dominated_up_to_one(*key)
                    cond_i = cond_i or cache_i[key]
                    cond_ii = cond_ii and cache_ii[key]
                if not (cond_i or cond_ii):
                    report.fail(
                        group=[g + 1 for g in group],
                        misreport=[[list(bundle_goods(x)) for x in t.order] for t in reports],
                        truthful={g + 1: sorted(list(bundle_goods(x)) for x in base[g]) for g in group},
                        manipulated={g + 1: sorted(list(bundle_goods(x)) for x in alt[g]) for g in group},
                    )
    report.notes["profiles_checked"] = checked
    return report


def market_trajectory_stats(out: MechanismOutput, e: Economy, params: MechanismParams) -> dict:
    """Normalised margins ``cum_kj / (k·c_j/n) - 1`` for every prefix and good."""
    n = e.n
    rows = []
    cum = [0] * e.m
    k_from = math.ceil(params.eps_n * n)
    lo = [math.inf] * e.m
    hi = [-math.inf] * e.m
    for k, x in enumerate(out.allocation, start=1):
        cum = [c + v for c, v in zip(cum, x)]
        for j, (used, c) in enumerate(zip(cum, e.capacities)):
            margin = Fraction(used * n, k * c) - 1
            rows.append((k, j, margin))
            if k >= k_from:
                lo[j] = min(lo[j], margin)
                hi[j] = max(hi[j], margin)
    summary = [
        {"good": j, "min": float(lo[j]), "max": float(hi[j]), "priced": out.prices[j] > 0} for j in range(e.m)
    ]
    return {"k_from": k_from, "rows": rows, "summary": summary}


__all__ = [
    "check_daceei",
    "check_ef1",
    "check_group_sp_up_to_one",
    "check_pareto",
    "full_type_space",
    "market_trajectory_stats",
]
