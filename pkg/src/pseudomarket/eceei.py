"""Pseudoequilibria, random budgets, and the expected-equilibrium object.

Everything here is exact over ``Fraction`` except choice-set membership,
which goes through the logarithm in the auxiliary utility (``TIE_TOL``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .demand import TIE_TOL, as_prices, choice_set, optimal_bundle
from .economy import (
    AgentType,
    Bundle,
    Economy,
    as_fraction,
    bundle_cost,
    bundle_from_goods,
    bundle_goods,
    bundle_label,
    fmt_fraction,
)
from .report import Report
from .simplex import linprog_exact

CLEAR_TOL = 1e-9


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class FractionalAllocation:
    """Per-agent points ``x*_i`` (agent id order) with their bundle supports."""

    x_star: tuple
    support: tuple

    @classmethod
    def from_supports(cls, supports: Sequence[Sequence[tuple]]) -> FractionalAllocation:
        supports = tuple(tuple((tuple(y), Fraction(w)) for y, w in s) for s in supports)
        return cls(tuple(_average(s) for s in supports), supports)

    @classmethod
    def from_type_supports(cls, e: Economy, per_type: Sequence[Sequence[tuple]]) -> FractionalAllocation:
        return cls.from_supports([per_type[t] for t in e.types.assignment])


def _average(support) -> tuple:
    m = len(support[0][0])
    return tuple(sum((w * y[j] for y, w in support), Fraction(0)) for j in range(m))


@dataclass(frozen=True)
class RandomBudget:
    atoms: tuple  # (value, probability), values strictly increasing

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> RandomBudget:
        merged: dict[Fraction, Fraction] = {}
        for v, q in pairs:
            v = as_fraction(v)
            merged[v] = merged.get(v, Fraction(0)) + as_fraction(q)
        return cls(tuple(sorted(merged.items())))

    @property
    def values(self) -> tuple:
        return tuple(v for v, _ in self.atoms)

    @property
    def probabilities(self) -> tuple:
        return tuple(q for _, q in self.atoms)

    def expectation(self) -> Fraction:
        return sum((v * q for v, q in self.atoms), Fraction(0))

    def draw_index(self, u: float) -> int:
        """Atom index selected by a uniform draw ``u`` in [0, 1)."""
        u = Fraction(u)
        acc = Fraction(0)
        for i, (_, q) in enumerate(self.atoms):
            acc += q
            if u < acc:
                return i
        return len(self.atoms) - 1

    def draw(self, rng: np.random.Generator) -> Fraction:
        return self.atoms[self.draw_index(float(rng.random()))][0]

    def is_close_to_one(self, eps) -> bool:
        eps = as_fraction(eps)
        return all(1 - eps <= v <= 1 for v in self.values) and sum(self.probabilities) == 1


@dataclass(frozen=True)
class LotteryAtom:
    bundle: Bundle
    budget: Fraction
    prob: Fraction


@dataclass(frozen=True)
class Eceei:
    """Prices plus, per type of the economy's type table, a budget-bundle lottery.

    ``atoms[t]`` pairs every lottery bundle with the budget value that buys it;
    ``budgets`` and ``lotteries`` are the two marginals.
    """

    eps: Fraction
    prices: tuple
    atoms: tuple

    @property
    def budgets(self) -> tuple:
        return tuple(RandomBudget.from_pairs((a.budget, a.prob) for a in atoms) for atoms in self.atoms)

    @property
    def lotteries(self) -> tuple:
        return tuple(tuple((a.bundle, a.prob) for a in atoms) for atoms in self.atoms)

    def expected_demand(self, e: Economy) -> tuple:
        """Sum over agents of E[optimal bundle at the drawn budget]."""
        totals = [Fraction(0)] * e.m
        counts = e.type_counts()
        for t, (atoms, n_t) in enumerate(zip(self.atoms, counts)):
            if not n_t:
                continue
            agent_type = e.types.types[t]
            budget = self.budgets[t]
            for v, q in budget.atoms:
                x = optimal_bundle(agent_type, self.prices, v)
                for j in range(e.m):
                    if x[j]:
                        totals[j] += n_t * q
        return tuple(totals)


# ---------------------------------------------------------------- budgets and lotteries


def budget_of_bundle(p: Sequence, y: Bundle, eps) -> Fraction:
    """Budget that makes ``y`` the affordable optimum: ``max(1 - eps, p·y)``."""
    eps = as_fraction(eps)
    cost = bundle_cost(as_prices(p), y)
    if cost >= 1:
        raise ValueError(f"bundle {bundle_label(y)} costs {cost} >= 1")
    return 1 - eps if cost <= 1 - eps else cost


class DecompositionError(ValueError):
    """``x*`` lies outside the hull; ``certificate = (a, beta)`` separates it.

    ``a·y <= beta`` for every candidate ``y`` while ``a·x* > beta``.
    """

    def __init__(self, x_star, certificate):
        self.x_star = x_star
        self.certificate = certificate
        a, beta = certificate
        super().__init__(f"point outside convex hull; separating (a={list(map(str, a))}, beta={beta})")


def decompose_to_lottery(x_star: Sequence, support_candidates: Iterable[Bundle]) -> list[tuple]:
    """Exact convex weights over candidates averaging to ``x_star``.

    A basic solution of the ``m + 1`` equality rows, so at most ``m + 1``
    bundles get positive weight.
    """
    x = [as_fraction(v) for v in x_star]
    cands = sorted({tuple(y) for y in support_candidates}, key=lambda y: (-sum(y), y))
    m = len(x)
    A_eq = [[1] * len(cands)] + [[y[j] for y in cands] for j in range(m)]
    res = linprog_exact([0] * len(cands), A_eq=A_eq, b_eq=[1] + x)
    if not res.ok:
        raise DecompositionError(x, _separate(x, cands))
    return [(y, w) for y, w in zip(cands, res.x) if w > 0]


def _separate(x: list, cands: list) -> tuple:
    # max a·x - beta  s.t.  a·y <= beta,  -1 <= a <= 1;  a = ap - an, beta = bp - bn
    m = len(x)
    c = [-v for v in x] + list(x) + [1, -1]
    A_ub = [list(y) + [-v for v in y] + [-1, 1] for y in cands]
    b_ub = [0] * len(cands)
    for j in range(m):
        row = [0] * (2 * m + 2)
        row[j] = 1
        A_ub.append(row)
        b_ub.append(1)
        row = [0] * (2 * m + 2)
        row[m + j] = 1
        A_ub.append(row)
        b_ub.append(1)
    res = linprog_exact(c, A_ub=A_ub, b_ub=b_ub)
    v = res.x
    a = tuple(v[j] - v[m + j] for j in range(m))
    return a, v[2 * m] - v[2 * m + 1]


def construct_eceei(e: Economy, eps, p: Sequence, fa: FractionalAllocation) -> Eceei:
    """Per type: decompose the type's mean point over its choice set and
    give each lottery bundle the budget that buys it."""
    eps = as_fraction(eps)
    prices = as_prices(p)
    members: dict[int, list[int]] = {}
    for i, t in enumerate(e.types.assignment):
        members.setdefault(t, []).append(i)
    atoms = []
    for t, agent_type in enumerate(e.types.types):
        ids = members.get(t, [])
        if not ids:
            atoms.append(())
            continue
        mean = tuple(sum((fa.x_star[i][j] for i in ids), Fraction(0)) / len(ids) for j in range(e.m))
        lottery = decompose_to_lottery(mean, choice_set(agent_type, prices, eps))
        atoms.append(tuple(LotteryAtom(y, budget_of_bundle(prices, y, eps), w) for y, w in lottery))
    return Eceei(eps, prices, tuple(atoms))


# ---------------------------------------------------------------- verification


def _clearing(report: Report, totals, e: Economy, prices, tol: float) -> None:
    worst = Fraction(0)
    for j, (d, c) in enumerate(zip(totals, e.capacities)):
        gap = d - c
        worst = max(worst, abs(gap) if prices[j] > 0 else max(gap, Fraction(0)))
        if gap > tol:
            report.fail(condition="overflow", good=j, demand=fmt_fraction(d), capacity=c)
        elif prices[j] > 0 and -gap > tol:
            report.fail(condition="clearing", good=j, demand=fmt_fraction(d), capacity=c, price=fmt_fraction(prices[j]))
    report.notes["max_clearing_error"] = float(worst)
    report.notes["exact_clearing"] = worst == 0


def verify_pseudoequilibrium(
    e: Economy,
    eps,
    p: Sequence,
    fa: FractionalAllocation,
    tol: float = CLEAR_TOL,
    tie_tol: float = TIE_TOL,
) -> Report:
    eps = as_fraction(eps)
    report = Report("pseudoequilibrium", notes={"tie_tolerance": tie_tol, "clearing_tolerance": tol})
    prices = as_prices(p)
    if len(prices) != e.m or len(fa.support) != e.n:
        report.fail(condition="shape", m=e.m, n=e.n)
        return report
    cache: dict[int, frozenset] = {}
    for i, (x, support) in enumerate(zip(fa.x_star, fa.support), start=1):
        t = e.types.assignment[i - 1]
        weights = [w for _, w in support]
        if any(w < 0 for w in weights) or sum(weights) != 1 or not support:
            report.fail(condition="convexity", agent=i, weights=[fmt_fraction(w) for w in weights])
            continue
        if tuple(x) != _average(support):
            report.fail(condition="convexity", agent=i, detail="x* is not the weighted average of its support")
        if t not in cache:
            cache[t] = choice_set(e.types.types[t], prices, eps, tie_tol)
        for y, w in support:
            if w > 0 and y not in cache[t]:
                report.fail(condition="choice", agent=i, bundle=list(bundle_goods(y)))
    totals = [sum((x[j] for x in fa.x_star), Fraction(0)) for j in range(e.m)]
    _clearing(report, totals, e, prices, tol)
    return report


def verify_eceei(e: Economy, x: Eceei, tol: float = CLEAR_TOL) -> Report:
    report = Report("eceei", notes={"clearing_tolerance": tol})
    if len(x.prices) != e.m or len(x.atoms) != e.types.tau:
        report.fail(condition="shape", m=e.m, tau=e.types.tau)
        return report
    counts = e.type_counts()
    for t, atoms in enumerate(x.atoms):
        if not counts[t]:
            continue
        if sum(a.prob for a in atoms) != 1 or any(a.prob < 0 for a in atoms):
            report.fail(condition="probabilities", type=t)
        for a in atoms:
            if not 1 - x.eps <= a.budget <= 1:
                report.fail(condition="c", type=t, budget=fmt_fraction(a.budget))
            got = optimal_bundle(e.types.types[t], x.prices, a.budget)
            if got != a.bundle:
                report.fail(
                    condition="d",
                    type=t,
                    budget=fmt_fraction(a.budget),
                    lottery_bundle=list(bundle_goods(a.bundle)),
                    optimal_bundle=list(bundle_goods(got)),
                )
    totals = x.expected_demand(e)
    before = len(report.violations)
    _clearing(report, totals, e, x.prices, tol)
    for v in report.violations[before:]:
        v["condition"] = "a" if v["condition"] == "overflow" else "b"
    return report


# ---------------------------------------------------------------- serialization


def eceei_to_dict(x: Eceei) -> dict:
    return {
        "eps": fmt_fraction(x.eps),
        "prices": [fmt_fraction(v) for v in x.prices],
        "types": [
            {
                "budget": [[fmt_fraction(v), fmt_fraction(q)] for v, q in budget.atoms],
                "lottery": [[list(bundle_goods(y)), fmt_fraction(q)] for y, q in lottery],
                "atoms": [[list(bundle_goods(a.bundle)), fmt_fraction(a.budget), fmt_fraction(a.prob)] for a in atoms],
            }
            for budget, lottery, atoms in zip(x.budgets, x.lotteries, x.atoms)
        ],
    }


def eceei_from_dict(doc: dict) -> Eceei:
    eps = Fraction(doc["eps"])
    prices = tuple(Fraction(v) for v in doc["prices"])
    m = len(prices)
    atoms = []
    for entry in doc["types"]:
        if "atoms" in entry:
            atoms.append(
                tuple(LotteryAtom(bundle_from_goods(g, m), Fraction(b), Fraction(q)) for g, b, q in entry["atoms"])
            )
        else:
            atoms.append(
                tuple(
                    LotteryAtom(y, budget_of_bundle(prices, y, eps), Fraction(q))
                    for y, q in ((bundle_from_goods(g, m), q) for g, q in entry["lottery"])
                )
            )
    return Eceei(eps, prices, tuple(atoms))


def save_eceei(x: Eceei) -> bytes:
    return json.dumps(eceei_to_dict(x), separators=(",", ":")).encode()


def load_eceei(data: bytes | str) -> Eceei:
    return eceei_from_dict(json.loads(data))


__all__ = [
    "AgentType",
    "Eceei",
    "FractionalAllocation",
    "LotteryAtom",
    "RandomBudget",
    "DecompositionError",
    "budget_of_bundle",
    "construct_eceei",
    "decompose_to_lottery",
    "verify_eceei",
    "verify_pseudoequilibrium",
]
