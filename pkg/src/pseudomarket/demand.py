"""Budgeted demand and the log-penalised auxiliary utility.

Prices and budgets are exact rationals; the auxiliary utility is a float
because of the logarithm, and ties between bundles are decided with
``TIE_TOL``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Sequence

from .economy import AgentType, Bundle, as_fraction, bundle_cost

# natural log; only monotonicity and log(1) = 0 matter to the construction
LOG = math.log
NEG_INF = -math.inf
TIE_TOL = 1e-9


def as_prices(p: Sequence) -> tuple[Fraction, ...]:
    prices = tuple(as_fraction(v) for v in p)
    if any(v < 0 for v in prices):
        raise ValueError("prices must be nonnegative")
    return prices


class RankUtility:
    """Bottom-up integer ranks: ∅ ↦ 0, ..., best ↦ |Ψ| - 1; infeasible ↦ -inf."""

    def __init__(self, t: AgentType):
        self._rank = {x: t.rank(x) for x in t.order}

    def __call__(self, x: Bundle) -> float:
        r = self._rank.get(tuple(x))
        return NEG_INF if r is None else r

    def items(self):
        return self._rank.items()


def rank_utility(t: AgentType) -> RankUtility:
    return RankUtility(t)


def optimal_bundle(t: AgentType, p: Sequence, b) -> Bundle:
    """Most preferred bundle of ``t`` whose cost at ``p`` is at most ``b``.

    The empty bundle is always affordable, so the result is total.
    """
    prices = as_prices(p)
    budget = as_fraction(b)
    for x in t.order:
        if bundle_cost(prices, x) <= budget:
            return x
    raise ValueError("type has no affordable bundle (empty bundle missing?)")


def _check_eps(eps) -> Fraction:
    eps = as_fraction(eps)
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return eps


def auxiliary_utility(
    t: AgentType,
    x: Bundle,
    p: Sequence,
    eps,
    utility: Callable[[Bundle], float] | None = None,
) -> float:
    eps = _check_eps(eps)
    r = (utility or rank_utility(t))(x)
    if r == NEG_INF:
        return NEG_INF
    cost = bundle_cost(as_prices(p), x)
    if cost >= 1:
        return NEG_INF
    slack = (1 - cost) / eps
    return r + min(0.0, LOG(slack)) if slack < 1 else float(r)


def auxiliary_utilities(t: AgentType, p: Sequence, eps) -> dict[Bundle, float]:
    eps = _check_eps(eps)
    prices = as_prices(p)
    ranks = rank_utility(t)
    return {x: auxiliary_utility(t, x, prices, eps, ranks) for x in t.order}


def choice_set(t: AgentType, p: Sequence, eps, tol: float = TIE_TOL) -> frozenset:
    """All feasible bundles within ``tol`` of the maximal auxiliary utility."""
    utils = auxiliary_utilities(t, p, eps)
    best = max(utils.values())
    return frozenset(x for x, u in utils.items() if u >= best - tol)
