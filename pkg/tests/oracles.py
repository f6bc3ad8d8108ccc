"""Independent reference implementations used to cross-check the package.

Nothing here imports the package's demand, solver, or verifier code; types
are read only through their ``order`` tuples.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


def ranks(order):
    return {x: len(order) - 1 - i for i, x in enumerate(order)}


def aux_utility(order, x, p, eps):
    r = ranks(order).get(tuple(x))
    if r is None:
        return -math.inf
    cost = sum(float(pj) * xj for pj, xj in zip(p, x))
    if cost >= 1:
        return -math.inf
    return r + min(0.0, math.log((1 - cost) / float(eps)))


def brute_choice_set(order, p, eps, tol=1e-9):
    u = {x: aux_utility(order, x, p, eps) for x in order}
    best = max(u.values())
    return {x for x, v in u.items() if v >= best - tol}


def brute_optimal(order, p, b):
    for x in order:
        if sum(Fraction(pj) * xj for pj, xj in zip(p, x)) <= b:
            return x
    raise AssertionError("empty bundle missing")


def clearing_feasible(orders, counts, caps, p, eps, tol=1e-9):
    """Float LP: convex weights over brute-force choice sets clearing the market."""
    m = len(caps)
    chs = [sorted(brute_choice_set(o, p, eps)) for o in orders]
    var = [(t, y) for t, ch in enumerate(chs) for y in ch]
    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    for t in range(len(orders)):
        A_eq.append([1.0 if tt == t else 0.0 for tt, _ in var])
        b_eq.append(1.0)
    for j in range(m):
        row = [counts[t] * y[j] for t, y in var]
        if float(p[j]) > 0:
            A_eq.append(row)
            b_eq.append(caps[j])
        else:
            A_ub.append(row)
            b_ub.append(caps[j])
    res = linprog(
        np.zeros(len(var)),
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=b_ub or None,
        A_eq=np.array(A_eq),
        b_eq=b_eq,
        bounds=[(0, None)] * len(var),
        method="highs",
    )
    return res.status == 0


def literal_grid(orders, counts, caps, eps, density=64):
    """Grid points ``k/density`` at which a clearing mixture exists."""
    m = len(caps)
    hits = []
    for point in itertools.product(range(density + 1), repeat=m):
        p = [Fraction(k, density) for k in point]
        if clearing_feasible(orders, counts, caps, p, eps):
            hits.append(tuple(p))
    return hits


def check_pseudo(orders_by_agent, caps, eps, p, supports, tol=1e-9):
    """Independent pseudoequilibrium check; returns a list of problems."""
    problems = []
    m = len(caps)
    totals = [Fraction(0)] * m
    for i, (order, sup) in enumerate(zip(orders_by_agent, supports)):
        if sum(w for _, w in sup) != 1 or any(w < 0 for _, w in sup):
            problems.append(("weights", i))
        ch = brute_choice_set(order, p, eps)
        for y, w in sup:
            if w > 0 and tuple(y) not in ch:
                problems.append(("choice", i, y))
            for j in range(m):
                totals[j] += w * y[j]
    for j in range(m):
        if totals[j] > caps[j] + tol:
            problems.append(("overflow", j))
        if p[j] > 0 and totals[j] < caps[j] - tol:
            problems.append(("clearing", j))
    return problems


def weakly_prefers(order, x, y):
    r = ranks(order)
    rx, ry = r.get(tuple(x)), r.get(tuple(y))
    if ry is None:
        return True if rx is not None else tuple(x) == tuple(y)
    if rx is None:
        return False
    return rx >= ry


def brute_ef1(orders, alloc):
    """Pairs (i, i') violating EF1, with infeasible bundles ranked lowest."""
    bad = []
    m = len(alloc[0])
    for i, oi in enumerate(orders):
        for i2 in range(len(orders)):
            if i == i2:
                continue
            x, y = alloc[i], alloc[i2]
            if weakly_prefers(oi, x, y):
                continue
            if any(weakly_prefers(oi, x, tuple(0 if g == j else y[g] for g in range(m))) for j in range(m)):
                continue
            bad.append((i, i2))
    return bad


def brute_pareto_dominator(orders, alloc, caps):
    """First allocation (over full feasible sets) fitting ``caps`` that
    weakly improves everyone and strictly someone, else ``None``."""
    m = len(caps)
    for cand in itertools.product(*orders):
        if any(sum(x[j] for x in cand) > caps[j] for j in range(m)):
            continue
        if all(weakly_prefers(o, c, a) for o, c, a in zip(orders, cand, alloc)) and any(
            tuple(c) != tuple(a) for c, a in zip(cand, alloc)
        ):
            return cand
    return None


def recheck_daceei(orders_by_position, capacities, alloc, budgets, prices, eps_b, eps_n, eps_f):
    """Set of (condition, k) failures, computed directly from the conditions."""
    n = len(alloc)
    m = len(capacities)
    out = set()
    for k in range(math.ceil(eps_n * n), n + 1):
        if k < 1:
            continue
        order = orders_by_position[k - 1]
        if brute_optimal(order, prices, budgets[k - 1]) != tuple(alloc[k - 1]):
            out.add(("i", k))
        if not (1 - eps_b <= budgets[k - 1] <= 1):
            out.add(("ii", k))
        for j in range(m):
            used = sum(alloc[i][j] for i in range(k))
            if Fraction(used) > (1 + eps_f) * Fraction(k * capacities[j], n):
                out.add(("iii", k))
            if prices[j] > 0 and Fraction(used) < (1 - eps_f) * Fraction(k * capacities[j], n):
                out.add(("iv", k))
    return out
