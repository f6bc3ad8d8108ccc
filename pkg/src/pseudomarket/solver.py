"""Pseudoequilibrium search: sign tâtonnement with a dyadic grid fallback.

Both drivers reduce to the same exact step: given a small box of prices,
``Market.solve_box`` decides whether a pseudoequilibrium lies in it and, if
so, returns prices at which ties hold to machine precision. The result is
then rebuilt in exact arithmetic (choice sets at rational prices, a rational
basic solution of the clearing program) and verified before it is returned.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ._search import PRUNE_TOL, Market
from .demand import TIE_TOL, choice_set
from .economy import AgentType, Economy, as_fraction
from .eceei import FractionalAllocation, verify_pseudoequilibrium
from .simplex import linprog_exact

METHODS = ("auto", "tatonnement", "grid")
PRICE_DENOMINATOR = 10**12


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-9
    grid_density: int = 64
    grid_max_goods: int = 3
    max_iters: int = 400
    step: float = 1.0
    patience: int = 60
    method: str = "auto"
    seed: int = 0
    box_time_limit: float = 30.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class SolverFailure(RuntimeError):
    def __init__(self, residual: float, iterations: int, method: str):
        self.residual = residual
        self.iterations = iterations
        self.method = method
        super().__init__(f"{method}: no pseudoequilibrium found (best residual {residual:.3g} after {iterations} iterations)")


@dataclass(frozen=True)
class TypeSolution:
    """Solver output at the type level (types in the order they were given)."""

    prices: tuple
    supports: tuple  # per type: tuple of (bundle, weight)
    method: str
    iterations: int


# ---------------------------------------------------------------- exact rebuild


def _exact_supports(types, counts, caps, eps, prices):
    """Rational clearing weights over the exact choice sets, or ``None``."""
    m = len(caps)
    chs = [sorted(choice_set(t, prices, eps)) for t in types]
    fixed = [Fraction(0)] * m
    var = []  # (type index, bundle)
    for ti, (ch, n_t) in enumerate(zip(chs, counts)):
        if len(ch) == 1:
            for j in range(m):
                fixed[j] += n_t * ch[0][j]
        else:
            var.extend((ti, y) for y in ch)
    multi = sorted({ti for ti, _ in var})
    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    for ti in multi:
        A_eq.append([1 if tj == ti else 0 for tj, _ in var])
        b_eq.append(1)
    for j in range(m):
        row = [counts[ti] * y[j] for ti, y in var]
        rhs = caps[j] - fixed[j]
        if prices[j] > 0:
            A_eq.append(row)
            b_eq.append(rhs)
        else:
            A_ub.append(row)
            b_ub.append(rhs)
    if var:
        res = linprog_exact([0] * len(var), A_ub=A_ub or None, b_ub=b_ub or None, A_eq=A_eq or None, b_eq=b_eq or None)
        if not res.ok:
            return None
        weights = res.x
    else:
        if any(fixed[j] > caps[j] or (prices[j] > 0 and fixed[j] != caps[j]) for j in range(m)):
            return None
        weights = []
    supports = []
    for ti, ch in enumerate(chs):
        if len(ch) == 1:
            supports.append(((ch[0], Fraction(1)),))
        else:
            supports.append(tuple((y, w) for (tj, y), w in zip(var, weights) if tj == ti and w > 0))
    return tuple(supports)


def _rational_prices(p: np.ndarray) -> tuple:
    return tuple(Fraction(float(v)).limit_denominator(PRICE_DENOMINATOR) if v > 0 else Fraction(0) for v in p)


class _Search:
    def __init__(self, types, counts, caps, eps, cfg: SolverConfig):
        self.types, self.counts, self.caps = types, counts, caps
        self.eps = eps
        self.cfg = cfg
        self.market = Market(types, counts, caps, eps)
        self.best_residual = math.inf
        self.iterations = 0

    def try_box(self, lo, hi):
        lo = np.clip(lo, 0.0, 1.0)
        hi = np.clip(hi, 0.0, 1.0)
        residual, _ = self.market.box_residual(lo, hi)
        if residual > PRUNE_TOL:
            return None
        sol = self.market.solve_box(lo, hi, self.cfg.box_time_limit)
        if sol is None:
            return None
        prices = _rational_prices(sol.prices)
        supports = _exact_supports(self.types, self.counts, self.caps, self.eps, prices)
        if supports is None:
            return None
        return prices, supports

    # -- sign tâtonnement -------------------------------------------------
    def tatonnement(self):
        """Sign steps on log-slack ``s_j = ln(1 - p_j)``.

        Equilibrium prices crowd towards 1 (ties sit at ``1 - eps·e^-k``), and
        the auxiliary utility of a single good is linear in this coordinate.
        The step direction is the sign of the convexified excess demand over
        the price box spanned by twice the current step; once that relaxation
        clears, the box is searched exactly.
        """
        cfg, mk = self.cfg, self.market
        rng = np.random.default_rng([cfg.seed, 0x7A7])
        s = np.zeros(mk.m)
        k = 0
        last_gain = 0
        for it in range(cfg.max_iters):
            self.iterations = it + 1
            eta = cfg.step / math.sqrt(k + 1)
            p = 1.0 - np.exp(s)
            residual, _ = mk.point_residual(p)
            if residual < self.best_residual - 1e-12:
                self.best_residual = residual
                last_gain = it
            lo = 1.0 - np.exp(np.minimum(s + 2 * eta, 0.0))
            hi = 1.0 - np.exp(s - 2 * eta)
            box_residual, excess = mk.box_residual(lo, hi)
            if box_residual <= PRUNE_TOL:
                found = self.try_box(lo, hi)
                if found is not None:
                    self.best_residual = 0.0
                    return found
                _, excess = mk.point_residual(p)
            direction = np.sign(np.where(np.abs(excess) > cfg.tolerance, excess, 0.0))
            s = np.minimum(s - eta * direction, 0.0)
            k += 1
            if it - last_gain > cfg.patience:
                s = -rng.exponential(2.0, mk.m)
                k = 0
                last_gain = it
        return None

    # -- dyadic grid oracle -----------------------------------------------
    def grid(self):
        mk = self.market
        leaf = 1.0 / self.cfg.grid_density
        stack = [(np.zeros(mk.m), 1.0)]
        while stack:
            lo, width = stack.pop()
            self.iterations += 1
            hi = np.minimum(lo + width, 1.0)
            residual, _ = mk.box_residual(lo, hi)
            self.best_residual = min(self.best_residual, residual)
            if residual > PRUNE_TOL:
                continue
            if width <= leaf * (1 + 1e-12):
                found = self.try_box(lo, hi)
                if found is not None:
                    self.best_residual = 0.0
                    return found
                continue
            half = width / 2
            children = []
            for corner in range(2 ** mk.m):
                offs = np.array([(corner >> j) & 1 for j in range(mk.m)], dtype=float) * half
                children.append((lo + offs, half))
            # low prices first: the stack pops the last child pushed
            stack.extend(reversed(children))
        return None


@lru_cache(maxsize=4096)
def _solve_types_cached(types, counts, caps, eps, cfg) -> TypeSolution:
    m = len(caps)
    # all goods free is the cheapest candidate; try it before searching
    zero = tuple(Fraction(0) for _ in range(m))
    supports = _exact_supports(types, counts, caps, eps, zero)
    if supports is not None:
        return TypeSolution(zero, supports, "free", 0)
    search = _Search(types, counts, caps, eps, cfg)
    steps = []
    if cfg.method in ("auto", "tatonnement"):
        steps.append(("tatonnement", search.tatonnement))
    if cfg.method == "grid" or (cfg.method == "auto" and m <= cfg.grid_max_goods):
        steps.append(("grid", search.grid))
    for name, run in steps:
        found = run()
        if found is not None:
            prices, supports = found
            return TypeSolution(prices, supports, name, search.iterations)
    raise SolverFailure(search.best_residual, search.iterations, cfg.method)


def _canonical_key(t: AgentType):
    return (t.order, tuple(sorted(t.feasible)))


def solve_types(types, counts, caps, eps, cfg: SolverConfig | None = None) -> TypeSolution:
    """Solve at the type level; results are memoised on the canonical market."""
    cfg = cfg or SolverConfig()
    eps = as_fraction(eps)
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    live = [i for i, n_t in enumerate(counts) if n_t > 0]
    perm = sorted(live, key=lambda i: _canonical_key(types[i]))
    sol = _solve_types_cached(
        tuple(types[i] for i in perm),
        tuple(int(counts[i]) for i in perm),
        tuple(int(c) for c in caps),
        eps,
        cfg,
    )
    supports: list = [((tuple([0] * len(caps)), Fraction(1)),)] * len(types)
    for pos, i in enumerate(perm):
        supports[i] = sol.supports[pos]
    return TypeSolution(sol.prices, tuple(supports), sol.method, sol.iterations)


def solve_pseudoequilibrium(e: Economy, eps, cfg: SolverConfig | None = None):
    """Prices and a fractional allocation forming a verified pseudoequilibrium.

    Raises ``SolverFailure`` (with the best residual and iteration count)
    when the configured search budget runs out.
    """
    cfg = cfg or SolverConfig()
    sol = solve_types(e.types.types, e.type_counts(), e.capacities, eps, cfg)
    fa = FractionalAllocation.from_type_supports(e, sol.supports)
    report = verify_pseudoequilibrium(e, eps, sol.prices, fa, tol=cfg.tolerance, tie_tol=TIE_TOL)
    if not report.ok:  # pragma: no cover - the exact rebuild makes this unreachable
        raise SolverFailure(math.nan, sol.iterations, cfg.method)
    return sol.prices, fa
