"""Round an expected-equilibrium lottery to one bundle per agent.

Every agent gets a bundle from its type's lottery support, so its realised
budget is the atom budget that buys that bundle. Expected demand clears, and
only the fractional parts ``n_t·q_y - floor(n_t·q_y)`` need rounding: floors
are assigned outright and the leftover agents of each type are spread over
the bundles with a fractional part, searching exhaustively for the smallest
l2 excess demand.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .economy import Economy
from .eceei import Eceei

EXHAUSTION_CAP = 2**20
SHORTFALL_CONVENTION = "shortfall counted on priced goods only; zero-priced goods count overflow only"


def excess_vector(alloc: Sequence, capacities: Sequence[int], p: Sequence) -> list[int]:
    m = len(capacities)
    out = []
    for j in range(m):
        gap = sum(x[j] for x in alloc) - capacities[j]
        out.append(gap if p[j] > 0 else max(gap, 0))
    return out


def excess_demand_sq(alloc: Sequence, capacities: Sequence[int], p: Sequence) -> int:
    return sum(v * v for v in excess_vector(alloc, capacities, p))


def excess_demand_norm(alloc: Sequence, capacities: Sequence[int], p: Sequence) -> float:
    """l2 excess demand: two-sided on priced goods, overflow only on free goods."""
    return math.sqrt(excess_demand_sq(alloc, capacities, p))


def within_bound(sq_norm: int, sigma: int, m: int) -> bool:
    """``sqrt(sq_norm) <= sqrt(sigma·m/2)`` decided on integers."""
    return 2 * sq_norm <= sigma * m


@dataclass
class RoundingReport:
    allocation: tuple
    sigma: int
    excess_norm: float
    bound: float
    budgets: tuple
    excess_sq: int = 0
    search: str = "exhaustive"
    convention: str = SHORTFALL_CONVENTION
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        m = len(self.allocation[0]) if self.allocation else 0
        return within_bound(self.excess_sq, self.sigma, m)

    def to_dict(self) -> dict:
        return {
            "allocation": [list(x) for x in self.allocation],
            "budgets": [str(b) for b in self.budgets],
            "sigma": self.sigma,
            "excess_norm": self.excess_norm,
            "bound": self.bound,
            "search": self.search,
            "convention": self.convention,
        }


class RoundingError(RuntimeError):
    pass


def _compositions(total: int, parts: int):
    """All ways to write ``total`` as an ordered sum of ``parts`` nonnegative ints."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for cut in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cut + (total + parts - 1,):
            out.append(c - prev - 1)
            prev = c
        yield tuple(out)


def _count(total: int, parts: int) -> int:
    return math.comb(total + parts - 1, parts - 1) if parts else int(total == 0)


def shapley_folkman_round(e: Economy, x: Eceei, seed: int = 0) -> RoundingReport:
    counts = e.type_counts()
    m = e.m
    sigma = e.sigma
    caps = np.array(e.capacities, dtype=np.int64)
    priced = np.array([v > 0 for v in x.prices])

    base = np.zeros(m, dtype=np.int64)
    floors: list[list[int]] = []
    options: list[tuple[list[int], int]] = []  # (atom indices with a fractional part, leftover agents)
    for t, atoms in enumerate(x.atoms):
        n_t = counts[t]
        fl = []
        frac = []
        for ai, a in enumerate(atoms):
            share = n_t * a.prob
            f = math.floor(share)
            fl.append(f)
            base += f * np.array(a.bundle, dtype=np.int64)
            if share != f:
                frac.append(ai)
        floors.append(fl)
        options.append((frac, n_t - sum(fl)))

    def sq(total: np.ndarray) -> int:
        gap = total - caps
        gap = np.where(priced, gap, np.maximum(gap, 0))
        return int(gap @ gap)

    def search(choices) -> tuple[int, list] | None:
        """Exhaustive minimum over per-type leftover distributions."""
        per_type = []
        for t, (idx, left) in enumerate(choices):
            vecs = []
            for comp in _compositions(left, len(idx)):
                v = np.zeros(m, dtype=np.int64)
                for ai, k in zip(idx, comp):
                    v += k * np.array(x.atoms[t][ai].bundle, dtype=np.int64)
                vecs.append((comp, v))
            per_type.append(vecs)
        best = None
        for combo in itertools.product(*per_type):
            total = base + sum((v for _, v in combo), np.zeros(m, dtype=np.int64))
            s = sq(total)
            if best is None or s < best[0]:
                best = (s, [c for c, _ in combo])
                if s == 0:
                    break
        return best

    def size(choices) -> int:
        return math.prod(_count(left, len(idx)) for idx, left in choices)

    best = None
    mode = "exhaustive"
    if size(options) <= EXHAUSTION_CAP:
        best = search(options)
    if best is None or not within_bound(best[0], sigma, m):
        # widen to every support bundle of the type (floors then start at 0)
        wide = [(list(range(len(atoms))), counts[t]) for t, atoms in enumerate(x.atoms)]
        if size(wide) <= EXHAUSTION_CAP:
            saved = base.copy()
            base[:] = 0
            floors = [[0] * len(atoms) for atoms in x.atoms]
            best = search(wide)
            options = wide
            mode = "exhaustive-wide"
            if best is None or not within_bound(best[0], sigma, m):
                base[:] = saved
        if best is None or not within_bound(best[0], sigma, m):
            best = _randomized(x, counts, caps, priced, sigma, seed)
            floors = [[0] * len(atoms) for atoms in x.atoms]
            options = [(list(range(len(atoms))), counts[t]) for t, atoms in enumerate(x.atoms)]
            mode = "randomized"
    if best is None or not within_bound(best[0], sigma, m):
        raise RoundingError("excess demand bound not met; the input is not a verified expected equilibrium")

    # hand out bundles to agents of each type in id order
    per_type_bundles = []
    for t, atoms in enumerate(x.atoms):
        k = list(floors[t])
        idx, _ = options[t]
        for ai, extra in zip(idx, best[1][t]):
            k[ai] += extra
        seq = []
        for a, c in zip(atoms, k):
            seq.extend([(a.bundle, a.budget)] * c)
        per_type_bundles.append(iter(seq))
    alloc, budgets = [], []
    for t in e.types.assignment:
        y, b = next(per_type_bundles[t])
        alloc.append(y)
        budgets.append(b)
    norm_sq = excess_demand_sq(alloc, e.capacities, x.prices)
    assert norm_sq == best[0]
    return RoundingReport(
        allocation=tuple(alloc),
        sigma=sigma,
        excess_norm=math.sqrt(norm_sq),
        bound=math.sqrt(sigma * m / 2),
        budgets=tuple(budgets),
        excess_sq=norm_sq,
        search=mode,
    )


def _randomized(x: Eceei, counts, caps, priced, sigma, seed, max_rounds: int = 100_000):
    """Sample each agent's bundle from its lottery until the bound holds."""
    rng = np.random.default_rng([seed, 0x5F])
    m = len(caps)
    for _ in range(max_rounds):
        total = np.zeros(m, dtype=np.int64)
        chosen = []
        for t, atoms in enumerate(x.atoms):
            if not counts[t]:
                chosen.append([0] * len(atoms))
                continue
            probs = np.array([float(a.prob) for a in atoms])
            k = rng.multinomial(counts[t], probs / probs.sum())
            chosen.append([int(v) for v in k])
            for a, c in zip(atoms, k):
                total += int(c) * np.array(a.bundle, dtype=np.int64)
        gap = np.where(priced, total - caps, np.maximum(total - caps, 0))
        s = int(gap @ gap)
        if within_bound(s, sigma, m):
            return s, chosen
    return None


__all__ = ["RoundingReport", "excess_demand_norm", "shapley_folkman_round"]
