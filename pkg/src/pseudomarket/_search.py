"""Price search for pseudoequilibria under the auxiliary utilities.

Work in the exponentiated form ``g(x, p) = e^{r(x)} · min(1, (1 - p·x)/eps)``.
It is monotone in the auxiliary utility, so it has the same maximisers, and it
is affine in ``p`` on each side of the kink ``p·x = 1 - eps``. With the side
("zone") of every bundle fixed, ties and optimality conditions are linear.

A box of prices is handled in three layers:

* ``candidates``: bundles that can be optimal somewhere in the box
  (``g`` is nonincreasing in ``p``, so compare the low corner against the
  best value at the high corner);
* ``relaxed_residual``: an LP lower bound on the clearing violation of any
  pseudoequilibrium inside the box (zero is necessary for one to exist);
* ``solve_box``: an exact mixed-integer program over zones, choice sets and
  mixing weights, followed by a polishing LP and a projection onto the tie
  equations so that ties hold to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

PRUNE_TOL = 1e-6
LP_OPTIONS = {"presolve": True}


@dataclass
class BoxSolution:
    prices: np.ndarray
    supports: list  # per type: list of bundle ids
    priced: np.ndarray


class Market:
    """Type-level arrays for one economy (types with multiplicities)."""

    def __init__(self, types, counts, caps, eps):
        self.m = len(caps)
        self.caps = np.asarray(caps, dtype=float)
        self.eps = float(eps)
        self.counts = np.asarray(counts, dtype=float)
        self.tau = len(types)
        zero = (0,) * self.m
        ids = {zero: 0}
        pair_type, pair_bundle, pair_w = [], [], []
        self.starts = []
        for ti, t in enumerate(types):
            self.starts.append(len(pair_type))
            for x in t.order:
                pair_type.append(ti)
                pair_bundle.append(ids.setdefault(x, len(ids)))
                pair_w.append(math.exp(t.rank(x)))
        self.bundles = list(ids)
        self.X = np.array(self.bundles, dtype=float).reshape(len(ids), self.m)
        self.pt = np.array(pair_type)
        self.pb = np.array(pair_bundle)
        self.pw = np.array(pair_w)
        self.starts = np.array(self.starts)
        self.px = self.X[self.pb]

    # g for every (type, bundle) pair
    def g(self, p: np.ndarray) -> np.ndarray:
        cost = self.px @ p
        return self.pw * np.minimum(1.0, (1.0 - cost) / self.eps)

    def best(self, values: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(values, self.starts)

    def candidates(self, lo: np.ndarray, hi: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
        glo = self.g(lo)
        best_hi = self.best(self.g(hi))[self.pt]
        return glo >= best_hi - rel_tol * np.maximum(1.0, np.abs(best_hi))

    def relaxed_residual(self, lo, hi, mask, two_sided):
        """Smallest l1 clearing violation using only pairs in ``mask``.

        ``two_sided[j]`` marks goods whose price is positive throughout the
        box (shortfall counts); elsewhere only overflow counts. Returns the
        residual and the signed excess demand at the optimum.
        """
        m = self.m
        fixed = np.zeros(m)
        var_pairs = []
        for ti in range(self.tau):
            sel = np.flatnonzero(mask & (self.pt == ti))
            if len(sel) == 1:
                fixed += self.counts[ti] * self.px[sel[0]]
            else:
                var_pairs.append((ti, sel))
        nv = sum(len(sel) for _, sel in var_pairs)
        if nv == 0:
            excess = fixed - self.caps
            over = np.maximum(excess, 0)
            short = np.where(two_sided, np.maximum(-excess, 0), 0)
            return float(over.sum() + short.sum()), excess
        # variables: lambdas, over (m), short (m)
        n = nv + 2 * m
        c = np.zeros(n)
        c[nv:nv + m] = 1
        c[nv + m:] = np.where(two_sided, 1.0, 0.0)
        A_eq = np.zeros((len(var_pairs), n))
        D = np.zeros((m, n))
        col = 0
        for r, (ti, sel) in enumerate(var_pairs):
            A_eq[r, col:col + len(sel)] = 1
            D[:, col:col + len(sel)] = self.counts[ti] * self.px[sel].T
            col += len(sel)
        # demand - over + short = caps - fixed
        D[:, nv:nv + m] = -np.eye(m)
        D[:, nv + m:] = np.eye(m)
        A = np.vstack([A_eq, D])
        b = np.concatenate([np.ones(len(var_pairs)), self.caps - fixed])
        ub = np.full(n, np.inf)
        ub[nv + m:] = np.where(two_sided, np.inf, np.inf)
        res = linprog(c, A_eq=A, b_eq=b, bounds=list(zip(np.zeros(n), ub)), method="highs", options=LP_OPTIONS)
        if res.status != 0:
            return math.inf, np.zeros(m)
        x = res.x
        demand = fixed + D[:, :nv] @ x[:nv]
        return float(res.fun), demand - self.caps

    def point_residual(self, p: np.ndarray, tie_rel: float = 1e-9):
        gp = self.g(p)
        best = self.best(gp)[self.pt]
        mask = gp >= best * (1 - tie_rel)
        return self.relaxed_residual(p, p, mask, p > 0)

    def box_residual(self, lo, hi):
        return self.relaxed_residual(lo, hi, self.candidates(lo, hi), lo > 0)

    # ------------------------------------------------------------------
    def solve_box(self, lo: np.ndarray, hi: np.ndarray, time_limit: float = 30.0) -> BoxSolution | None:
        structure = self._milp(lo, hi, time_limit)
        if structure is None:
            return None
        return self._polish(lo, hi, *structure)

    def _zones(self, lo, hi):
        one = 1.0 - self.eps
        clo = self.X @ lo
        chi = self.X @ hi
        # 0 safe, 1 penalty, -1 ambiguous
        zone = np.where(chi <= one, 0, np.where(clo >= one, 1, -1))
        return zone, clo, chi

    def _milp(self, lo, hi, time_limit):
        m, eps = self.m, self.eps
        cand = np.flatnonzero(self.candidates(lo, hi))
        zone, clo, chi = self._zones(lo, hi)
        amb = sorted({int(b) for b in self.pb[cand] if zone[b] == -1})
        amb_col = {b: k for k, b in enumerate(amb)}
        C = len(cand)
        o_p, o_pi, o_z = 0, m, 2 * m
        o_G = o_z + len(amb)
        o_c = o_G + self.tau
        o_l = o_c + C
        N = o_l + C

        lb = np.zeros(N)
        ub = np.ones(N)
        lb[o_p:o_p + m] = lo
        ub[o_p:o_p + m] = hi
        for j in range(m):
            if lo[j] > 0:
                lb[o_pi + j] = 1
            if hi[j] <= 0:
                ub[o_pi + j] = 0
        glo = self.g(lo)
        best_hi = self.best(self.g(hi))
        gmax = np.zeros(self.tau)
        for k in cand:
            gmax[self.pt[k]] = max(gmax[self.pt[k]], glo[k])
        lb[o_G:o_G + self.tau] = np.maximum(1.0, best_hi)
        ub[o_G:o_G + self.tau] = np.maximum(gmax, lb[o_G:o_G + self.tau])

        rows, rlo, rhi = [], [], []

        def add(coefs, low, high):
            row = np.zeros(N)
            for col, v in coefs:
                row[col] += v
            rows.append(row)
            rlo.append(low)
            rhi.append(high)

        one = 1.0 - eps
        for j in range(m):
            if lo[j] <= 0 < hi[j]:
                add([(o_p + j, 1.0), (o_pi + j, -hi[j])], -np.inf, 0.0)
        for b, k in amb_col.items():
            px = [(o_p + j, 1.0) for j in range(m) if self.X[b, j]]
            add(px + [(o_z + k, -(chi[b] - one))], -np.inf, one)
            add(px + [(o_z + k, -(one - clo[b]))], clo[b], np.inf)

        lam_by_type: dict[int, list[int]] = {}
        for ci, k in enumerate(cand):
            t, b, w = int(self.pt[k]), int(self.pb[k]), float(self.pw[k])
            G = o_G + t
            zc, lc = o_c + ci, o_l + ci
            lam_by_type.setdefault(t, []).append(lc)
            slope = [(o_p + j, w / eps) for j in range(m) if self.X[b, j]]
            neg_slope = [(col, -v) for col, v in slope]
            # upper bound: the active piece of g stays below G
            if zone[b] == 0:
                add([(G, 1.0)], w, np.inf)
            elif zone[b] == 1:
                add(neg_slope + [(G, -1.0)], -np.inf, -w / eps)
            else:
                zk = o_z + amb_col[b]
                add([(G, -1.0), (zk, -(w - 1.0))], -np.inf, -w)
                M2 = max(0.0, w * (1 - clo[b]) / eps - 1.0)
                add(neg_slope + [(G, -1.0), (zk, M2)], -np.inf, M2 - w / eps)
            # chosen => both pieces reach G
            gm = ub[G]
            M1 = max(0.0, gm - w)
            add([(G, 1.0), (zc, M1)], -np.inf, w + M1)
            if self.X[b].any():
                M3 = max(0.0, gm - w * (1 - chi[b]) / eps)
                add([(G, 1.0)] + slope + [(zc, M3)], -np.inf, w / eps + M3)
            add([(lc, 1.0), (zc, -1.0)], -np.inf, 0.0)
        for t in range(self.tau):
            add([(lc, 1.0) for lc in lam_by_type.get(t, [])], 1.0, 1.0)
        for j in range(m):
            coefs = [(o_l + ci, self.counts[self.pt[k]] * self.X[self.pb[k], j]) for ci, k in enumerate(cand)]
            coefs = [(col, v) for col, v in coefs if v]
            add(coefs, -np.inf, self.caps[j])
            add(coefs + [(o_pi + j, -self.caps[j])], 0.0, np.inf)

        integrality = np.zeros(N)
        integrality[o_pi:o_pi + m] = 1
        integrality[o_z:o_z + len(amb)] = 1
        integrality[o_c:o_c + C] = 1
        res = milp(
            np.zeros(N),
            integrality=integrality,
            bounds=Bounds(lb, ub),
            constraints=LinearConstraint(np.array(rows), rlo, rhi),
            options={"time_limit": time_limit, "presolve": True},
        )
        if res.x is None or res.status not in (0,):
            return None
        x = res.x
        priced = np.round(x[o_pi:o_pi + m]).astype(bool)
        zeta = {b: int(round(x[o_z + k])) for b, k in amb_col.items()}
        supports = [[] for _ in range(self.tau)]
        for ci, k in enumerate(cand):
            if x[o_l + ci] > 1e-9:
                supports[int(self.pt[k])].append(int(k))
        return cand, zone, zeta, priced, supports

    def _piece(self, k: int, zone_b: int):
        """Affine piece of g for pair k: (constant, coefficient vector)."""
        w, b = float(self.pw[k]), int(self.pb[k])
        if zone_b == 0:
            return w, np.zeros(self.m)
        return w / self.eps, -(w / self.eps) * self.X[b]

    def _polish(self, lo, hi, cand, zone, zeta, priced, supports) -> BoxSolution | None:
        m, tau = self.m, self.tau
        one = 1.0 - self.eps
        zone = zone.copy()
        for b, z in zeta.items():
            zone[b] = z
        # variables: p (m), G (tau), s
        N = m + tau + 1
        A_ub, b_ub, A_eq, b_eq = [], [], [], []
        support_set = {k for sup in supports for k in sup}
        for k in cand:
            t = int(self.pt[k])
            a, beta = self._piece(int(k), zone[self.pb[k]])
            row = np.zeros(N)
            row[:m] = beta
            row[m + t] = -1.0
            if k in support_set:
                A_eq.append(row)
                b_eq.append(-a)
            else:
                row[-1] = 1.0
                A_ub.append(row)
                b_ub.append(-a)
        for b in zeta:
            row = np.zeros(N)
            row[:m] = self.X[b]
            if zone[b] == 0:
                A_ub.append(row)
                b_ub.append(one)
            else:
                A_ub.append(-row)
                b_ub.append(-one)
        bounds = [(lo[j], hi[j]) if priced[j] else (0.0, 0.0) for j in range(m)]
        bounds += [(1.0, None)] * tau + [(-1.0, 1.0)]
        c = np.zeros(N)
        c[-1] = -1.0
        res = linprog(
            c,
            A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
            A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
            bounds=bounds, method="highs", options=LP_OPTIONS,
        )
        if res.status != 0 or res.x[-1] < -1e-7:
            return None
        p = res.x[:m].copy()

        # project onto the tie equations so ties hold to machine precision
        free = np.array([bool(priced[j]) and hi[j] > lo[j] for j in range(m)])
        rows, rhs = [], []
        for t in range(tau):
            sup = supports[t]
            if len(sup) < 2:
                continue
            a0, b0 = self._piece(sup[0], zone[self.pb[sup[0]]])
            for k in sup[1:]:
                a1, b1 = self._piece(k, zone[self.pb[k]])
                rows.append(b1 - b0)
                rhs.append(a0 - a1)
        if rows and free.any():
            E = np.array(rows)
            r = np.array(rhs) - E @ p
            delta, *_ = np.linalg.lstsq(E[:, free], r, rcond=None)
            p[free] += delta
        p = np.clip(p, 0.0, None)
        p[np.abs(p) < 1e-14] = 0.0
        return BoxSolution(prices=p, supports=supports, priced=priced)
