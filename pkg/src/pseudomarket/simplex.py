"""Dense two-phase simplex over ``fractions.Fraction`` with Bland's rule.

Small programs only: the clearing program and lottery decompositions have a
handful of rows. Solutions are basic, so the number of nonzero variables is
at most the number of (non-redundant) equality rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: list | None = None
    objective: Fraction | None = None
    pivots: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _frac_rows(A) -> list[list[Fraction]]:
    return [[Fraction(v) for v in row] for row in (A or [])]


class _Tableau:
    def __init__(self, rows: list[list[Fraction]], basis: list[int], n_cols: int):
        self.T = rows  # each row: n_cols coefficients followed by the rhs
        self.basis = basis
        self.n_cols = n_cols
        self.obj: list[Fraction] = [Fraction(0)] * (n_cols + 1)
        self.pivots = 0

    def set_objective(self, cost: Sequence[Fraction]) -> None:
        obj = [Fraction(v) for v in cost] + [Fraction(0)]
        for r, b in enumerate(self.basis):
            f = obj[b]
            if f:
                row = self.T[r]
                for k, v in enumerate(row):
                    if v:
                        obj[k] -= f * v
        self.obj = obj

    def pivot(self, r: int, col: int) -> None:
        row = self.T[r]
        piv = row[col]
        if piv != 1:
            row = [v / piv for v in row]
            self.T[r] = row
        nz = [k for k, v in enumerate(row) if v]
        for i, other in enumerate(self.T):
            if i == r:
                continue
            f = other[col]
            if f:
                for k in nz:
                    other[k] -= f * row[k]
        f = self.obj[col]
        if f:
            for k in nz:
                self.obj[k] -= f * row[k]
        self.basis[r] = col
        self.pivots += 1

    def run(self, allowed: int, max_pivots: int) -> str:
        """Minimise the current objective, entering only columns < ``allowed``."""
        while True:
            col = next((j for j in range(allowed) if self.obj[j] < 0), None)
            if col is None:
                return OPTIMAL
            best = None
            for i, row in enumerate(self.T):
                a = row[col]
                if a > 0:
                    key = (row[-1] / a, self.basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                return UNBOUNDED
            if self.pivots >= max_pivots:
                raise RuntimeError("simplex pivot limit exceeded")
            self.pivot(best[1], col)


def linprog_exact(
    c: Sequence,
    A_ub: Sequence[Sequence] | None = None,
    b_ub: Sequence | None = None,
    A_eq: Sequence[Sequence] | None = None,
    b_eq: Sequence | None = None,
    max_pivots: int = 50_000,
) -> LPResult:
    """Minimise ``c·x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``."""
    n = len(c)
    ub = _frac_rows(A_ub)
    eq = _frac_rows(A_eq)
    bu = [Fraction(v) for v in (b_ub or [])]
    be = [Fraction(v) for v in (b_eq or [])]
    n_slack = len(ub)
    n_art = sum(1 for b in bu if b < 0) + len(eq)
    n_cols = n + n_slack + n_art

    rows: list[list[Fraction]] = []
    basis: list[int] = []
    art = n + n_slack
    for i, (a, b) in enumerate(zip(ub, bu)):
        row = a + [Fraction(0)] * (n_slack + n_art) + [b]
        row[n + i] = Fraction(1)
        if b >= 0:
            basis.append(n + i)
        else:
            row = [-v for v in row]
            row[art] = Fraction(1)
            basis.append(art)
            art += 1
        rows.append(row)
    for a, b in zip(eq, be):
        row = a + [Fraction(0)] * (n_slack + n_art) + [b]
        if b < 0:
            row = [-v for v in row]
        row[art] = Fraction(1)
        basis.append(art)
        art += 1
        rows.append(row)

    tab = _Tableau(rows, basis, n_cols)
    first_art = n + n_slack
    if n_art:
        tab.set_objective([0] * first_art + [1] * n_art)
        tab.run(n_cols, max_pivots)
        if -tab.obj[-1] > 0:
            return LPResult(INFEASIBLE, pivots=tab.pivots)
        # drive zero-level artificials out of the basis, dropping redundant rows
        r = 0
        while r < len(tab.T):
            if tab.basis[r] >= first_art:
                col = next((k for k in range(first_art) if tab.T[r][k] != 0), None)
                if col is None:
                    del tab.T[r]
                    del tab.basis[r]
                    continue
                tab.pivot(r, col)
            r += 1
        for row in tab.T:
            del row[first_art:n_cols]
        tab.n_cols = first_art

    tab.set_objective(list(c) + [0] * n_slack)
    status = tab.run(n + n_slack, max_pivots)
    if status != OPTIMAL:
        return LPResult(status, pivots=tab.pivots)
    x = [Fraction(0)] * (n + n_slack)
    for r, b in enumerate(tab.basis):
        x[b] = tab.T[r][-1]
    return LPResult(OPTIMAL, x=x[:n], objective=-tab.obj[-1], pivots=tab.pivots)
