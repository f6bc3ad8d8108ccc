from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from pseudomarket.simplex import INFEASIBLE, UNBOUNDED, linprog_exact


def test_small_program_exact():
    # min -x - y  s.t. x + 2y <= 4, 3x + y <= 6
    res = linprog_exact([-1, -1], A_ub=[[1, 2], [3, 1]], b_ub=[4, 6])
    assert res.ok
    assert res.x == [Fraction(8, 5), Fraction(6, 5)]
    assert res.objective == Fraction(-14, 5)


def test_equality_and_infeasible():
    res = linprog_exact([0, 0], A_eq=[[1, 1]], b_eq=[1], A_ub=[[1, 0]], b_ub=[Fraction(1, 3)])
    assert res.ok and sum(res.x) == 1 and res.x[0] <= Fraction(1, 3)
    assert linprog_exact([0], A_eq=[[1]], b_eq=[-1]).status == INFEASIBLE


def test_unbounded():
    assert linprog_exact([-1], A_ub=[[-1]], b_ub=[0]).status == UNBOUNDED


def test_redundant_equalities_dropped():
    res = linprog_exact([1, 2], A_eq=[[1, 1], [2, 2]], b_eq=[1, 2])
    assert res.ok and res.x == [1, 0]


small = st.integers(-4, 4)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2), st.data())
def test_matches_highs(n, n_ub, n_eq, data):
    c = [data.draw(small) for _ in range(n)]
    A_ub = [[data.draw(small) for _ in range(n)] for _ in range(n_ub)]
    b_ub = [data.draw(st.integers(0, 6)) for _ in range(n_ub)]
    # box every variable so the program stays bounded
    A_ub += [[1 if k == j else 0 for k in range(n)] for j in range(n)]
    b_ub += [5] * n
    A_eq = [[data.draw(small) for _ in range(n)] for _ in range(n_eq)]
    b_eq = [data.draw(small) for _ in range(n_eq)]
    exact = linprog_exact(c, A_ub, b_ub, A_eq or None, b_eq or None)
    ref = linprog(
        c,
        A_ub=np.array(A_ub),
        b_ub=b_ub,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=b_eq or None,
        bounds=[(0, None)] * n,
        method="highs",
    )
    assert exact.ok == (ref.status == 0)
    if exact.ok:
        assert float(exact.objective) == pytest.approx(ref.fun, abs=1e-7)
        x = exact.x
        assert all(v >= 0 for v in x)
        for row, b in zip(A_ub, b_ub):
            assert sum(Fraction(a) * v for a, v in zip(row, x)) <= b
        for row, b in zip(A_eq, b_eq):
            assert sum(Fraction(a) * v for a, v in zip(row, x)) == b
