import math
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudomarket.economy import AgentType, Economy, GeneratorConfig, generate_economy
from pseudomarket.eceei import (
    DecompositionError,
    Eceei,
    FractionalAllocation,
    LotteryAtom,
    RandomBudget,
    budget_of_bundle,
    construct_eceei,
    decompose_to_lottery,
    load_eceei,
    save_eceei,
    verify_eceei,
    verify_pseudoequilibrium,
)
from pseudomarket.solver import SolverConfig, SolverFailure, solve_pseudoequilibrium

import oracles
from conftest import A, AB, B, E0

F = Fraction


# ---------------------------------------------------------------- budgets


@pytest.mark.parametrize(
    "cost, expected",
    [(F(90, 100), F(95, 100)), (F(97, 100), F(97, 100)), (F(95, 100), F(95, 100))],
)
def test_budget_of_bundle_branches(cost, expected):
    assert budget_of_bundle((cost, F(0)), A, F(5, 100)) == expected


def test_budget_of_bundle_unaffordable():
    with pytest.raises(ValueError):
        budget_of_bundle((F(1), F(0)), A, F(1, 10))


def test_random_budget_merges_equal_values():
    f = RandomBudget.from_pairs([(F(1, 2), F(1, 4)), (F(3, 4), F(1, 2)), (F(1, 2), F(1, 4))])
    assert f.atoms == ((F(1, 2), F(1, 2)), (F(3, 4), F(1, 2)))
    assert f.expectation() == F(5, 8)
    assert f.is_close_to_one(F(1, 2)) and not f.is_close_to_one(F(1, 4))
    assert [f.draw_index(u) for u in (0.0, 0.49, 0.5, 0.99)] == [0, 0, 1, 1]


# ---------------------------------------------------------------- lotteries


@pytest.mark.parametrize(
    "x, expected",
    [
        ((F(1, 2), F(1, 2)), {A: F(1, 2), B: F(1, 2)}),
        ((F(1, 4), F(3, 4)), {A: F(1, 4), B: F(3, 4)}),
        ((F(1), F(0)), {A: F(1)}),
    ],
)
def test_decompose_examples(x, expected):
    assert dict(decompose_to_lottery(x, [A, B])) == expected


@settings(max_examples=100, deadline=None)
@given(st.lists(st.fractions(0, 1, max_denominator=12), min_size=4, max_size=4))
def test_decomposition_is_caratheodory_small(raw):
    cands = [(1, 1, 0), (1, 0, 0), (0, 1, 1), (0, 0, 1), (0, 0, 0)]
    total = sum(raw) + 1
    weights = [w / total for w in raw] + [1 / total]
    x = tuple(sum(w * y[j] for w, y in zip(weights, cands)) for j in range(3))
    lottery = decompose_to_lottery(x, cands)
    assert len(lottery) <= 3 + 1
    assert sum(w for _, w in lottery) == 1
    assert tuple(sum(w * y[j] for y, w in lottery) for j in range(3)) == x


def test_decompose_outside_hull_certificate():
    x = (F(1, 2), F(1, 2))
    cands = [A, E0]
    with pytest.raises(DecompositionError) as err:
        decompose_to_lottery(x, cands)
    a, beta = err.value.certificate
    assert all(sum(aj * yj for aj, yj in zip(a, y)) <= beta for y in cands)
    assert sum(aj * xj for aj, xj in zip(a, x)) > beta


# ---------------------------------------------------------------- solver


def test_single_agent_free_good():
    e = Economy.build([AgentType.from_order([(1,), (0,)])], [1])
    p, fa = solve_pseudoequilibrium(e, F(1, 2))
    assert p == (0,)
    assert fa.support == ((((1,), F(1)),),)
    x = construct_eceei(e, F(1, 2), p, fa)
    assert x.budgets[0].atoms == ((F(1, 2), F(1)),)
    assert x.lotteries[0] == (((1,), F(1)),)


def test_symmetric_instance(symmetric_economy, half):
    p, fa = solve_pseudoequilibrium(symmetric_economy, half)
    # the {a} price solves 1 + ln(2(1 - p_a)) = 0, the {b} price is in the safe zone
    assert float(p[0]) == pytest.approx(1 - 1 / (2 * math.e), abs=1e-9)
    assert p[1] <= half
    for support in fa.support:
        assert dict(support) == {A: half, B: half}
    assert sum(x[0] for x in fa.x_star) == 1 and sum(x[1] for x in fa.x_star) == 1
    assert oracles.check_pseudo([t.order for t in symmetric_economy.types.types] * 2, [1, 1], half, p, fa.support) == []

    x = construct_eceei(symmetric_economy, half, p, fa)
    assert dict(x.lotteries[0]) == {A: half, B: half}
    assert all(half <= v < 1 for v in x.budgets[0].values)
    assert x.expected_demand(symmetric_economy) == (1, 1)
    assert verify_eceei(symmetric_economy, x).ok


def test_symmetric_instance_grid_driver(symmetric_economy, half):
    # a second valid equilibrium: the {b} price sits lower on the same tie segment
    p, fa = solve_pseudoequilibrium(symmetric_economy, half, SolverConfig(method="grid"))
    assert float(p[0]) == pytest.approx(1 - 1 / (2 * math.e), abs=1e-9)
    assert p[0] + p[1] < 1
    assert verify_pseudoequilibrium(symmetric_economy, half, p, fa).ok


def test_literal_price_grid_misses_irrational_tie(symmetric_economy, half):
    # every equilibrium has p_a = 1 - 1/(2e), which no k/64 point hits
    orders = [symmetric_economy.types.types[0].order]
    assert oracles.literal_grid(orders, [2], [1, 1], half, density=64) == []


def test_exhausted_budget_reports_failure(symmetric_economy):
    cfg = SolverConfig(method="tatonnement", max_iters=0)
    with pytest.raises(SolverFailure) as err:
        solve_pseudoequilibrium(symmetric_economy, F(1, 3), cfg)
    assert err.value.iterations == 0
    assert err.value.residual > 0


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        SolverConfig(method="newton")


# ---------------------------------------------------------------- verification mutations


def test_weight_perturbation_names_agent(symmetric_economy, half):
    p, fa = solve_pseudoequilibrium(symmetric_economy, half)
    bad = list(fa.support)
    bad[1] = ((A, F(6, 10)), (B, F(1, 2)))
    report = verify_pseudoequilibrium(symmetric_economy, half, p, FractionalAllocation.from_supports(bad))
    assert not report.ok
    assert any(v["condition"] == "convexity" and v["agent"] == 2 for v in report.violations)


def test_priced_slack_good_named():
    t = AgentType.from_order([A, E0])
    e = Economy.build([t], [1, 2])
    fa = FractionalAllocation.from_supports([[(A, F(1))]])
    report = verify_pseudoequilibrium(e, F(1, 2), (F(0), F(1, 4)), fa)
    assert [(v["condition"], v["good"]) for v in report.violations] == [("clearing", 1)]


def _asymmetric():
    t1 = AgentType.from_order([A, B, E0])
    t2 = AgentType.from_order([B, A, E0])
    return Economy.build([t1, t2], [1, 1])


def test_raised_budget_fails_c():
    e = _asymmetric()
    p, fa = solve_pseudoequilibrium(e, F(1, 2))
    x = construct_eceei(e, F(1, 2), p, fa)
    bumped = tuple(tuple(replace(a, budget=F(11, 10)) for a in atoms) if t == 0 else atoms for t, atoms in enumerate(x.atoms))
    report = verify_eceei(e, replace(x, atoms=bumped))
    assert any(v["condition"] == "c" for v in report.violations)


def test_swapped_lotteries_fail_d():
    e = _asymmetric()
    p, fa = solve_pseudoequilibrium(e, F(1, 2))
    x = construct_eceei(e, F(1, 2), p, fa)
    assert verify_eceei(e, x).ok
    swapped = replace(x, atoms=(x.atoms[1], x.atoms[0]))
    report = verify_eceei(e, swapped)
    d = [v for v in report.violations if v["condition"] == "d"]
    assert d
    # exhaustive re-check of the argmax on the mutated object
    for v in d:
        order = e.types.types[v["type"]].order
        budget = F(v["budget"])
        best = oracles.brute_optimal(order, p, budget)
        assert list(i for i, g in enumerate(best) if g) == v["optimal_bundle"] != v["lottery_bundle"]


def test_eceei_json_round_trip(symmetric_economy, half):
    p, fa = solve_pseudoequilibrium(symmetric_economy, half)
    x = construct_eceei(symmetric_economy, half, p, fa)
    assert load_eceei(save_eceei(x)) == x


def test_eceei_from_lottery_only_json(symmetric_economy, half):
    p, fa = solve_pseudoequilibrium(symmetric_economy, half)
    x = construct_eceei(symmetric_economy, half, p, fa)
    import json

    doc = json.loads(save_eceei(x))
    for entry in doc["types"]:
        del entry["atoms"]
    y = load_eceei(json.dumps(doc))
    assert y.budgets == x.budgets and y.lotteries == x.lotteries


# ---------------------------------------------------------------- random instances


def _tiny(seed):
    cfg = GeneratorConfig(n=2 + seed % 2, m=1 + (seed // 2) % 2, cap_min=1, cap_max=1, sigma_max=2, max_feasible=4)
    return generate_economy(cfg, seed)


def _contested(count):
    """Tiny instances where giving every good away for free overflows."""
    out, seed = [], 0
    while len(out) < count:
        e = _tiny(seed)
        seed += 1
        free = (F(0),) * e.m
        if not oracles.clearing_feasible([t.order for t in e.types.types], e.type_counts(), e.capacities, free, F(1, 4)):
            out.append(e)
    return out


def test_oracle_equivalence_on_tiny_instances():
    eps = F(1, 4)
    disagreements = []
    for e in _contested(200):
        outcomes = []
        for method in ("tatonnement", "grid"):
            try:
                p, fa = solve_pseudoequilibrium(e, eps, SolverConfig(method=method))
            except SolverFailure:
                outcomes.append(False)
                continue
            assert any(p)
            orders = [e.types.types[t].order for t in e.types.assignment]
            assert oracles.check_pseudo(orders, e.capacities, eps, p, fa.support) == []
            assert oracles.clearing_feasible([t.order for t in e.types.types], e.type_counts(), e.capacities, p, eps)
            outcomes.append(True)
        if outcomes[0] != outcomes[1]:
            disagreements.append(e)
    assert disagreements == []


@pytest.mark.parametrize("seed", range(30))
def test_constructed_eceei_verifies(seed):
    e = generate_economy(GeneratorConfig(n=6, m=3, sigma_max=2, n_types=3), seed)
    eps = F(1, 3)
    p, fa = solve_pseudoequilibrium(e, eps)
    x = construct_eceei(e, eps, p, fa)
    assert verify_eceei(e, x).ok
    for t, atoms in enumerate(x.atoms):
        order = e.types.types[t].order
        ch = oracles.brute_choice_set(order, p, eps)
        for a in atoms:
            assert a.bundle in ch
            assert 1 - eps <= a.budget <= 1


def test_same_type_agents_share_lottery():
    t1 = AgentType.from_order([AB, A, B, E0])
    t2 = AgentType.from_order([B, E0])
    eps = F(1, 3)
    e1 = Economy.build([t1, t2, t1], [1, 2])
    e2 = Economy.build([t2, t1, t1], [1, 2])
    p1, fa1 = solve_pseudoequilibrium(e1, eps)
    p2, fa2 = solve_pseudoequilibrium(e2, eps)
    assert fa1.support[0] == fa1.support[2]
    assert p1 == p2
    x1 = construct_eceei(e1, eps, p1, fa1)
    x2 = construct_eceei(e2, eps, p2, fa2)
    assert x1.atoms[0] == x2.atoms[1] and x1.atoms[1] == x2.atoms[0]


def test_eceei_type_count_mismatch_is_shape_failure(symmetric_economy, half):
    x = Eceei(half, (F(0), F(0)), ((LotteryAtom(A, half, F(1)),), ()))
    report = verify_eceei(symmetric_economy, x)
    assert [v["condition"] for v in report.violations] == ["shape"]
