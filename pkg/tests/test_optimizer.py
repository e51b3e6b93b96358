import math
from collections import defaultdict

import numpy as np
import pytest

from sweepopt.errors import NoFeasiblePoint
from sweepopt.optimizer import OptimizerConfig, optimize, refine
from sweepopt.problem import mayer_cost
from sweepopt.sweeping import integrate
from sweepopt.switching_example import example_problem

CHEAP = OptimizerConfig(k=400, coarse_grid=2, n_starts=3, random_starts=2)


@pytest.fixture(scope="module")
def cheap_result():
    return optimize(example_problem(-3.0), CHEAP)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(segments=0)
    with pytest.raises(ValueError):
        OptimizerConfig(penalty_weight=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(k=0)


def test_single_segment_optimum():
    # constant u > 1 reaches x2 = 1 at T = 1/(u-1) with x1 = -T, so J(T) = T + (3 - T)^2 / 2,
    # minimal at T = 2, u = 3/2, J = 5/2
    res = optimize(example_problem(-3.0), OptimizerConfig(segments=1, k=1000))
    assert abs(res.J - 2.5) <= 2e-3
    assert abs(res.T - 2.0) <= 1e-2
    assert abs(res.law.levels[0, 0] - 1.5) <= 1e-2
    assert res.main_switch() is None


def test_result_is_consistent(cheap_result):
    P = example_problem(-3.0)
    traj = integrate(P, cheap_result.law, cheap_result.k)
    assert mayer_cost(P, traj) == cheap_result.J
    assert math.isclose(P.endpoint_violation(traj.states[-1]), cheap_result.penalty, abs_tol=1e-12)
    assert cheap_result.penalty <= CHEAP.endpoint_tol
    assert cheap_result.law.inside(P.U_lo, P.U_hi)


def test_same_seed_same_result(cheap_result):
    again = optimize(example_problem(-3.0), CHEAP)
    assert again.J == cheap_result.J
    assert np.array_equal(again.decision, cheap_result.decision)
    assert again.history == cheap_result.history


def test_history_descends_within_each_stage(cheap_result):
    groups = defaultdict(list)
    for entry in cheap_result.history:
        groups[(entry["stage"], entry["k"], entry["weight"])].append(entry["objective"])
    for values in groups.values():
        assert all(b <= a for a, b in zip(values, values[1:]))
    assert cheap_result.history[0]["stage"] == "select"


def test_history_objective_matches_penalty(cheap_result):
    for entry in cheap_result.history:
        expected = entry["J"] + entry["weight"] * entry["violation"] ** 2
        assert abs(entry["objective"] - expected) <= 1e-12 * (1 + abs(expected))


def test_three_segment_optimum(optimized_example):
    res, _ = optimized_example
    assert abs(res.J - 167.0 / 72.0) <= 1e-2
    assert abs(res.main_switch() - 16.0 / 9.0) <= 2e-2
    assert abs(res.T - 71.0 / 36.0) <= 2e-2


def test_refine(optimized_example):
    P = example_problem(-3.0)
    res, _ = optimized_example
    assert refine(P, res, res.k) is res
    with pytest.raises(ValueError):
        refine(P, res, res.k // 2)
    finer = refine(P, res, 2 * res.k)
    assert finer.k == 2 * res.k
    assert abs(finer.delta_J) <= 5e-3
    assert math.isclose(finer.delta_J, finer.J - res.J)


def test_unreachable_endpoint():
    P = example_problem(-3.0).replace(U_lo=[-0.5], U_hi=[0.5], omega_T=(0.0, 1.0))
    with pytest.raises(NoFeasiblePoint) as info:
        optimize(P, OptimizerConfig(k=100, coarse_grid=2, n_starts=2, random_starts=1))
    assert info.value.best_penalty >= 0.5  # x2(T) <= T / 2 <= 1/2


def test_close_reference_prefers_sliding():
    # at alpha = -2.2 the best closed-form strategy is slide_off with J = 1.7
    res = optimize(example_problem(-2.2), OptimizerConfig(k=1000))
    assert res.J < 1.72
