import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepopt import geometry as geo
from sweepopt.errors import DecompositionFailed, DimensionMismatch
from sweepopt.sweeping import (
    ControlLaw,
    DiscreteTrajectory,
    catchup_step,
    first_contact_time,
    inclusion_residual,
    integrate,
    recover_eta,
    trajectory_distance,
)

from oracles import random_problem


def stepwise(P, traj):
    """Reference loop: one catchup_step per grid point."""
    xs = [P.x0.copy()]
    for i in range(traj.k):
        xs.append(catchup_step(P, i * traj.h, traj.h, xs[-1], traj.controls[i]))
    return np.array(xs)


def test_contact_time_with_full_control(example):
    traj = integrate(example, ControlLaw.constant([2.0], 1.0), 600)
    assert abs(first_contact_time(example, traj) - 1.0 / 3.0) <= 2 * traj.h


def test_slide_along_facet(example):
    k = 900
    traj = integrate(example, ControlLaw.constant([2.0], 1.0), k)
    on_arc = slice(k // 3 + 2, k)
    assert np.allclose(traj.velocities[on_arc], [-1.5, 0.5], atol=1e-9)
    assert np.allclose(traj.etas[on_arc, 0], 3.0 / math.sqrt(2.0), atol=1e-9)
    assert np.all(traj.etas[: k // 3 - 1] == 0.0)
    assert np.allclose(traj.states[-1], [-1.0, 1.0], atol=5 * traj.h)


def test_free_flight_is_exact(example):
    traj = integrate(example, ControlLaw.constant([-1.0], 2.0), 100)
    assert np.allclose(traj.states[:, 1], -traj.times)
    assert np.all(traj.etas == 0.0)


def test_single_step_grid(example):
    traj = integrate(example, ControlLaw.constant([2.0], 1.0), 1)
    # z = (0, 2) projected onto x1 + x2 <= 0
    assert np.allclose(traj.states[1], [-1.0, 1.0])
    assert traj.etas.shape == (1, 1)


def test_callable_law_matches_piecewise(example):
    law = ControlLaw.from_switches(2.0, [0.7], [[2.0], [-1.0]])
    a = integrate(example, law, 400)
    b = integrate(example, (2.0, lambda t: 2.0 if t < 0.7 else -1.0), 400)
    assert np.array_equal(a.states, b.states)


def test_control_dimension_checked(example):
    with pytest.raises(DimensionMismatch):
        integrate(example, (1.0, lambda t: [1.0, 2.0]), 10)
    with pytest.raises(ValueError):
        integrate(example, ControlLaw.constant([1.0], 1.0), 0)


def test_law_validation():
    with pytest.raises(ValueError):
        ControlLaw(np.array([0.0, 1.0, 1.0]), [[1.0], [2.0]])
    with pytest.raises(ValueError):
        ControlLaw(np.array([0.0, 1.0]), [[1.0], [2.0]])
    law = ControlLaw.from_switches(3.0, [1.0, 2.0], [[0.0], [1.0], [2.0]])
    assert law.m == 3 and law.T == 3.0
    assert np.array_equal(law.sample(np.array([0.0, 0.99, 1.0, 2.5, 3.0]))[:, 0], [0, 0, 1, 2, 2])


def test_chunked_integration_matches_stepwise(example):
    law = ControlLaw.from_switches(2.0, [0.3, 1.1, 1.6], [[2.0], [1.2], [-2.0], [2.0]])
    traj = integrate(example, law, 1500)
    assert np.abs(traj.states - stepwise(example, traj)).max() <= 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 3), s=st.integers(1, 4), with_A=st.booleans())
def test_random_sweeps_stay_feasible_and_decompose(seed, n, s, with_A):
    rng = np.random.default_rng(seed)
    P = random_problem(rng, n, s, with_A)
    T = float(rng.uniform(0.5, 2.0))
    levels = rng.uniform(-3, 3, size=(3, n))
    law = ControlLaw.from_switches(T, [T / 3, 2 * T / 3], levels)
    traj = integrate(P, law, 300)
    for i, x in enumerate(traj.states):
        assert geo.eval_constraints(P.C, i * traj.h, x).max() <= 1e-9
    assert np.all(traj.etas >= 0.0)
    assert inclusion_residual(P, traj) <= 1e-8
    assert np.abs(traj.states - stepwise(P, traj)).max() <= 1e-9


def test_decomposition_failure_names_step(example):
    traj = integrate(example, ControlLaw.constant([2.0], 1.0), 30)
    states = traj.states.copy()
    states[5] += [0.0, -0.05]  # an interior jump that no normal explains
    bad = DiscreteTrajectory(traj.T, traj.k, states, traj.controls)
    with pytest.raises(DecompositionFailed) as info:
        recover_eta(example, bad)
    assert info.value.step == 4


def test_velocity_cap_warning(example):
    capped = example.replace(lipschitz=0.5)
    with pytest.warns(UserWarning, match="exceeds the cap"):
        integrate(capped, ControlLaw.constant([2.0], 1.0), 50)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        integrate(example.replace(lipschitz=5.0), ControlLaw.constant([2.0], 1.0), 50)


def test_explicit_residual_uses_relaxation(example):
    traj = integrate(example, ControlLaw.constant([2.0], 1.0), 301)
    # contact falls inside a step; at that step the explicit form sees no active row yet
    loose = inclusion_residual(example, traj, explicit=True)
    assert loose > 0.1
    assert inclusion_residual(example, traj, explicit=True, tau=loose) == 0.0


def test_grid_refinement_converges(example):
    law = (1.8, lambda t: 2.0 * math.cos(3.0 * t))
    gaps = [trajectory_distance(integrate(example, law, k), integrate(example, law, 2 * k)) for k in (100, 200, 400)]
    # first order: each doubling roughly halves the gap
    assert 0.4 < gaps[1] / gaps[0] < 0.6 and 0.4 < gaps[2] / gaps[1] < 0.6
    with pytest.raises(ValueError):
        trajectory_distance(integrate(example, law, 100), integrate(example, law, 150))
