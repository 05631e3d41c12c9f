from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robust_mrta.dynamics import (DisturbanceHull, GroundTruthDisturbance, SingleIntegratorModel,
                                  UnicycleModel, apply_all, apply_ground_truth, evaluate_inclusion,
                                  output_dynamics, step)
from robust_mrta.errors import InvalidArgument

angles = st.floats(-np.pi, np.pi, allow_nan=False)
small = st.floats(-1.0, 1.0, allow_nan=False)


def test_zero_hull_inclusion_is_nominal():
    m = UnicycleModel()
    inc = evaluate_inclusion(m, DisturbanceHull.zero(3), [0.3, -0.2, 0.7], [0.1, 0.5])
    np.testing.assert_allclose(inc.nominal, m.nominal_rate([0.3, -0.2, 0.7], [0.1, 0.5]))
    np.testing.assert_array_equal(inc.vertices, np.zeros((1, 3)))


def test_unicycle_rates_by_hand():
    m = UnicycleModel()
    np.testing.assert_allclose(m.nominal_rate([0, 0, 0], [1, 0]), [1, 0, 0])
    np.testing.assert_allclose(m.nominal_rate([0, 0, np.pi / 2], [1, 1]), [0, 1, 1], atol=1e-15)


def test_inclusion_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        evaluate_inclusion(UnicycleModel(), DisturbanceHull.zero(2), [0, 0, 0], [0, 0])
    with pytest.raises(InvalidArgument):
        UnicycleModel().nominal_rate([0, 0], [0, 0])


@pytest.mark.parametrize("theta,u,expected", [
    (0.0, [1, 0], [1, 0]),
    (0.0, [0, 1], [0, 0.05]),
    (np.pi / 2, [1, 0], [0, 1]),
])
def test_output_dynamics_examples(theta, u, expected):
    np.testing.assert_allclose(output_dynamics(UnicycleModel(lookahead=0.05), [0, 0, theta], u),
                               expected, atol=1e-15)


def test_output_dynamics_matches_jacobian_chain_rule():
    m = UnicycleModel()
    x = np.array([0.2, -0.4, 1.1])
    u = np.array([0.15, -0.7])
    np.testing.assert_allclose(output_dynamics(m, x, u), m.output_jacobian(x) @ m.nominal_rate(x, u))


@given(angles, small, small, small, small, st.floats(-3, 3))
def test_output_dynamics_linear_in_u(theta, a, b, c, d, k):
    m = UnicycleModel()
    x = [0.0, 0.0, theta]
    lhs = output_dynamics(m, x, [a + k * c, b + k * d])
    rhs = output_dynamics(m, x, [a, b]) + k * output_dynamics(m, x, [c, d])
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_inverse_output_map_round_trip():
    m = UnicycleModel()
    x = np.array([0.1, 0.2, -2.0])
    pdot = np.array([0.03, -0.08])
    u = m.inverse_output_map(x, pdot)
    np.testing.assert_allclose(output_dynamics(m, x, u), pdot, atol=1e-14)


def test_lookahead_must_be_positive():
    with pytest.raises(InvalidArgument):
        UnicycleModel(lookahead=0.0)


def test_ground_truth_examples():
    d = GroundTruthDisturbance((-1, 1, -1, 1), 0.02)
    u = np.array([0.1, 0.3])
    np.testing.assert_array_equal(apply_ground_truth(d, "ground", [2.0, 0, 0], u), u)
    np.testing.assert_allclose(apply_ground_truth(d, "ground", [0, 0, 0], u), u + [0.02, 0])
    strong = GroundTruthDisturbance((-1, 1, -1, 1), 0.2)
    np.testing.assert_allclose(apply_ground_truth(strong, "ground", [0, 0, np.pi / 2], u), u, atol=1e-16)
    np.testing.assert_array_equal(apply_ground_truth(d, "aerial", [0, 0, 0], u), u)


@given(st.floats(-3, 3), st.floats(-3, 3), angles)
def test_ground_truth_compact_support(px, py, theta):
    d = GroundTruthDisturbance((-0.5, 0.5, -0.5, 0.5), 0.2)
    u = np.array([0.1, 0.0])
    out = apply_ground_truth(d, "ground", [px, py, theta], u)
    if not d.inside([px, py]):
        np.testing.assert_array_equal(out, u)


def test_apply_all_adds_overlapping_regions():
    ds = [GroundTruthDisturbance((-1, 1, -1, 1), 0.02), GroundTruthDisturbance((0, 2, -1, 1), 0.03)]
    np.testing.assert_allclose(apply_all(ds, "ground", [0.5, 0, 0], [0.1, 0]), [0.15, 0])


def test_step_examples():
    m = UnicycleModel()
    x = np.array([0.3, 0.4, 1.0])
    np.testing.assert_array_equal(step(m, x, [0, 0], 0.033), x)
    np.testing.assert_allclose(step(m, [0, 0, 0], [1, 0], 0.033), [0.033, 0, 0])
    # slope: forward speed 0.1 plus 0.02 cos(0) gives 0.12 m/s for one step
    d = GroundTruthDisturbance((-1, 1, -1, 1), 0.02)
    u_d = apply_ground_truth(d, "ground", [0, 0, 0], [0.1, 0])
    np.testing.assert_allclose(step(m, [0, 0, 0], u_d, 0.033), [0.12 * 0.033, 0, 0])
    with pytest.raises(InvalidArgument):
        step(m, x, [0, 0], 0.0)


def test_step_with_offset_and_determinism():
    m = SingleIntegratorModel()
    a = step(m, [0.1, 0.2], [0.05, -0.05], 0.033, offset=[0.01, 0.0])
    b = step(m, [0.1, 0.2], [0.05, -0.05], 0.033, offset=[0.01, 0.0])
    assert a.tobytes() == b.tobytes()
    np.testing.assert_allclose(a, [0.1 + 0.033 * 0.06, 0.2 - 0.033 * 0.05])


@given(st.lists(st.lists(st.floats(-1, 1), min_size=3, max_size=3), min_size=1, max_size=8))
def test_mean_vertex_inside_bounding_box(verts):
    hull = DisturbanceHull(verts)
    lo, hi = hull.bounding_box()
    mean = np.mean(np.asarray(verts), axis=0)
    assert np.all(mean >= lo - 1e-12) and np.all(mean <= hi + 1e-12)


def test_hull_min_inner_and_validation():
    hull = DisturbanceHull([[0.1, 0, 0], [-0.1, 0, 0]])
    assert hull.min_inner([2, 0, 0]) == pytest.approx(-0.2)
    assert hull.p == 2 and hull.dim == 3
    with pytest.raises(InvalidArgument):
        DisturbanceHull(np.zeros((0, 3)))


def test_saturation():
    m = UnicycleModel()
    np.testing.assert_allclose(m.saturate([1.0, -10.0]), [0.2, -3.6])
