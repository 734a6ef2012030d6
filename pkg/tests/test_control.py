import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attikit.control import (
    PAPER_GAINS,
    ConstantReference,
    ControlLaw,
    Gains,
    InconsistentReferenceError,
    SplineReference,
    attitude_error,
    control_torque,
    desired_omega_body,
    sea_scale,
    sea_vector,
)
from attikit.dynamics import CRAZYFLIE_INERTIA, BodyState, InertiaMatrix
from attikit.quat import IDENTITY, axis_angle_of, from_axis_angle, qmul, qnormalize
from oracles import rodrigues, sea_magnitude, unit_vectors

LAWS = list(ControlLaw)
X = np.array([1.0, 0, 0])


def err_quat(u, theta):
    return from_axis_angle(np.asarray(u, dtype=float), theta)


# ---------------------------------------------------------------- misc types


def test_law_parsing_and_codes():
    assert ControlLaw.parse("SEA1") is ControlLaw.SEA1
    assert ControlLaw.parse("benchmark") is ControlLaw.BENCHMARK
    assert ControlLaw.parse("tau2") is ControlLaw.SEA2
    assert [l.code for l in LAWS] == [0, 1, 2]
    with pytest.raises(ValueError):
        ControlLaw.parse("pid")


@pytest.mark.parametrize("kt,kw", [(0, 1), (1, 0), (-1, 1), (float("nan"), 1)])
def test_gains_must_be_positive(kt, kw):
    with pytest.raises(ValueError):
        Gains(kt, kw)


# ---------------------------------------------------------------- attitude error


def test_attitude_error_examples():
    q = qnormalize(np.array([0.3, 0.1, -0.5, 0.7]))
    np.testing.assert_allclose(attitude_error(q, q), IDENTITY, atol=1e-15)
    q_d = from_axis_angle(np.array([0.0, 0, 1]), math.pi)
    np.testing.assert_allclose(attitude_error(IDENTITY, q_d), [0, 0, 0, 1], atol=1e-16)


def test_attitude_error_from_rotated_body_has_opposite_axis():
    rng = np.random.default_rng(20)
    theta = np.radians(np.arange(1, 360))
    u = unit_vectors(rng, theta.size)
    aa = axis_angle_of(attitude_error(from_axis_angle(u, theta), IDENTITY))
    np.testing.assert_allclose(aa.theta_e, theta, atol=1e-12)
    np.testing.assert_allclose(aa.u_e, -u, atol=1e-9)


def test_attitude_error_no_hemisphere_flip():
    q_e = attitude_error(from_axis_angle(X, math.radians(300)), IDENTITY)
    assert q_e[0] < 0
    assert axis_angle_of(q_e).theta_e == pytest.approx(math.radians(300))


# ---------------------------------------------------------------- desired rate


def test_desired_omega_zero_rate():
    q = qnormalize(np.array([1.0, 2, 3, 4]))
    np.testing.assert_array_equal(desired_omega_body(q, q, np.zeros(4)), 0)


def test_desired_omega_aligned_frames_equals_hat_rate():
    q_d = qnormalize(np.array([0.5, -0.1, 0.2, 0.8]))
    w_hat = np.array([0.3, -2.0, 1.5])
    qdot_d = 0.5 * qmul(q_d, np.concatenate([[0.0], w_hat]))
    np.testing.assert_allclose(desired_omega_body(q_d, q_d, qdot_d), w_hat, atol=1e-14)


@pytest.mark.parametrize("q", [IDENTITY, qnormalize(np.array([0.7, 0.2, -0.4, 0.5]))])
def test_desired_omega_against_finite_difference_spin(q):
    axis = np.array([0.0, 0.0, 1.0])
    Omega, t, h = 2.5, 0.3, 1e-5
    q0 = qnormalize(np.array([0.9, 0.3, 0.1, -0.2]))

    def q_d(t):
        return qmul(from_axis_angle(axis, Omega * t), q0)

    qdot_fd = (q_d(t + h) - q_d(t - h)) / (2 * h)
    S = np.eye(3) if q is IDENTITY else rodrigues(axis_angle_of(q).u_e, axis_angle_of(q).theta_e)
    expected = S.T @ (Omega * axis)
    np.testing.assert_allclose(desired_omega_body(q, q_d(t), qdot_fd), expected, atol=1e-8)


def test_inconsistent_reference_rate_rejected():
    with pytest.raises(InconsistentReferenceError):
        desired_omega_body(IDENTITY, IDENTITY, np.array([0.1, 0, 0, 0]))


# ---------------------------------------------------------------- SEA vectors


def test_sea_vectors_at_half_turn():
    q_e = err_quat(X, math.pi)
    np.testing.assert_allclose(sea_vector(ControlLaw.BENCHMARK, q_e), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(sea_vector(ControlLaw.SEA1, q_e), [math.pi / 2, 0, 0], atol=1e-15)
    np.testing.assert_allclose(sea_vector(ControlLaw.SEA2, q_e), [math.sqrt(2), 0, 0], atol=1e-15)


def test_sea_norms_at_300_degrees():
    u = np.array([1.0, 2.0, 2.0]) / 3
    q_e = err_quat(u, math.radians(300))
    n, p1, p2 = (np.linalg.norm(sea_vector(l, q_e)) for l in LAWS)
    assert n == pytest.approx(0.5, abs=1e-12)
    assert p1 == pytest.approx(150 * math.pi / 180, abs=1e-12)
    assert p2 == pytest.approx(2 * math.sin(math.radians(75)), abs=1e-12)
    assert p1 > p2 > n
    # closed-form effort ratios against the benchmark
    assert p1 / n == pytest.approx(5.236, abs=1e-3)
    assert p2 / n == pytest.approx(3.864, abs=1e-3)


@pytest.mark.parametrize("law", LAWS)
def test_sea_vector_zero_at_identity(law):
    np.testing.assert_array_equal(sea_vector(law, IDENTITY), 0)


@pytest.mark.parametrize("law", LAWS)
def test_sea_vector_zero_when_axis_undefined_near_full_turn(law):
    q = np.array([-1.0, 1e-12, 0, 0])
    np.testing.assert_array_equal(sea_vector(law, q / np.linalg.norm(q)), 0)


@given(st.floats(1e-9, 0.1))
def test_small_angle_agreement(theta):
    q_e = err_quat(np.array([0.0, 0.6, 0.8]), theta)
    vecs = [sea_vector(l, q_e) for l in LAWS]
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.linalg.norm(vecs[i] - vecs[j]) <= 0.003 * theta


def test_class_k_monotonicity_and_benchmark_peak():
    theta = np.linspace(0, 2 * math.pi, 20001)[:-1]
    u = np.tile([0.0, 0.0, 1.0], (theta.size, 1))
    q_e = from_axis_angle(u, theta)
    norms = {l: np.linalg.norm(sea_vector(l, q_e), axis=1) for l in LAWS}
    live = theta > 1e-8
    assert np.all(np.diff(norms[ControlLaw.SEA1][live]) > 0)
    assert np.all(np.diff(norms[ControlLaw.SEA2][live]) > 0)
    nb = norms[ControlLaw.BENCHMARK]
    assert not np.all(np.diff(nb[live]) > 0)
    assert theta[np.argmax(nb)] == pytest.approx(math.pi, abs=1e-3)
    assert np.all(norms[ControlLaw.SEA2][live] < norms[ControlLaw.SEA1][live])


@given(st.floats(1e-6, 2 * math.pi - 1e-6))
def test_sea_vectors_point_along_error_axis(theta):
    u = np.array([2.0, -3.0, 6.0]) / 7
    q_e = err_quat(u, theta)
    for law in LAWS:
        p = sea_vector(law, q_e)
        np.testing.assert_allclose(p, u * float(sea_magnitude(law.value, theta)), atol=1e-12)
        assert p @ u > 0


def test_sea_scale_matches_independent_magnitudes():
    theta = np.linspace(0, 2 * math.pi, 97)
    for law in LAWS:
        np.testing.assert_allclose(sea_scale(law, theta), sea_magnitude(law.value, theta),
                                   atol=1e-15)


def test_mixed_law_codes_match_single_law_evaluation():
    rng = np.random.default_rng(21)
    theta = rng.uniform(0, 2 * math.pi, 30)
    q_e = from_axis_angle(unit_vectors(rng, 30), theta)
    codes = rng.integers(0, 3, 30)
    mixed = sea_vector(codes, q_e)
    for k, code in enumerate(codes):
        np.testing.assert_array_equal(mixed[k], sea_vector(LAWS[code], q_e[k]))


# ---------------------------------------------------------------- torque


@pytest.mark.parametrize("law", LAWS)
def test_torque_zero_at_equilibrium(law):
    ref = ConstantReference()
    s = BodyState(IDENTITY.copy(), np.zeros(3))
    np.testing.assert_array_equal(control_torque(law, s, ref.at(0), CRAZYFLIE_INERTIA, PAPER_GAINS), 0)


@pytest.mark.parametrize("law", LAWS)
def test_torque_hand_value_pure_damping(law):
    J = InertiaMatrix.diag(1, 2, 3)
    s = BodyState(IDENTITY.copy(), np.array([0.0, 0, 1]))
    tau = control_torque(law, s, ConstantReference().at(0), J, PAPER_GAINS)
    np.testing.assert_allclose(tau, [0, 0, -3 * PAPER_GAINS.k_omega], atol=1e-12)


def test_torque_at_300_degrees_has_expected_proportional_part():
    J = CRAZYFLIE_INERTIA
    u = np.array([0.0, 0.0, 1.0])
    s = BodyState(from_axis_angle(-u, math.radians(300)), np.zeros(3))
    for law, mag in zip(LAWS, (0.5, 150 * math.pi / 180, 2 * math.sin(math.radians(75)))):
        tau = control_torque(law, s, ConstantReference().at(0), J, PAPER_GAINS)
        np.testing.assert_allclose(tau, J.matrix @ (PAPER_GAINS.k_theta * mag * u), rtol=1e-12)


@pytest.mark.parametrize("law", LAWS)
def test_torque_equivariant_in_error(law):
    rng = np.random.default_rng(22)
    q, q_d, r = qnormalize(rng.standard_normal((3, 4)))
    w = rng.normal(0, 3, 3)
    J = CRAZYFLIE_INERTIA
    t1 = control_torque(law, BodyState(q, w), ConstantReference(q_d).at(0), J, PAPER_GAINS)
    t2 = control_torque(law, BodyState(qmul(r, q), w), ConstantReference(qmul(r, q_d)).at(0), J,
                        PAPER_GAINS)
    np.testing.assert_allclose(t1, t2, rtol=1e-10, atol=1e-12)


def test_torque_adds_feedforward_through_inertia():
    J = InertiaMatrix.diag(1, 2, 3)
    s = BodyState(IDENTITY.copy(), np.zeros(3))
    acc = np.array([1.0, -1.0, 0.5])
    tau = control_torque(ControlLaw.SEA1, s, (IDENTITY, np.zeros(4), acc), J, PAPER_GAINS)
    np.testing.assert_allclose(tau, [1, -2, 1.5])


# ---------------------------------------------------------------- references


def test_spline_reference_is_unit_and_tangent():
    t = np.linspace(0, 1, 6)
    q = from_axis_angle(np.tile([0.0, 0.0, 1.0], (6, 1)), 0.8 * t)
    ref = SplineReference(t, q)
    for ti in (0.0, 0.33, 0.71, 1.0):
        q_d, qdot_d, acc = ref.at(ti)
        assert abs(np.linalg.norm(q_d) - 1) < 1e-12
        assert abs(q_d @ qdot_d) < 1e-12
        np.testing.assert_array_equal(acc, 0)
        np.testing.assert_allclose(desired_omega_body(q_d, q_d, qdot_d), [0, 0, 0.8], atol=2e-3)


def test_spline_reference_holds_outside_span():
    t = np.array([0.0, 1.0, 2.0])
    q = from_axis_angle(np.tile(X, (3, 1)), np.array([0.0, 0.5, 1.0]))
    ref = SplineReference(t, q)
    q_d, qdot_d, _ = ref.at(5.0)
    np.testing.assert_allclose(q_d, q[-1], atol=1e-12)
    np.testing.assert_array_equal(qdot_d, 0)


def test_spline_reference_rejects_hemisphere_jump():
    q = from_axis_angle(np.tile(X, (3, 1)), np.array([0.0, 0.5, 1.0]))
    q[2] *= -1
    with pytest.raises(ValueError, match="hemisphere"):
        SplineReference([0.0, 1.0, 2.0], q)


def test_spline_reference_rejects_unsorted_times():
    q = np.tile(IDENTITY, (3, 1))
    with pytest.raises(ValueError):
        SplineReference([0.0, 2.0, 1.0], q)
