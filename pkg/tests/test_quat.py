import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attikit.quat import (
    EPS_AXIS,
    IDENTITY,
    QuaternionDomainError,
    axis_angle_of,
    from_axis_angle,
    qinv,
    qmul,
    qnormalize,
    to_rotmat,
)
from oracles import hamilton_left_matrix, rodrigues, unit_vectors

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
quats = arrays(np.float64, 4, elements=finite)
unit_quats = quats.filter(lambda q: np.linalg.norm(q) > 1e-3).map(lambda q: q / np.linalg.norm(q))
axes = arrays(np.float64, 3, elements=finite).filter(
    lambda v: np.linalg.norm(v) > 1e-3
).map(lambda v: v / np.linalg.norm(v))


def test_qmul_identity_element():
    q = np.array([0.5, 0.5, 0.5, 0.5])
    np.testing.assert_array_equal(qmul(IDENTITY, q), q)


def test_hamilton_i_times_j_is_k():
    i, j = np.array([0.0, 1, 0, 0]), np.array([0.0, 0, 1, 0])
    np.testing.assert_array_equal(qmul(i, j), [0, 0, 0, 1])
    np.testing.assert_array_equal(qmul(j, i), [0, 0, 0, -1])


def test_qmul_matches_matrix_form():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 50, 4))
    expected = np.einsum("nij,nj->ni", np.stack([hamilton_left_matrix(x) for x in a]), b)
    np.testing.assert_allclose(qmul(a, b), expected, rtol=0, atol=1e-14)


def test_q_times_inverse_is_identity_for_random_units():
    rng = np.random.default_rng(2)
    q = qnormalize(rng.standard_normal((100, 4)))
    conj = q * np.array([1, -1, -1, -1])
    np.testing.assert_allclose(qinv(q), conj, atol=1e-15)
    np.testing.assert_allclose(qmul(q, qinv(q)), np.tile(IDENTITY, (100, 1)), atol=1e-12)
    np.testing.assert_allclose(qmul(qinv(q), q), np.tile(IDENTITY, (100, 1)), atol=1e-12)


@given(quats, quats)
def test_norm_is_multiplicative(a, b):
    # hypot avoids squaring underflow for subnormal components
    na, nb = math.hypot(*a), math.hypot(*b)
    assert math.hypot(*qmul(a, b)) == pytest.approx(na * nb, rel=1e-12, abs=1e-300)


@given(unit_quats, unit_quats, unit_quats)
def test_qmul_associative(a, b, c):
    np.testing.assert_allclose(qmul(qmul(a, b), c), qmul(a, qmul(b, c)), atol=1e-12)


def test_qinv_examples():
    np.testing.assert_array_equal(qinv(IDENTITY), IDENTITY)
    np.testing.assert_array_equal(qinv(np.array([0.0, 1, 0, 0])), [0, -1, 0, 0])


def test_qinv_non_unit_is_true_inverse():
    q = np.array([1.0, 2.0, -1.0, 0.5])
    np.testing.assert_allclose(qmul(q, qinv(q)), IDENTITY, atol=1e-15)


@pytest.mark.parametrize("fn", [qinv, qnormalize])
def test_zero_norm_is_domain_error(fn):
    with pytest.raises(QuaternionDomainError):
        fn(np.zeros(4))


def test_qnormalize_examples():
    np.testing.assert_array_equal(qnormalize(np.array([2.0, 0, 0, 0])), IDENTITY)
    np.testing.assert_allclose(qnormalize(np.array([0.0, 0, 3, 4])), [0, 0, 0.6, 0.8], atol=1e-16)


@given(quats.filter(lambda q: np.linalg.norm(q) > 1e-6))
def test_qnormalize_unit_and_idempotent(q):
    u = qnormalize(q)
    assert abs(np.linalg.norm(u) - 1) <= 1e-12
    np.testing.assert_allclose(qnormalize(u), u, rtol=0, atol=1e-15)
    # direction preserved
    assert np.dot(u, q) > 0


def test_rotmat_identity_and_quarter_turn():
    np.testing.assert_array_equal(to_rotmat(IDENTITY), np.eye(3))
    q = from_axis_angle(np.array([0.0, 0, 1]), math.pi / 2)
    np.testing.assert_allclose(to_rotmat(q) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


@given(unit_quats)
def test_rotmat_in_so3_and_matches_rodrigues(q):
    R = to_rotmat(q)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-10)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(to_rotmat(qinv(q)), R.T, atol=1e-12)
    aa = axis_angle_of(q)
    if aa.axis_defined:
        np.testing.assert_allclose(R, rodrigues(aa.u_e, aa.theta_e), atol=1e-9)


def test_rotmat_rotates_like_conjugation():
    rng = np.random.default_rng(3)
    q = qnormalize(rng.standard_normal(4))
    v = rng.standard_normal(3)
    rotated = qmul(qmul(q, np.concatenate([[0.0], v])), qinv(q))[1:]
    np.testing.assert_allclose(to_rotmat(q) @ v, rotated, atol=1e-14)


def test_rotmat_rejects_non_unit():
    with pytest.raises(QuaternionDomainError):
        to_rotmat(np.array([1.0, 0, 0, 1e-2]))


def test_axis_angle_examples():
    aa = axis_angle_of(IDENTITY)
    assert aa.theta_e == 0 and not aa.axis_defined
    np.testing.assert_array_equal(aa.u_e, [1, 0, 0])

    aa = axis_angle_of(np.array([0.0, 1, 0, 0]))
    assert aa.theta_e == pytest.approx(math.pi, abs=1e-15)
    np.testing.assert_array_equal(aa.u_e, [1, 0, 0])

    u = np.array([2.0, -1, 2]) / 3
    c, s = math.cos(math.radians(150)), math.sin(math.radians(150))
    aa = axis_angle_of(np.concatenate([[c], s * u]))
    assert aa.theta_e == pytest.approx(math.radians(300), abs=1e-12)
    np.testing.assert_allclose(aa.u_e, u, atol=1e-12)


def test_axis_flag_near_full_turn():
    q = np.array([-1.0, 1e-12, 0, 0])
    aa = axis_angle_of(q / np.linalg.norm(q))
    assert not aa.axis_defined
    assert abs(aa.theta_e - 2 * math.pi) <= EPS_AXIS * 10


def test_from_axis_angle_examples():
    np.testing.assert_array_equal(from_axis_angle(np.array([0.0, 1, 0]), 0.0), IDENTITY)
    np.testing.assert_allclose(from_axis_angle(np.array([0.0, 0, 1]), math.pi), [0, 0, 0, 1],
                               atol=1e-16)


def test_from_axis_angle_rejects_non_unit_axis():
    with pytest.raises(QuaternionDomainError):
        from_axis_angle(np.array([1.0, 1.0, 0.0]), 0.3)


def test_round_trip_over_all_degrees():
    rng = np.random.default_rng(4)
    theta = np.radians(np.arange(1, 360))
    u = unit_vectors(rng, theta.size)
    aa = axis_angle_of(from_axis_angle(u, theta))
    assert np.max(np.abs(aa.theta_e - theta)) < 1e-9
    np.testing.assert_allclose(aa.u_e, u, atol=1e-9)


@given(axes, st.floats(1e-6, 2 * math.pi - 1e-6))
def test_round_trip_property(u, theta):
    aa = axis_angle_of(from_axis_angle(u, theta))
    assert aa.axis_defined
    assert aa.theta_e == pytest.approx(theta, abs=1e-9)
    np.testing.assert_allclose(aa.u_e, u, atol=1e-6 if theta < 1e-3 or theta > 6.28 else 1e-9)
    assert abs(np.linalg.norm(aa.u_e) - 1) <= 1e-9


@given(unit_quats)
def test_negated_quaternion_gives_complementary_angle(q):
    a, b = axis_angle_of(q), axis_angle_of(-q)
    assert a.theta_e + b.theta_e == pytest.approx(2 * math.pi, abs=1e-12)
    if a.axis_defined:
        np.testing.assert_allclose(a.u_e, -b.u_e, atol=1e-12)


@given(unit_quats)
def test_theta_range(q):
    aa = axis_angle_of(q)
    assert 0 <= aa.theta_e <= 2 * math.pi
    if not aa.axis_defined:
        assert min(aa.theta_e, 2 * math.pi - aa.theta_e) <= 2.1 * EPS_AXIS


def test_batched_matches_single():
    rng = np.random.default_rng(5)
    a, b = qnormalize(rng.standard_normal((2, 8, 4)))
    batch = qmul(a, b)
    for k in range(8):
        np.testing.assert_array_equal(batch[k], qmul(a[k], b[k]))
