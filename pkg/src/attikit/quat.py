"""Quaternion and rotation-matrix algebra.

Conventions
-----------
* Storage is scalar-first, ``q = [m, n1, n2, n3]``.
* Multiplication is the Hamilton product (``i * j = k``).
* A unit quaternion ``q`` describes the orientation of a body frame B relative
  to the inertial frame N.  ``to_rotmat(q)`` maps B coordinates to N
  coordinates, i.e. ``v_N = q * [0, v_B] * q^-1``.
* Axis-angle extraction never flips the hemisphere: ``q`` and ``-q`` give
  angles ``theta`` and ``2*pi - theta``.  The control laws rely on this.

Every function accepts arrays with arbitrary leading batch dimensions
(``(..., 4)`` for quaternions, ``(..., 3)`` for vectors) and works
elementwise over them, so a batch of simulations produces bit-identical
results to running each case on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_AXIS = 1e-9
"""Vector-part norm below which the rotation axis is treated as undefined."""

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


class QuaternionDomainError(ValueError):
    """Raised for zero-norm or non-unit inputs where a unit quaternion is required."""


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched 3-vector cross product (explicit components, no BLAS)."""
    a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2]
    b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack(
        [a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1], axis=-1
    )


def matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``M @ v`` for a fixed 3x3 ``M`` and batched ``v``.

    Written out by component so the summation order never depends on the
    batch size.
    """
    v1, v2, v3 = v[..., 0], v[..., 1], v[..., 2]
    return np.stack(
        [M[i, 0] * v1 + M[i, 1] * v2 + M[i, 2] * v3 for i in range(3)], axis=-1
    )


def qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a * b``."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def qconj(q: np.ndarray) -> np.ndarray:
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qinv(q: np.ndarray) -> np.ndarray:
    """Multiplicative inverse ``conj(q) / |q|^2``; the conjugate for unit ``q``."""
    q = np.asarray(q, dtype=float)
    n2 = np.sum(q * q, axis=-1)
    if np.any(n2 == 0.0):
        raise QuaternionDomainError("cannot invert a zero quaternion")
    return qconj(q) / n2[..., None]


def qnormalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    norm = _norm(q)
    if np.any(norm == 0.0):
        raise QuaternionDomainError("cannot normalize a zero quaternion")
    return q / norm[..., None]


def pure(v: np.ndarray) -> np.ndarray:
    """Embed a 3-vector as the pure quaternion ``[0, v]``."""
    v = np.asarray(v, dtype=float)
    return np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)


def _require_unit(q: np.ndarray, tol: float, what: str = "quaternion") -> None:
    err = np.abs(_norm(q) - 1.0)
    if np.any(err > tol):
        raise QuaternionDomainError(
            f"{what} must have unit norm (max deviation {np.max(err):.3e} > {tol:g})"
        )


def to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix taking body-frame vectors to inertial-frame vectors."""
    q = np.asarray(q, dtype=float)
    _require_unit(q, 1e-6)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rows = [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


@dataclass(frozen=True)
class AxisAngleError:
    """Euler axis-angle decomposition of an attitude-error quaternion.

    ``theta_e`` lies in ``[0, 2*pi]``.  Where ``axis_defined`` is false the
    vector part is numerically zero (``theta_e`` near 0 or near ``2*pi``) and
    ``u_e`` holds the placeholder ``[1, 0, 0]``.
    """

    theta_e: np.ndarray
    u_e: np.ndarray
    axis_defined: np.ndarray


def axis_angle_of(q_e: np.ndarray) -> AxisAngleError:
    q_e = np.asarray(q_e, dtype=float)
    n = q_e[..., 1:]
    n_norm = _norm(n)
    theta = 2.0 * np.arctan2(n_norm, q_e[..., 0])
    defined = n_norm > EPS_AXIS
    safe = np.where(defined, n_norm, 1.0)
    u = np.where(defined[..., None], n / safe[..., None], np.array([1.0, 0.0, 0.0]))
    return AxisAngleError(theta_e=theta, u_e=u, axis_defined=defined)


def from_axis_angle(u: np.ndarray, theta) -> np.ndarray:
    """Unit quaternion for a rotation of ``theta`` rad about unit axis ``u``."""
    u = np.asarray(u, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(np.abs(_norm(u) - 1.0) > 1e-9):
        raise QuaternionDomainError("rotation axis must be a unit vector")
    half = 0.5 * theta
    vec = u * np.sin(half)[..., None]
    scalar = np.broadcast_to(np.cos(half)[..., None], vec.shape[:-1] + (1,))
    return np.concatenate([scalar, vec], axis=-1)
