"""Attitude error, reference transforms, SEA vectors and the three torque laws.

All three laws share the feedback-linearized form::

    tau = J [k_theta * p_e + k_omega * omega_e + omegadot_d] + omega x J omega

and differ only in the proportional vector ``p_e``:

* ``BENCHMARK``: ``n_e``, the vector part of the error quaternion
  (magnitude ``sin(theta_e / 2)``).
* ``SEA1``: ``u_e * theta_e / 2``.
* ``SEA2``: ``2 * u_e * sin(theta_e / 4)``.

Where the error axis is undefined (``|n_e| <= EPS_AXIS``) the proportional
term is zero for every law.

Gains are plain scalars.  The customary units are N m for ``k_theta`` and
N m s / rad for ``k_omega``; since both multiply quantities already scaled by
``J``, they act as s^-2 and s^-1 respectively.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import BodyState, InertiaMatrix
from .quat import (
    IDENTITY,
    AxisAngleError,
    axis_angle_of,
    cross,
    matvec,
    qinv,
    qmul,
    qnormalize,
    to_rotmat,
)


class ControlLaw(enum.Enum):
    BENCHMARK = "b"
    SEA1 = "sea1"
    SEA2 = "sea2"

    @property
    def code(self) -> int:
        return _LAW_CODES[self]

    @classmethod
    def parse(cls, text: str) -> "ControlLaw":
        key = text.strip().lower()
        aliases = {"benchmark": "b", "tau_b": "b", "tau1": "sea1", "tau2": "sea2"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(
                f"unknown control law {text!r} (expected one of b, sea1, sea2)"
            ) from None


_LAW_CODES = {ControlLaw.BENCHMARK: 0, ControlLaw.SEA1: 1, ControlLaw.SEA2: 2}


@dataclass(frozen=True)
class Gains:
    k_theta: float
    k_omega: float

    def __post_init__(self):
        if not (self.k_theta > 0 and self.k_omega > 0):
            raise ValueError(
                f"gains must be strictly positive, got k_theta={self.k_theta!r}, "
                f"k_omega={self.k_omega!r}"
            )


PAPER_GAINS = Gains(k_theta=1000.0, k_omega=100.0)


class InconsistentReferenceError(ValueError):
    """The reference rate is not tangent to the unit sphere at ``q_d``."""


# --------------------------------------------------------------------------- #
# References
# --------------------------------------------------------------------------- #


class Reference:
    """Time-parameterized desired attitude.

    Subclasses implement :meth:`at`, returning ``(q_d, qdot_d, omegadot_d)``
    with ``omegadot_d`` the body-frame feedforward acceleration.
    """

    is_constant = False

    def at(self, t: float):
        raise NotImplementedError


class ConstantReference(Reference):
    """Fixed set-point; ``qdot_d`` and the feedforward are identically zero."""

    is_constant = True

    def __init__(self, q_d=IDENTITY):
        q_d = np.asarray(q_d, dtype=float)
        if q_d.shape != (4,) or abs(np.linalg.norm(q_d) - 1.0) > 1e-9:
            raise ValueError("constant reference must be a single unit quaternion")
        self.q_d = q_d
        self._zero_rate = np.zeros(4)
        self._zero_acc = np.zeros(3)

    def at(self, t: float):
        return self.q_d, self._zero_rate, self._zero_acc

    def __repr__(self) -> str:
        return f"ConstantReference({self.q_d.tolist()!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, ConstantReference) and np.array_equal(
            self.q_d, other.q_d
        )

    __hash__ = None


class SplineReference(Reference):
    """Cubic-spline interpolation of sampled reference quaternions.

    The spline runs through the raw components and is projected back onto the
    unit sphere, so ``qdot_d`` is always tangent.  Consecutive samples must
    stay in the same hemisphere (positive dot product); a sign jump would flip
    the attitude error to the complementary angle and is rejected rather than
    silently repaired.  Outside the sample span the end values are held with
    zero rate.
    """

    def __init__(self, times, quats, omegadot_body=None):
        from scipy.interpolate import CubicSpline

        times = np.asarray(times, dtype=float)
        quats = np.asarray(quats, dtype=float)
        if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing, length >= 2")
        if quats.shape != (len(times), 4):
            raise ValueError("need one quaternion per sample time")
        quats = qnormalize(quats)
        dots = np.sum(quats[1:] * quats[:-1], axis=-1)
        if np.any(dots <= 0.0):
            k = int(np.argmax(dots <= 0.0))
            raise ValueError(
                f"reference samples {k} and {k + 1} are in opposite hemispheres"
            )
        self.t0, self.t1 = float(times[0]), float(times[-1])
        self._q = CubicSpline(times, quats, axis=0)
        self._dq = self._q.derivative()
        if omegadot_body is None:
            self._acc = None
        else:
            acc = np.asarray(omegadot_body, dtype=float)
            if acc.shape != (len(times), 3):
                raise ValueError("need one feedforward vector per sample time")
            self._acc = CubicSpline(times, acc, axis=0)

    def at(self, t: float):
        inside = self.t0 <= t <= self.t1
        tc = min(max(t, self.t0), self.t1)
        raw = self._q(tc)
        norm = np.linalg.norm(raw)
        q_d = raw / norm
        if inside:
            draw = self._dq(tc)
            qdot_d = (draw - q_d * np.dot(q_d, draw)) / norm
        else:
            qdot_d = np.zeros(4)
        acc = np.zeros(3) if self._acc is None or not inside else self._acc(tc)
        return q_d, qdot_d, acc


# --------------------------------------------------------------------------- #
# Error quantities
# --------------------------------------------------------------------------- #


def attitude_error(q: np.ndarray, q_d: np.ndarray) -> np.ndarray:
    """``q_e = q^-1 (x) q_d``: rotation from the body frame to the desired frame.

    No hemisphere switching is applied.
    """
    return qmul(qinv(q), q_d)


def desired_omega_body(q, q_d, qdot_d, tol: float = 1e-6) -> np.ndarray:
    """Desired angular velocity expressed in the current body frame.

    ``[0, w_hat] = 2 q_d^-1 (x) qdot_d`` gives the rate in desired-frame
    coordinates, which is then mapped through N into B.
    """
    q_d = np.asarray(q_d, dtype=float)
    rate = 2.0 * qmul(qinv(q_d), np.asarray(qdot_d, dtype=float))
    if np.any(np.abs(rate[..., 0]) > tol):
        raise InconsistentReferenceError(
            "qdot_d is not tangent to the unit sphere at q_d "
            f"(scalar part {np.max(np.abs(rate[..., 0])):.3e})"
        )
    w_hat = rate[..., 1:]
    S = to_rotmat(q)
    S_d = to_rotmat(q_d)
    w_n = np.einsum("...ij,...j->...i", S_d, w_hat)
    return np.einsum("...ji,...j->...i", S, w_n)


def sea_scale(law, theta_e: np.ndarray) -> np.ndarray:
    """Magnitude multiplying ``u_e`` in the proportional term.

    ``law`` is a :class:`ControlLaw` or an integer array of law codes
    broadcastable against ``theta_e`` (mixed-law batches).
    """
    if isinstance(law, ControlLaw):
        if law is ControlLaw.BENCHMARK:
            return np.sin(0.5 * theta_e)
        if law is ControlLaw.SEA1:
            return 0.5 * theta_e
        return 2.0 * np.sin(0.25 * theta_e)
    codes = np.asarray(law)
    return np.where(
        codes == 0,
        np.sin(0.5 * theta_e),
        np.where(codes == 1, 0.5 * theta_e, 2.0 * np.sin(0.25 * theta_e)),
    )


def sea_vector(law, q_e: np.ndarray, aa: AxisAngleError | None = None) -> np.ndarray:
    """Proportional-term vector of ``law`` for error quaternion ``q_e``.

    Pass a precomputed ``aa = axis_angle_of(q_e)`` to avoid recomputing it.
    """
    q_e = np.asarray(q_e, dtype=float)
    if aa is None:
        aa = axis_angle_of(q_e)
    if law is ControlLaw.BENCHMARK:
        vec = q_e[..., 1:]
    else:
        vec = aa.u_e * sea_scale(law, aa.theta_e)[..., None]
        if not isinstance(law, ControlLaw):
            vec = np.where((np.asarray(law) == 0)[..., None], q_e[..., 1:], vec)
    return np.where(aa.axis_defined[..., None], vec, 0.0)


def error_state(s: BodyState, ref_at_t):
    """Return ``(q_e, omega_e)`` for state ``s`` against ``(q_d, qdot_d, omegadot_d)``."""
    q_d, qdot_d, _ = ref_at_t
    q = np.asarray(s.q, dtype=float)
    q_e = attitude_error(q, q_d)
    if np.any(qdot_d):
        omega_e = desired_omega_body(q, q_d, qdot_d) - s.omega
    else:
        omega_e = -np.asarray(s.omega, dtype=float)
    return q_e, omega_e


def control_torque(law, s: BodyState, ref_at_t, J: InertiaMatrix, g: Gains):
    """Body torque commanded by ``law`` (a :class:`ControlLaw` or code array)."""
    q_e, omega_e = error_state(s, ref_at_t)
    p = sea_vector(law, q_e)
    accel = g.k_theta * p + g.k_omega * omega_e + ref_at_t[2]
    w = np.asarray(s.omega, dtype=float)
    return matvec(J.matrix, accel) + cross(w, matvec(J.matrix, w))
