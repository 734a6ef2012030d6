"""Open-loop rigid-body rotational dynamics and fixed-step integration.

State equations (body-frame angular velocity ``omega``)::

    qdot     = 1/2 * q (x) [0, omega]
    omegadot = J^-1 (tau - omega x J omega)

The integrator works on a packed state ``x = [q (4), omega (3)]`` with any
number of leading batch dimensions.  The quaternion is renormalized once per
step; intermediate Runge-Kutta stages are left unnormalized.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quat import cross, matvec, pure, qmul


class IntegrationFault(RuntimeError):
    """Non-finite state produced by a step.

    ``mask`` flags the offending batch entries (a 0-d array for unbatched
    states).
    """

    def __init__(self, t: float, state: "BodyState", mask: np.ndarray):
        self.t = t
        self.state = state
        self.mask = np.asarray(mask)
        super().__init__(f"non-finite state after step ending at t = {t:.6g} s")


class InertiaMatrix:
    """Symmetric positive-definite inertia matrix with a cached inverse (kg m^2)."""

    def __init__(self, matrix):
        J = np.array(matrix, dtype=float)
        if J.shape != (3, 3):
            raise ValueError(f"inertia matrix must be 3x3, got shape {J.shape}")
        scale = np.max(np.abs(J))
        if scale == 0.0 or not np.all(np.isfinite(J)):
            raise ValueError("inertia matrix must be finite and nonzero")
        if np.max(np.abs(J - J.T)) > 1e-12 * scale:
            raise ValueError("inertia matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(J)) <= 0.0:
            raise ValueError("inertia matrix must be positive definite")
        self.matrix = J
        self.inverse = np.linalg.inv(J)
        self.matrix.setflags(write=False)
        self.inverse.setflags(write=False)

    @classmethod
    def diag(cls, j1: float, j2: float, j3: float) -> "InertiaMatrix":
        return cls(np.diag([j1, j2, j3]))

    def __repr__(self) -> str:
        return f"InertiaMatrix({self.matrix.tolist()!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, InertiaMatrix) and np.array_equal(
            self.matrix, other.matrix
        )

    __hash__ = None


CRAZYFLIE_INERTIA = InertiaMatrix.diag(16.57e-6, 16.66e-6, 29.26e-6)


@dataclass(frozen=True, eq=False)
class BodyState:
    """Attitude ``q`` (B relative to N) and body-frame angular velocity ``omega`` (rad/s)."""

    q: np.ndarray
    omega: np.ndarray

    def packed(self) -> np.ndarray:
        return np.concatenate(
            [np.asarray(self.q, dtype=float), np.asarray(self.omega, dtype=float)],
            axis=-1,
        )

    @classmethod
    def unpack(cls, x: np.ndarray) -> "BodyState":
        return cls(q=x[..., :4], omega=x[..., 4:])


class Stepper(enum.Enum):
    RK4 = "rk4"
    DP5 = "dp5"


@dataclass(frozen=True)
class _Tableau:
    c: tuple
    a: tuple
    b: tuple


_TABLEAUS = {
    Stepper.RK4: _Tableau(
        c=(0.0, 0.5, 0.5, 1.0),
        a=((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
        b=(1 / 6, 1 / 3, 1 / 3, 1 / 6),
    ),
    # Dormand-Prince 5(4), propagating the 5th-order solution. The seventh
    # (FSAL / error-estimate) stage is not needed without step-size control.
    Stepper.DP5: _Tableau(
        c=(0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0),
        a=(
            (),
            (1 / 5,),
            (3 / 40, 9 / 40),
            (44 / 45, -56 / 15, 32 / 9),
            (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
            (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
        ),
        b=(35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
    ),
}


def openloop_deriv(s: BodyState, tau: np.ndarray, J: InertiaMatrix):
    """Return ``(qdot, omegadot)`` for state ``s`` under body torque ``tau``."""
    q = np.asarray(s.q, dtype=float)
    w = np.asarray(s.omega, dtype=float)
    qdot = 0.5 * qmul(q, pure(w))
    gyro = cross(w, matvec(J.matrix, w))
    omegadot = matvec(J.inverse, np.asarray(tau, dtype=float) - gyro)
    return qdot, omegadot


TorqueFn = Callable[[float, BodyState], np.ndarray]


def _packed_deriv(t: float, x: np.ndarray, torque_fn: TorqueFn, J: InertiaMatrix):
    s = BodyState.unpack(x)
    qdot, omegadot = openloop_deriv(s, torque_fn(t, s), J)
    return np.concatenate([qdot, omegadot], axis=-1)


def step_packed(
    x: np.ndarray,
    torque_fn: TorqueFn,
    t: float,
    dt: float,
    J: InertiaMatrix,
    stepper: Stepper = Stepper.DP5,
) -> np.ndarray:
    """One explicit step on a packed state; see :func:`step`."""
    tab = _TABLEAUS[stepper]
    ks = []
    # non-finite values are reported through IntegrationFault below
    with np.errstate(invalid="ignore", over="ignore"):
        for ci, ai in zip(tab.c, tab.a):
            xi = x
            for aij, kj in zip(ai, ks):
                if aij != 0.0:
                    xi = xi + (dt * aij) * kj
            ks.append(_packed_deriv(t + ci * dt, xi, torque_fn, J))
        out = x
        for bi, ki in zip(tab.b, ks):
            if bi != 0.0:
                out = out + (dt * bi) * ki
    finite = np.all(np.isfinite(out), axis=-1)
    if not np.all(finite):
        raise IntegrationFault(t + dt, BodyState.unpack(x), ~finite)
    q = out[..., :4] / np.sqrt(np.sum(out[..., :4] ** 2, axis=-1))[..., None]
    return np.concatenate([q, out[..., 4:]], axis=-1)


def step(
    s: BodyState,
    torque_fn: TorqueFn,
    t: float,
    dt: float,
    J: InertiaMatrix,
    stepper: Stepper = Stepper.DP5,
) -> BodyState:
    """Advance ``s`` from ``t`` to ``t + dt`` with a fixed-step Runge-Kutta update.

    ``torque_fn`` is evaluated at every stage.  The result is renormalized and
    fully deterministic.  Raises :class:`IntegrationFault` if the update is not
    finite.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    return BodyState.unpack(step_packed(s.packed(), torque_fn, t, dt, J, stepper))


def kinetic_energy(omega: np.ndarray, J: InertiaMatrix) -> np.ndarray:
    return 0.5 * np.sum(omega * matvec(J.matrix, omega), axis=-1)
