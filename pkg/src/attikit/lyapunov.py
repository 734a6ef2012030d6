"""Numerical stability certification for the SEA control laws.

Closed-loop error dynamics for a constant reference (law ``j`` in {SEA1, SEA2})::

    qdot_e     = 1/2 [0, omega_e] (x) q_e
    omegadot_e = -(k_theta * p_e_j + k_omega * omega_e)

Strict Lyapunov candidates::

    V1 = 1/(2 k_theta) |omega_e|^2 + theta_e^2 / 4          + c (|n_e|^2 + n_e . omega_e)
    V2 = 1/(2 k_theta) |omega_e|^2 + 16 sin^2(theta_e / 8)  + c (|n_e|^2 + n_e . omega_e)

with ``x_e = [|n_e|, |omega_e|]`` and the bounds ``V >= x_e' P x_e`` and
``Vdot <= -x_e' Q x_e``.  Everything here is checked numerically: derivatives
along trajectories come from central finite differences of logged samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .control import ControlLaw, Gains, sea_vector
from .quat import axis_angle_of, from_axis_angle, pure, qmul
from .sim import TrajectoryRecord


class InfeasibleCouplingError(ValueError):
    """No coupling constant in the searched range makes both P and Q positive definite."""


class LyapunovUsageError(ValueError):
    pass


def _xe_terms(q_e, omega_e):
    q_e = np.asarray(q_e, dtype=float)
    omega_e = np.asarray(omega_e, dtype=float)
    n = q_e[..., 1:]
    return n, omega_e, axis_angle_of(q_e).theta_e


def _common(n, w, g: Gains, c: float):
    return 0.5 / g.k_theta * np.sum(w * w, axis=-1) + c * (
        np.sum(n * n, axis=-1) + np.sum(n * w, axis=-1)
    )


def v1(q_e, omega_e, g: Gains, c: float):
    n, w, theta = _xe_terms(q_e, omega_e)
    return _common(n, w, g, c) + 0.25 * theta**2


def v2(q_e, omega_e, g: Gains, c: float):
    n, w, theta = _xe_terms(q_e, omega_e)
    return _common(n, w, g, c) + 16.0 * np.sin(theta / 8.0) ** 2


def x_e(q_e, omega_e) -> np.ndarray:
    """``[|n_e|, |omega_e|]`` stacked on the last axis."""
    q_e = np.asarray(q_e, dtype=float)
    omega_e = np.asarray(omega_e, dtype=float)
    return np.stack(
        [np.linalg.norm(q_e[..., 1:], axis=-1), np.linalg.norm(omega_e, axis=-1)],
        axis=-1,
    )


def _lambda_min_2x2(M: np.ndarray) -> float:
    a, b, d = M[0, 0], M[0, 1], M[1, 1]
    return 0.5 * (a + d) - math.hypot(0.5 * (a - d), b)


@dataclass(frozen=True)
class StabilityMatrices:
    P: np.ndarray
    Q: np.ndarray
    c: float
    lambda_min_P: float
    lambda_min_Q: float

    @property
    def positive_definite(self) -> bool:
        return self.lambda_min_P > 0 and self.lambda_min_Q > 0

    def failing_minors(self) -> list[str]:
        """Human-readable list of leading principal minors that are not positive."""
        out = []
        for name, M in (("P", self.P), ("Q", self.Q)):
            m1 = M[0, 0]
            m2 = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
            if not m1 > 0:
                out.append(f"{name}[0,0] = {m1:.6g} <= 0")
            if not m2 > 0:
                out.append(f"det {name} = {m2:.6g} <= 0")
            if M[1, 1] <= 0:
                out.append(f"{name}[1,1] = {M[1, 1]:.6g} <= 0")
        return out


def pq_matrices(g: Gains, c: float) -> StabilityMatrices:
    if not c > 0:
        raise ValueError(f"coupling constant must be positive, got {c!r}")
    kt, kw = g.k_theta, g.k_omega
    P = np.array([[c, -0.5 * c], [-0.5 * c, 0.5 / kt]])
    off = -0.5 * c * (kw + 1.0)
    Q = np.array([[c * kt, off], [off, kw / kt - 0.5 * c]])
    return StabilityMatrices(
        P=P, Q=Q, c=c, lambda_min_P=_lambda_min_2x2(P), lambda_min_Q=_lambda_min_2x2(Q)
    )


def _feasible(g: Gains, c: float) -> bool:
    m = pq_matrices(g, c)
    for M in (m.P, m.Q):
        if not (M[0, 0] > 0 and M[0, 0] * M[1, 1] - M[0, 1] ** 2 > 0):
            return False
    return True


def max_feasible_c(g: Gains, c_max: float = 1e6, rel_tol: float = 1e-6) -> float:
    """Largest coupling constant (to ``rel_tol``) keeping P and Q positive definite.

    The feasible set is an interval ``(0, c*)``; ``c*`` is bracketed by halving
    down from ``c_max`` and then bisected.
    """
    if _feasible(g, c_max):
        return c_max
    hi = c_max
    lo = c_max
    while not _feasible(g, lo):
        hi = lo
        lo *= 0.5
        if lo < 1e-300:
            raise InfeasibleCouplingError(
                f"no c in (0, {c_max:g}] makes P and Q positive definite for {g}"
            )
    while (hi - lo) > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        if _feasible(g, mid):
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------- #
# Equilibria
# --------------------------------------------------------------------------- #


def closed_loop_rhs(law: ControlLaw, q_e, omega_e, g: Gains) -> np.ndarray:
    """Stacked ``[qdot_e (4), omegadot_e (3)]`` of the SEA error dynamics."""
    if law not in (ControlLaw.SEA1, ControlLaw.SEA2):
        raise LyapunovUsageError("equilibrium analysis covers the SEA1/SEA2 laws only")
    q_e = np.asarray(q_e, dtype=float)
    omega_e = np.asarray(omega_e, dtype=float)
    qdot = 0.5 * qmul(pure(omega_e), q_e)
    wdot = -(g.k_theta * sea_vector(law, q_e) + g.k_omega * omega_e)
    return np.concatenate([qdot, wdot], axis=-1)


def equilibrium_residual(law: ControlLaw, q_e, omega_e, g: Gains):
    """Euclidean norm of the closed-loop right-hand side; zero only at fixed points."""
    return np.linalg.norm(closed_loop_rhs(law, q_e, omega_e, g), axis=-1)


@dataclass
class UniquenessScan:
    law: str
    threshold: float
    n_points: int
    zeros: list = field(default_factory=list)
    min_nonzero_residual: float = math.inf

    @property
    def unique_at_origin(self) -> bool:
        return len(self.zeros) == 1 and self.zeros[0]["theta_deg"] == 0 and not any(
            self.zeros[0]["omega_e"]
        )


DEFAULT_SCAN_AXES = (
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (1 / math.sqrt(3), 1 / math.sqrt(3), 1 / math.sqrt(3)),
)


def uniqueness_scan(
    law: ControlLaw,
    g: Gains,
    theta_deg=range(0, 360),
    omega_values=(-10.0, -5.0, 0.0, 5.0, 10.0),
    axes=DEFAULT_SCAN_AXES,
) -> UniquenessScan:
    """Grid search for zeros of the closed-loop field.

    Scans every ``theta`` (degrees) about each axis against the full
    ``omega_values^3`` grid.  A point counts as a zero when its residual is
    below ``1e-6 * k_theta``.  All axes share ``theta = 0``, which is counted
    once.
    """
    thr = 1e-6 * g.k_theta
    w = np.array(omega_values, dtype=float)
    grid = np.stack(np.meshgrid(w, w, w, indexing="ij"), axis=-1).reshape(-1, 3)
    thetas = np.radians(np.asarray(list(theta_deg), dtype=float))
    scan = UniquenessScan(law=law.value, threshold=thr, n_points=0)
    seen = set()
    for axis in axes:
        q = from_axis_angle(np.asarray(axis), thetas)  # (T, 4)
        res = equilibrium_residual(law, q[:, None, :], grid[None, :, :], g)
        scan.n_points += res.size
        for ti, wi in zip(*np.nonzero(res < thr)):
            key = (float(np.degrees(thetas[ti])), tuple(grid[wi]))
            if key[0] == 0.0 and key in seen:
                continue
            seen.add(key)
            scan.zeros.append(
                {"theta_deg": round(key[0], 9), "omega_e": list(key[1]),
                 "axis": list(axis), "residual": float(res[ti, wi])}
            )
        nz = res[res >= thr]
        if nz.size:
            scan.min_nonzero_residual = min(scan.min_nonzero_residual, float(nz.min()))
    return scan


# --------------------------------------------------------------------------- #
# Trajectory checks
# --------------------------------------------------------------------------- #

_STENCILS = {
    3: (np.array([-0.5, 0.0, 0.5]), 1),
    5: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, 2),
}


def central_difference(y: np.ndarray, h: float, points: int = 3) -> np.ndarray:
    """Derivative at interior samples (drops ``points // 2`` samples at each end)."""
    w, half = _STENCILS[points]
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    out = np.zeros((n - 2 * half,) + y.shape[1:])
    for k, wk in enumerate(w):
        if wk != 0.0:
            out = out + wk * y[k : n - 2 * half + k]
    return out / h


@dataclass
class DecreaseReport:
    check: str
    params: dict
    samples: list
    worst_margin: float
    violations: int
    monotonic_violations: int
    deadband_samples: int
    tolerance: float
    scheme: dict

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


_PAIRING = {"V1": ControlLaw.SEA1, "V2": ControlLaw.SEA2}


def decrease_check(
    traj: TrajectoryRecord, which: str, g: Gains, c: float, points: int = 3
) -> DecreaseReport:
    """Check ``Vdot <= -lambda_min(Q) |x_e|^2 + tol`` at every interior sample.

    ``tol = 1e-2 * max(1, |V(t0)|) * (sample_dt / 1e-3)``.  Also checks that V
    never increases by more than ``tol * sample_dt`` between samples.  Both
    kinds of failure count as violations.  Samples whose stencil reaches into
    the zero-torque axis deadband (``|n_e| <= EPS_AXIS``) are excluded and
    reported as ``deadband_samples``.
    """
    which = which.upper()
    if which not in _PAIRING:
        raise LyapunovUsageError(f"unknown Lyapunov function {which!r}")
    if traj.law is not _PAIRING[which]:
        raise LyapunovUsageError(
            f"{which} certifies law {_PAIRING[which].value}, trajectory used {traj.law.value}"
        )
    if not traj.reference_constant:
        raise LyapunovUsageError("decrease check requires a constant reference")
    mats = pq_matrices(g, c)
    fn = v1 if which == "V1" else v2
    V = fn(traj.q_e, traj.omega_e, g, c)
    h = traj.sample_dt
    tol = 1e-2 * max(1.0, abs(float(V[0]))) * (h / 1e-3)
    half = _STENCILS[points][1]
    vdot = central_difference(V, h, points)
    xe = x_e(traj.q_e, traj.omega_e)[half : len(V) - half]
    bound = -mats.lambda_min_Q * np.sum(xe * xe, axis=-1)
    margin = vdot - bound
    # Inside the axis deadband the law applies no proportional torque, so the
    # analysed error dynamics do not hold there; those samples are counted only.
    live = axis_angle_of(traj.q_e).axis_defined
    window = np.ones(len(V) - 2 * half, dtype=bool)
    for k in range(2 * half + 1):
        window &= live[k : len(V) - 2 * half + k]
    mono = (np.diff(V) > tol * h) & live[1:] & live[:-1]
    inner_t = traj.t[half : len(V) - half]
    inner_v = V[half : len(V) - half]
    samples = [
        {"t": float(inner_t[i]), "V": float(inner_v[i]), "Vdot": float(vdot[i]),
         "margin": float(margin[i]), "x_e": [float(xe[i, 0]), float(xe[i, 1])],
         "checked": bool(window[i])}
        for i in range(len(vdot))
    ]
    checked = margin[window]
    n_bad = int(np.sum(checked > tol))
    n_mono = int(np.sum(mono))
    return DecreaseReport(
        check=f"decrease_{which}",
        params={"law": traj.law.value, "k_theta": g.k_theta, "k_omega": g.k_omega,
                "c": c, "lambda_min_P": mats.lambda_min_P,
                "lambda_min_Q": mats.lambda_min_Q},
        samples=samples,
        worst_margin=float(np.max(checked)) if checked.size else 0.0,
        violations=n_bad + n_mono,
        monotonic_violations=n_mono,
        deadband_samples=int(np.sum(~window)),
        tolerance=tol,
        scheme={"kind": "central", "points": points, "h_s": h,
                "dropped_per_end": half},
    )


@dataclass
class KinematicReport:
    check: str
    max_err_ndot: float
    max_err_thetadot: float
    tolerance: float
    n_samples: int
    n_thetadot_samples: int
    scheme: dict

    @property
    def passed(self) -> bool:
        return self.max_err_ndot <= self.tolerance and self.max_err_thetadot <= self.tolerance

    def to_dict(self) -> dict:
        return asdict(self)


def kinematic_identity_check(
    traj: TrajectoryRecord, points: int = 5, base_tol: float = 1e-3,
    min_theta: float = 1e-6,
):
    """Compare finite-difference rates of the error quaternion with their closed forms.

    ``ndot_e = 1/2 (m_e omega_e + omega_e x n_e)`` and
    ``thetadot_e = omega_e . u_e``.  Returns ``(report, detail)`` where
    ``detail`` holds the aligned arrays.  The tolerance is ``base_tol``
    scaled by the stencil truncation term ``h^(p-1) max|omega_e|^p``
    relative to 1 kHz sampling at 50 rad/s.  Samples whose stencil touches
    an undefined axis, or ``theta_e < min_theta``, are skipped for the angle
    rate.
    """
    h = traj.sample_dt
    half = _STENCILS[points][1]
    n = len(traj)
    q_e, w_e = traj.q_e, traj.omega_e
    inner = slice(half, n - half)

    ndot_fd = central_difference(q_e[:, 1:], h, points)
    m = q_e[inner, 0][:, None]
    we = w_e[inner]
    ndot_cf = 0.5 * (m * we + np.cross(we, q_e[inner, 1:]))
    err_n = np.linalg.norm(ndot_fd - ndot_cf, axis=-1)

    aa = axis_angle_of(q_e)
    thdot_fd = central_difference(aa.theta_e, h, points)
    thdot_cf = np.sum(we * aa.u_e[inner], axis=-1)
    ok = aa.axis_defined & (aa.theta_e >= min_theta)
    window = np.ones(n - 2 * half, dtype=bool)
    for k in range(2 * half + 1):
        window &= ok[k : n - 2 * half + k]
    err_th = np.abs(thdot_fd - thdot_cf)[window]

    w_max = float(np.max(np.linalg.norm(w_e, axis=-1))) if n else 0.0
    p = points - 1
    scale = (h / 1e-3) ** p * (max(w_max, 50.0) / 50.0) ** (p + 1)
    tol = base_tol * max(1.0, scale)
    report = KinematicReport(
        check="kinematic_identities",
        max_err_ndot=float(err_n.max()) if err_n.size else 0.0,
        max_err_thetadot=float(err_th.max()) if err_th.size else 0.0,
        tolerance=tol,
        n_samples=int(err_n.size),
        n_thetadot_samples=int(err_th.size),
        scheme={"kind": "central", "points": points, "h_s": h},
    )
    detail = {"t": traj.t[inner], "ndot_fd": ndot_fd, "ndot_cf": ndot_cf,
              "thetadot_fd": thdot_fd, "thetadot_cf": thdot_cf, "thetadot_valid": window}
    return report, detail
