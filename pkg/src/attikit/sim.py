"""Closed-loop simulation: configuration, trajectory records and the run loop.

``simulate_batch`` advances many configurations in lockstep as one array
program.  Every operation is elementwise over the batch axis, so each row of a
batch is bit-identical to the same configuration run alone; only laws and
initial states may differ within a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .control import (
    ConstantReference,
    ControlLaw,
    Gains,
    PAPER_GAINS,
    Reference,
    control_torque,
    error_state,
)
from .dynamics import (
    CRAZYFLIE_INERTIA,
    BodyState,
    InertiaMatrix,
    IntegrationFault,
    Stepper,
    step_packed,
)
from .quat import IDENTITY, axis_angle_of, from_axis_angle


@dataclass(frozen=True, eq=False)
class SimConfig:
    """One closed-loop run.

    ``torque_hold_hz`` switches from continuous control (torque re-evaluated at
    every integrator stage) to a zero-order hold refreshed at that rate.
    """

    law: ControlLaw
    initial: BodyState
    J: InertiaMatrix = CRAZYFLIE_INERTIA
    gains: Gains = PAPER_GAINS
    dt: float = 1e-4
    t_final: float = 5.0
    log_every: int = 10
    reference: Reference = field(default_factory=ConstantReference)
    seed: int = 0
    stepper: Stepper = Stepper.DP5
    torque_hold_hz: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_final >= self.dt:
            raise ValueError("t_final must be at least one step long")
        if int(self.log_every) != self.log_every or self.log_every < 1:
            raise ValueError("log_every must be a positive integer")
        q0 = np.asarray(self.initial.q, dtype=float)
        if q0.shape != (4,) or abs(np.linalg.norm(q0) - 1.0) > 1e-9:
            raise ValueError("initial attitude must be a single unit quaternion")
        if np.asarray(self.initial.omega).shape != (3,):
            raise ValueError("initial angular velocity must be a 3-vector")
        if self.torque_hold_hz is not None and not self.torque_hold_hz > 0:
            raise ValueError("torque_hold_hz must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def _batch_key(self):
        return (
            self.J.matrix.tobytes(),
            self.gains,
            self.dt,
            self.t_final,
            self.log_every,
            self.stepper,
            self.torque_hold_hz,
        )


@dataclass(eq=False)
class TrajectoryRecord:
    """Time-sampled log of a closed-loop run (one row per logged sample)."""

    t: np.ndarray
    q: np.ndarray
    omega: np.ndarray
    q_e: np.ndarray
    omega_e: np.ndarray
    theta_e: np.ndarray
    n_norm: np.ndarray
    p1_norm: np.ndarray
    p2_norm: np.ndarray
    tau: np.ndarray
    law: ControlLaw
    sample_dt: float
    reference_constant: bool
    config: SimConfig | None = None

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryRecord):
            return NotImplemented
        names = ("t", "q", "omega", "q_e", "omega_e", "theta_e", "tau")
        return self.law == other.law and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in names
        )


def _law_arg(laws: Sequence[ControlLaw]):
    if all(l is laws[0] for l in laws):
        return laws[0]
    return np.array([l.code for l in laws])


def _check_batch(configs: Sequence[SimConfig]) -> None:
    if not configs:
        raise ValueError("empty batch")
    cfg = configs[0]
    key = cfg._batch_key()
    for c in configs[1:]:
        same_ref = c.reference is cfg.reference or c.reference == cfg.reference
        if c._batch_key() != key or not same_ref:
            raise ValueError("configurations in a batch must share all but law/initial")


def compiled_eligible(cfg: SimConfig) -> bool:
    """True if the compiled engine covers this configuration."""
    return cfg.reference.is_constant and cfg.torque_hold_hz is None


def _integrate_numpy(configs: Sequence[SimConfig]):
    """Reference engine; returns logged packed states and held torques (or None)."""
    cfg = configs[0]
    law = _law_arg([c.law for c in configs])
    ref, J, gains, dt = cfg.reference, cfg.J, cfg.gains, cfg.dt

    def torque_fn(t, s):
        return control_torque(law, s, ref.at(t), J, gains)

    hold_every = None
    if cfg.torque_hold_hz is not None:
        hold_every = max(1, int(round(1.0 / (cfg.torque_hold_hz * dt))))
    held = None
    x = np.stack([c.initial.packed() for c in configs])
    states, taus = [], []
    n = cfg.n_steps
    for i in range(n + 1):
        t = i * dt
        if hold_every is not None and i % hold_every == 0:
            held = torque_fn(t, BodyState.unpack(x))
        if i % cfg.log_every == 0:
            states.append(x)
            taus.append(held)
        if i == n:
            break
        fn = torque_fn if held is None else (lambda _t, _s, h=held: h)
        x = step_packed(x, fn, t, dt, J, cfg.stepper)
    held_log = None if hold_every is None else np.stack(taus, axis=1)
    return np.stack(states, axis=1), held_log


def _integrate_compiled(configs: Sequence[SimConfig]):
    from . import _kernel
    from .dynamics import _TABLEAUS

    cfg = configs[0]
    tab = _TABLEAUS[cfg.stepper]
    n_stage = len(tab.b)
    a = np.zeros((n_stage, n_stage))
    for i, row in enumerate(tab.a):
        a[i, : len(row)] = row
    x0 = np.stack([c.initial.packed() for c in configs])
    laws = np.array([c.law.code for c in configs], dtype=np.int64)
    q_d = cfg.reference.at(0.0)[0]
    return _kernel.integrate(
        x0, laws, np.ascontiguousarray(q_d, dtype=float),
        np.ascontiguousarray(cfg.J.matrix), np.ascontiguousarray(cfg.J.inverse),
        float(cfg.gains.k_theta), float(cfg.gains.k_omega), float(cfg.dt),
        cfg.n_steps, int(cfg.log_every), a, np.array(tab.b),
    )


def integrate_states(configs: Sequence[SimConfig], engine: str = "auto"):
    """Logged packed states ``(B, N, 7)``, held torques, and per-case fault times.

    A faulted case (``fault_t`` not NaN) has NaN samples from the fault on.
    The numpy engine raises :class:`IntegrationFault` instead of recording it.
    """
    _check_batch(configs)
    cfg = configs[0]
    if engine not in ("auto", "numpy", "compiled"):
        raise ValueError(f"unknown engine {engine!r}")
    use_compiled = engine == "compiled" or (engine == "auto" and compiled_eligible(cfg))
    if use_compiled:
        if not compiled_eligible(cfg):
            raise ValueError("compiled engine needs a constant reference and no torque hold")
        states, fault_step = _integrate_compiled(configs)
        fault_t = np.where(fault_step >= 0, (fault_step + 1) * cfg.dt, np.nan)
        return states, None, fault_t
    states, held = _integrate_numpy(configs)
    return states, held, np.full(len(configs), np.nan)


def derived_columns(configs: Sequence[SimConfig], states: np.ndarray, held=None):
    """Error metrics and torque at every logged state (numpy control path)."""
    cfg = configs[0]
    law = _law_arg([c.law for c in configs])
    if not isinstance(law, ControlLaw):
        law = law[:, None]
    t = np.arange(states.shape[1]) * (cfg.dt * cfg.log_every)
    ref = cfg.reference
    if ref.is_constant:
        refs = ref.at(0.0)
    else:
        per_t = [ref.at(ti) for ti in t]
        refs = tuple(np.stack([r[k] for r in per_t])[None] for k in range(3))
    s = BodyState.unpack(states)
    with np.errstate(invalid="ignore"):
        q_e, omega_e = error_state(s, refs)
        aa = axis_angle_of(q_e)
        tau = held if held is not None else control_torque(law, s, refs, cfg.J, cfg.gains)
        defined = aa.axis_defined
        return dict(
            t=t,
            q_e=q_e,
            omega_e=omega_e,
            theta_e=aa.theta_e,
            n_norm=np.sqrt(np.sum(q_e[..., 1:] ** 2, axis=-1)),
            p1_norm=np.where(defined, 0.5 * aa.theta_e, 0.0),
            p2_norm=np.where(defined, 2.0 * np.sin(0.25 * aa.theta_e), 0.0),
            tau=tau,
        )


def simulate_batch(configs: Sequence[SimConfig], engine: str = "auto") -> list[TrajectoryRecord]:
    """Simulate compatible configurations together; see :func:`simulate`."""
    states, held, fault_t = integrate_states(configs, engine)
    for b, ft in enumerate(fault_t):
        if not np.isnan(ft):
            last = states[b][np.all(np.isfinite(states[b]), axis=-1)][-1]
            raise IntegrationFault(float(ft), BodyState.unpack(last), np.asarray(True))
    cols = derived_columns(configs, states, held)
    out = []
    for b, cfg in enumerate(configs):
        out.append(
            TrajectoryRecord(
                t=cols["t"].copy(),
                q=np.ascontiguousarray(states[b, :, :4]),
                omega=np.ascontiguousarray(states[b, :, 4:]),
                **{n: np.ascontiguousarray(cols[n][b]) for n in
                   ("q_e", "omega_e", "theta_e", "n_norm", "p1_norm", "p2_norm", "tau")},
                law=cfg.law,
                sample_dt=cfg.dt * cfg.log_every,
                reference_constant=cfg.reference.is_constant,
                config=cfg,
            )
        )
    return out


def simulate(config: SimConfig, engine: str = "auto") -> TrajectoryRecord:
    """Run one configuration to ``t_final`` and return its sampled trajectory.

    Runs never stop early.  ``engine="auto"`` uses the compiled integrator
    when the reference is constant and control is continuous, otherwise the
    numpy integrator.
    """
    return simulate_batch([config], engine)[0]


def tumble_state(u0, theta0_rad: float, omega0=(0.0, 0.0, 0.0)) -> BodyState:
    return BodyState(
        q=from_axis_angle(np.asarray(u0, dtype=float), theta0_rad),
        omega=np.asarray(omega0, dtype=float),
    )


REST = BodyState(q=IDENTITY.copy(), omega=np.zeros(3))
