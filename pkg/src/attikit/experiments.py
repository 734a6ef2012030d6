"""Tumble-recovery scenarios, the initial-angle sweep, and result files.

Seeding
-------
Each sweep case gets ``case_seed(base_seed, theta0)``, the first 64-bit word
of ``numpy.random.SeedSequence(base_seed, spawn_key=(theta0,))``.  The seed
drives a counter-based Philox generator whose first three standard normals,
normalized, give the initial Euler axis.  The seed does not depend on the law,
so all laws face the same axis at a given initial angle.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .control import ConstantReference, ControlLaw, Gains, PAPER_GAINS
from .dynamics import CRAZYFLIE_INERTIA, InertiaMatrix, IntegrationFault, Stepper
from .sim import (
    SimConfig,
    TrajectoryRecord,
    derived_columns,
    integrate_states,
    tumble_state,
)

PAPER_DT = 1e-4
FAST_DT = 1e-3
LOG_DT = 1e-3
DEFAULT_T_FINAL = 5.0
STAB_THRESHOLD_DEG = 15.0


class UsageError(ValueError):
    pass


class ResultsParseError(ValueError):
    def __init__(self, path, line: int, msg: str):
        self.line = line
        super().__init__(f"{path}:{line}: {msg}")


# --------------------------------------------------------------------------- #
# Scenarios
# --------------------------------------------------------------------------- #


def case_seed(base_seed: int, theta0_deg: int) -> int:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(theta0_deg),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def random_axis(seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(int(seed)))
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def make_tumble_config(
    theta0_deg: int,
    law: ControlLaw,
    seed: int,
    *,
    J: InertiaMatrix = CRAZYFLIE_INERTIA,
    gains: Gains = PAPER_GAINS,
    dt: float = PAPER_DT,
    t_final: float = DEFAULT_T_FINAL,
    log_every: int | None = None,
    stepper: Stepper = Stepper.DP5,
) -> SimConfig:
    """Start at rest, ``theta0_deg`` degrees about a seeded random axis, from identity.

    ``log_every`` defaults to a 1 kHz logging rate.
    """
    if isinstance(theta0_deg, bool) or int(theta0_deg) != theta0_deg or not (
        1 <= theta0_deg <= 359
    ):
        raise UsageError(f"theta0 must be an integer in [1, 359] degrees, got {theta0_deg!r}")
    return _tumble_config(theta0_deg, law, seed, J=J, gains=gains, dt=dt,
                          t_final=t_final, log_every=log_every, stepper=stepper)


def _tumble_config(theta0_deg, law, seed, *, J, gains, dt, t_final, log_every, stepper):
    if log_every is None:
        log_every = max(1, int(round(LOG_DT / dt)))
    u0 = random_axis(seed)
    return SimConfig(
        law=law,
        initial=tumble_state(u0, math.radians(theta0_deg)),
        J=J,
        gains=gains,
        dt=dt,
        t_final=t_final,
        log_every=log_every,
        reference=ConstantReference(),
        seed=int(seed),
        stepper=stepper,
    )


# --------------------------------------------------------------------------- #
# Metrics
# --------------------------------------------------------------------------- #


def first_below(theta_e: np.ndarray, t: np.ndarray, threshold_rad: float,
                dwell_s: float | None = None):
    """First sample time at which ``theta_e`` is below threshold, or None.

    With ``dwell_s`` the error must also stay below for that long afterwards
    (or until the end of the record).
    """
    below = np.asarray(theta_e) < threshold_rad
    if dwell_s is None:
        idx = np.flatnonzero(below)
        return float(t[idx[0]]) if idx.size else None
    # last sample index at which the error is not below
    above = np.flatnonzero(~below)
    for i in np.flatnonzero(below):
        later = above[above > i]
        if later.size == 0 or t[later[0]] - t[i] >= dwell_s:
            return float(t[i])
    return None


def stabilization_time(traj: TrajectoryRecord, threshold_deg: float = STAB_THRESHOLD_DEG,
                       dwell_s: float | None = None):
    """Time for the Euler-axis error to first drop below ``threshold_deg``.

    Returns None if it never does.  ``dwell_s`` selects the sustained variant.
    """
    if len(traj) == 0:
        raise UsageError("empty trajectory")
    return first_below(traj.theta_e, traj.t, math.radians(threshold_deg), dwell_s)


# --------------------------------------------------------------------------- #
# Sweep
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class SweepRow:
    law: ControlLaw
    theta0_deg: int
    seed: int
    stabilization_time: float | None
    final_theta_e: float
    max_torque_norm: float

    @property
    def faulted(self) -> bool:
        return math.isnan(self.final_theta_e)

    def sort_key(self):
        return (self.law.code, self.theta0_deg)


def _rows_from_batch(configs: Sequence[SimConfig], theta0s, threshold_deg) -> list[SweepRow]:
    try:
        states, held, fault_t = integrate_states(configs)
    except IntegrationFault:
        if len(configs) == 1:
            c = configs[0]
            return [SweepRow(c.law, theta0s[0], c.seed, None, math.nan, math.nan)]
        return [r for c, th in zip(configs, theta0s)
                for r in _rows_from_batch([c], [th], threshold_deg)]
    cols = derived_columns(configs, states, held)
    thr = math.radians(threshold_deg)
    rows = []
    for b, (c, th) in enumerate(zip(configs, theta0s)):
        if not np.isnan(fault_t[b]):
            rows.append(SweepRow(c.law, th, c.seed, None, math.nan, math.nan))
            continue
        theta = cols["theta_e"][b]
        tau_norm = np.linalg.norm(cols["tau"][b], axis=-1)
        rows.append(
            SweepRow(
                law=c.law,
                theta0_deg=th,
                seed=c.seed,
                stabilization_time=first_below(theta, cols["t"], thr),
                final_theta_e=float(theta[-1]),
                max_torque_norm=float(np.max(tau_norm)),
            )
        )
    return rows


def _run_chunk(args):
    configs, theta0s, threshold_deg = args
    return _rows_from_batch(configs, theta0s, threshold_deg)


def run_sweep(
    laws: Iterable[ControlLaw] = tuple(ControlLaw),
    theta_range: Iterable[int] = range(1, 360),
    base_seed: int = 0,
    parallelism: int = 1,
    *,
    fast: bool = False,
    t_final: float = DEFAULT_T_FINAL,
    threshold_deg: float = STAB_THRESHOLD_DEG,
    chunk_size: int = 64,
    **config_kw,
) -> list[SweepRow]:
    """One tumble-recovery run per (law, theta0), sorted by (law, theta0).

    ``fast`` uses ``dt = 1e-3`` instead of ``1e-4``.  Results do not depend on
    ``parallelism`` or ``chunk_size``.  Integration faults are recorded in
    their row (NaN metrics) rather than raised.
    """
    laws = sorted(set(laws), key=lambda l: l.code)
    thetas = [int(t) for t in theta_range]
    dt = FAST_DT if fast else config_kw.pop("dt", PAPER_DT)
    cases = []
    for law in laws:
        for th in thetas:
            cfg = make_tumble_config(th, law, case_seed(base_seed, th), dt=dt,
                                     t_final=t_final, **config_kw)
            cases.append((cfg, th))
    chunks = [
        ([c for c, _ in cases[i : i + chunk_size]],
         [th for _, th in cases[i : i + chunk_size]],
         threshold_deg)
        for i in range(0, len(cases), chunk_size)
    ]
    if parallelism > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    else:
        parts = [_run_chunk(ch) for ch in chunks]
    rows = [r for part in parts for r in part]
    return sorted(rows, key=SweepRow.sort_key)


def worker_count(default: int = 1) -> int:
    """Worker count, overridable through ``ATTIKIT_THREADS``."""
    env = os.environ.get("ATTIKIT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"ATTIKIT_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("ATTIKIT_THREADS must be >= 1")
        return n
    return default


# --------------------------------------------------------------------------- #
# Files
# --------------------------------------------------------------------------- #

RESULTS_HEADER = ["law", "theta0_deg", "seed", "stab_time_s", "final_theta_e_rad",
                  "max_torque_Nm"]
TRAJECTORY_HEADER = ["t_s", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "theta_e_rad",
                     "n_norm", "p1_norm", "p2_norm", "tau_x", "tau_y", "tau_z"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_results(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in rows:
            w.writerow([
                r.law.value,
                r.theta0_deg,
                r.seed,
                "" if r.stabilization_time is None else _fmt(r.stabilization_time),
                _fmt(r.final_theta_e),
                _fmt(r.max_torque_norm),
            ])


def read_results(path) -> list[SweepRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise ResultsParseError(path, 1, f"expected header {','.join(RESULTS_HEADER)}")
        for rec in reader:
            line = reader.line_num
            if len(rec) != len(RESULTS_HEADER):
                raise ResultsParseError(path, line, f"expected 6 fields, got {len(rec)}")
            try:
                stab = None if rec[3] == "" else float(rec[3])
                if stab is not None and math.isnan(stab):
                    stab = None
                rows.append(SweepRow(
                    law=ControlLaw.parse(rec[0]),
                    theta0_deg=int(rec[1]),
                    seed=int(rec[2]),
                    stabilization_time=stab,
                    final_theta_e=float(rec[4]),
                    max_torque_norm=float(rec[5]),
                ))
            except ValueError as exc:
                raise ResultsParseError(path, line, str(exc)) from None
    return rows


def write_trajectory(traj: TrajectoryRecord, path) -> None:
    cols = np.column_stack([
        traj.t, traj.q, traj.omega, traj.theta_e, traj.n_norm, traj.p1_norm,
        traj.p2_norm, traj.tau,
    ])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for row in cols:
            w.writerow([_fmt(v) for v in row])


def read_trajectory(path) -> dict[str, np.ndarray]:
    """Load a trajectory dump as a column-name -> array mapping."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRAJECTORY_HEADER:
            raise ResultsParseError(path, 1, "not a trajectory file")
        data = []
        for rec in reader:
            if len(rec) != len(TRAJECTORY_HEADER):
                raise ResultsParseError(path, reader.line_num,
                                        f"expected {len(TRAJECTORY_HEADER)} fields")
            try:
                data.append([float(v) for v in rec])
            except ValueError as exc:
                raise ResultsParseError(path, reader.line_num, str(exc)) from None
    arr = np.array(data, dtype=float).reshape(-1, len(TRAJECTORY_HEADER))
    return {name: arr[:, i] for i, name in enumerate(TRAJECTORY_HEADER)}
