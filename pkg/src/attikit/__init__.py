"""Quaternion attitude-control toolkit.

Rigid-body dynamics, the benchmark and SEA-based torque laws, a closed-loop
simulator, Lyapunov certification helpers and the tumble-recovery sweep.
"""

from .control import ConstantReference, ControlLaw, Gains, PAPER_GAINS, SplineReference
from .dynamics import CRAZYFLIE_INERTIA, BodyState, InertiaMatrix, IntegrationFault, Stepper
from .quat import axis_angle_of, from_axis_angle, qinv, qmul
from .sim import SimConfig, TrajectoryRecord, simulate, simulate_batch

__version__ = "0.1.0"

__all__ = [
    "BodyState",
    "CRAZYFLIE_INERTIA",
    "ConstantReference",
    "ControlLaw",
    "Gains",
    "InertiaMatrix",
    "IntegrationFault",
    "PAPER_GAINS",
    "SimConfig",
    "SplineReference",
    "Stepper",
    "TrajectoryRecord",
    "axis_angle_of",
    "from_axis_angle",
    "qinv",
    "qmul",
    "simulate",
    "simulate_batch",
]
