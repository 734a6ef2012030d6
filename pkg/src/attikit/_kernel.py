"""Compiled closed-loop integrator for constant set-points.

Scalar re-statement of ``control.control_torque`` + ``dynamics.openloop_deriv``
+ ``dynamics.step_packed`` for the case that dominates sweeps: a constant
reference with torque evaluated at every stage.  The operation order follows
the numpy path; ``tests/test_sim.py`` checks the two engines agree.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .quat import EPS_AXIS


@njit(cache=True)
def _deriv(x, law, qd, J, Jinv, kt, kw, out):
    q0, q1, q2, q3 = x[0], x[1], x[2], x[3]
    w1, w2, w3 = x[4], x[5], x[6]

    # q_e = q^-1 (x) q_d
    n2 = q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3
    a0, a1, a2, a3 = q0 / n2, -q1 / n2, -q2 / n2, -q3 / n2
    b0, b1, b2, b3 = qd[0], qd[1], qd[2], qd[3]
    e0 = a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3
    e1 = a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2
    e2 = a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1
    e3 = a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0

    nn = math.sqrt(e1 * e1 + e2 * e2 + e3 * e3)
    if nn > EPS_AXIS:
        if law == 0:
            p1, p2, p3 = e1, e2, e3
        else:
            theta = 2.0 * math.atan2(nn, e0)
            if law == 1:
                s = 0.5 * theta
            else:
                s = 2.0 * math.sin(0.25 * theta)
            p1, p2, p3 = (e1 / nn) * s, (e2 / nn) * s, (e3 / nn) * s
    else:
        p1, p2, p3 = 0.0, 0.0, 0.0

    c1 = kt * p1 + kw * -w1
    c2 = kt * p2 + kw * -w2
    c3 = kt * p3 + kw * -w3

    jw1 = J[0, 0] * w1 + J[0, 1] * w2 + J[0, 2] * w3
    jw2 = J[1, 0] * w1 + J[1, 1] * w2 + J[1, 2] * w3
    jw3 = J[2, 0] * w1 + J[2, 1] * w2 + J[2, 2] * w3
    g1 = w2 * jw3 - w3 * jw2
    g2 = w3 * jw1 - w1 * jw3
    g3 = w1 * jw2 - w2 * jw1

    t1 = (J[0, 0] * c1 + J[0, 1] * c2 + J[0, 2] * c3) + g1
    t2 = (J[1, 0] * c1 + J[1, 1] * c2 + J[1, 2] * c3) + g2
    t3 = (J[2, 0] * c1 + J[2, 1] * c2 + J[2, 2] * c3) + g3

    r1, r2, r3 = t1 - g1, t2 - g2, t3 - g3
    out[4] = Jinv[0, 0] * r1 + Jinv[0, 1] * r2 + Jinv[0, 2] * r3
    out[5] = Jinv[1, 0] * r1 + Jinv[1, 1] * r2 + Jinv[1, 2] * r3
    out[6] = Jinv[2, 0] * r1 + Jinv[2, 1] * r2 + Jinv[2, 2] * r3

    # qdot = 1/2 q (x) [0, w]
    out[0] = 0.5 * (-q1 * w1 - q2 * w2 - q3 * w3)
    out[1] = 0.5 * (q0 * w1 + q2 * w3 - q3 * w2)
    out[2] = 0.5 * (q0 * w2 - q1 * w3 + q3 * w1)
    out[3] = 0.5 * (q0 * w3 + q1 * w2 - q2 * w1)


@njit(cache=True)
def integrate(x0, laws, qd, J, Jinv, kt, kw, dt, n_steps, log_every, a, b):
    """Return ``(states, fault_step)``.

    ``states`` has shape ``(B, n_steps // log_every + 1, 7)``; ``fault_step[i]``
    is the step whose update went non-finite for case ``i`` (``-1`` if none),
    after which that case's log is NaN-filled.
    """
    n_batch = x0.shape[0]
    n_stage = b.shape[0]
    n_log = n_steps // log_every + 1
    states = np.full((n_batch, n_log, 7), np.nan)
    faults = np.full(n_batch, -1, dtype=np.int64)
    k = np.zeros((n_stage, 7))
    xi = np.zeros(7)
    x = np.zeros(7)
    for bi in range(n_batch):
        law = laws[bi]
        for m in range(7):
            x[m] = x0[bi, m]
        states[bi, 0, :] = x
        for i in range(n_steps):
            for s in range(n_stage):
                for m in range(7):
                    acc = x[m]
                    for j in range(s):
                        if a[s, j] != 0.0:
                            acc = acc + (dt * a[s, j]) * k[j, m]
                    xi[m] = acc
                _deriv(xi, law, qd, J, Jinv, kt, kw, k[s])
            finite = True
            for m in range(7):
                acc = x[m]
                for s in range(n_stage):
                    if b[s] != 0.0:
                        acc = acc + (dt * b[s]) * k[s, m]
                xi[m] = acc
                if not math.isfinite(acc):
                    finite = False
            if not finite:
                faults[bi] = i
                break
            qn = math.sqrt(xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2 + xi[3] ** 2)
            for m in range(4):
                x[m] = xi[m] / qn
            for m in range(4, 7):
                x[m] = xi[m]
            if (i + 1) % log_every == 0:
                states[bi, (i + 1) // log_every, :] = x
    return states, faults
