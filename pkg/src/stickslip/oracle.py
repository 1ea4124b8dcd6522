"""Brute-force reference integrator with a switch-type friction model.

Fixed-step RK4 on the second-order closed loop. Friction is ``fc*sign(x3)``
while moving; inside a small velocity band the mass is held at rest when the
friction bound covers the net PI drive (force balance), otherwise friction
takes its full value against the drive. A step that carries ``x3`` through
zero is split at the crossing, and a stick that breaks away inside a step is
split at the breakaway, so RK4 only ever runs across smooth pieces.

Nothing here uses matrix exponentials or the closed-form stick exit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .model import State, SystemMatrices

__all__ = ["OracleConfig", "OracleRun", "oracle_step", "oracle_run"]


@dataclass(frozen=True)
class OracleConfig:
    """Step size and stick band.

    ``v_eps`` defaults to ``1e-3 * dt * max(1, fc)``. Velocity zeros are
    located inside the step, so the band only has to absorb rounding; a wide
    band would snap ``x3`` to zero early by up to ``v_eps``.
    """

    dt: float
    v_eps: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.v_eps is not None and not (math.isfinite(self.v_eps) and self.v_eps > 0):
            raise ValueError(f"v_eps must be positive, got {self.v_eps}")

    def band(self, fc: float) -> float:
        return self.v_eps if self.v_eps is not None else 1e-3 * self.dt * max(1.0, fc)


@numba.njit(cache=True)
def _rk4(x1, x2, x3, ki, kp, kd, friction, h):
    # x1' = x2, x2' = x3, x3' = -ki x1 - kp x2 - kd x3 - friction
    k1a = x2
    k1b = x3
    k1c = -ki * x1 - kp * x2 - kd * x3 - friction
    y1 = x1 + 0.5 * h * k1a
    y2 = x2 + 0.5 * h * k1b
    y3 = x3 + 0.5 * h * k1c
    k2a = y2
    k2b = y3
    k2c = -ki * y1 - kp * y2 - kd * y3 - friction
    y1 = x1 + 0.5 * h * k2a
    y2 = x2 + 0.5 * h * k2b
    y3 = x3 + 0.5 * h * k2c
    k3a = y2
    k3b = y3
    k3c = -ki * y1 - kp * y2 - kd * y3 - friction
    y1 = x1 + h * k3a
    y2 = x2 + h * k3b
    y3 = x3 + h * k3c
    k4a = y2
    k4b = y3
    k4c = -ki * y1 - kp * y2 - kd * y3 - friction
    return (
        x1 + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
        x2 + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b),
        x3 + h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c),
    )


@numba.njit(cache=True)
def _sign(v):
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


@numba.njit(cache=True)
def _step(x1, x2, x3, ki, kp, kd, fc, dt, v_eps):
    """One oracle step; returns the new state and whether it ended at rest."""
    remaining = dt
    moving_dir = 0.0  # direction forced right after a breakaway
    for _ in range(16):
        if remaining <= 0.0:
            break
        drive = ki * x1 + kp * x2
        if moving_dir == 0.0 and abs(x3) < v_eps and abs(drive) <= fc:
            # held at rest: x3 = 0, x2 frozen, x1 integrates x2
            x3 = 0.0
            if x2 == 0.0 or ki == 0.0:
                x1 += x2 * remaining
                return x1, x2, x3, True
            target = fc if x2 > 0.0 else -fc
            tau = (target - drive) / (ki * x2)
            if tau >= remaining:
                x1 += x2 * remaining
                return x1, x2, x3, True
            if tau > 0.0:
                x1 += x2 * tau
                remaining -= tau
            # breakaway: motion starts against the drive
            moving_dir = -_sign(x2)
            continue
        if x3 != 0.0:
            direction = _sign(x3)
        elif moving_dir != 0.0:
            direction = moving_dir
        else:
            direction = -_sign(drive)
        friction = fc * direction
        y1, y2, y3 = _rk4(x1, x2, x3, ki, kp, kd, friction, remaining)
        if y3 * direction > 0.0:
            return y1, y2, y3, False
        # x3 reaches zero inside the piece: locate it on the RK4 sub-step
        lo = 0.0
        hi = remaining
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            z3 = _rk4(x1, x2, x3, ki, kp, kd, friction, mid)[2]
            if z3 * direction > 0.0:
                lo = mid
            else:
                hi = mid
        if lo == 0.0 and x3 == 0.0:
            # the breakaway did not get going within rounding: stay at rest
            # for the rest of this step and try again from the next one
            x1 += x2 * remaining
            return x1, x2, 0.0, True
        x1, x2, x3 = _rk4(x1, x2, x3, ki, kp, kd, friction, hi)
        x3 = 0.0
        remaining -= hi
        moving_dir = 0.0
        if abs(ki * x1 + kp * x2) > fc:
            # reversal: the next piece moves against the drive
            moving_dir = -_sign(ki * x1 + kp * x2)
    return x1, x2, x3, x3 == 0.0


@numba.njit(cache=True)
def _run(x1, x2, x3, ki, kp, kd, fc, dt, v_eps, nsteps, every, out_t, out_x, out_rest):
    k = 0
    out_t[0] = 0.0
    out_x[0, 0] = x1
    out_x[0, 1] = x2
    out_x[0, 2] = x3
    out_rest[0] = x3 == 0.0 and abs(ki * x1 + kp * x2) <= fc
    for n in range(1, nsteps + 1):
        x1, x2, x3, rest = _step(x1, x2, x3, ki, kp, kd, fc, dt, v_eps)
        if n % every == 0 or n == nsteps:
            k += 1
            out_t[k] = n * dt
            out_x[k, 0] = x1
            out_x[k, 1] = x2
            out_x[k, 2] = x3
            out_rest[k] = rest
    return k + 1


def oracle_step(state: State, system: SystemMatrices, cfg: OracleConfig) -> State:
    """Advance ``state`` by one step of ``cfg.dt``."""
    x1, x2, x3, _ = _step(
        float(state[0]), float(state[1]), float(state[2]),
        system.ki, system.kp, system.kd, system.fc, cfg.dt, cfg.band(system.fc),
    )
    return State(x1, x2, x3)


@dataclass(frozen=True, eq=False)
class OracleRun:
    """Samples of an oracle run; ``at_rest[k]`` is True when step ``k`` ended stuck."""

    times: np.ndarray
    states: np.ndarray
    at_rest: np.ndarray
    config: OracleConfig


def oracle_run(
    initial: State,
    system: SystemMatrices,
    cfg: OracleConfig,
    t_end: float,
    sample_dt: float | None = None,
) -> OracleRun:
    """Integrate from ``initial`` to ``t_end`` and sample every ``sample_dt``.

    ``sample_dt`` is rounded to a whole number of steps and defaults to one
    step. ``t_end`` is rounded to the nearest whole step.
    """
    if not (math.isfinite(t_end) and t_end >= 0):
        raise ValueError(f"t_end must be finite and >= 0, got {t_end}")
    nsteps = int(round(t_end / cfg.dt))
    every = 1 if sample_dt is None else max(1, int(round(sample_dt / cfg.dt)))
    nout = nsteps // every + 2
    out_t = np.empty(nout)
    out_x = np.empty((nout, 3))
    out_rest = np.empty(nout, dtype=np.bool_)
    x = [float(v) for v in initial]
    n = _run(
        x[0], x[1], x[2], system.ki, system.kp, system.kd, system.fc,
        cfg.dt, cfg.band(system.fc), nsteps, every, out_t, out_x, out_rest,
    )
    return OracleRun(out_t[:n].copy(), out_x[:n].copy(), out_rest[:n].copy(), cfg)
