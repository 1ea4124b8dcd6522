"""Slip phase: closed-form flow under a constant relay value and event search.

Between two zeros of the rate error ``x3`` the friction force is constant, so
the state follows the affine linear system ``x' = A x + B u`` exactly. The
flow is evaluated with matrix exponentials and the next zero of ``x3`` is
bracketed along it and refined by root finding.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .model import State, SystemMatrices, eigenvalues
from .stiction import holds_at_rest

__all__ = [
    "ChatterDetected",
    "EventKind",
    "SlipEvent",
    "SlipFlow",
    "matrix_exponential",
    "propagate",
    "propagate_literal",
    "propagate_augmented",
    "next_event",
    "breakaway_input",
]

# relative decay of the deviation from the slip equilibrium past which the
# search stops: the exponential carries rounding of a few ulps of the start
# deviation, so below this level the sign of x3 is no longer trustworthy
TAIL_DECAY = 1e-13


class ChatterDetected(RuntimeError):
    """Too many relay flips in a vanishing time span."""


class EventKind(str, enum.Enum):
    ENTER_STICTION = "enter_stiction"
    RELAY_FLIP = "relay_flip"


@dataclass(frozen=True)
class SlipEvent:
    """A zero of the rate error reached by a slip segment.

    ``event_state`` has ``x3`` projected to exactly zero; ``x3_raw`` keeps the
    value the flow produced at ``event_time`` (relative to the segment start).
    """

    event_time: float
    event_state: State
    kind: EventKind
    x3_raw: float


def matrix_exponential(m, t: float = 1.0) -> np.ndarray:
    """``exp(m * t)`` by scaling and squaring with a Pade kernel."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not math.isfinite(t) or not np.all(np.isfinite(m)):
        raise ValueError("matrix exponential needs finite entries and duration")
    if t == 0:
        return np.eye(m.shape[0])
    return scipy.linalg.expm(m * t)


def _check_relay(u: float) -> float:
    if u not in (-1, 1, -1.0, 1.0):
        raise ValueError(f"relay value must be +1 or -1, got {u!r}")
    return float(u)


class SlipFlow:
    """Closed-form trajectory of ``x' = A x + B u`` from a fixed start.

    With ``ki != 0`` the flow is written about the equilibrium
    ``x_eq = (fc u / ki, 0, 0)`` as ``x_eq + exp(A t) (x0 - x_eq)``, which
    keeps full relative precision in ``x3`` as the deviation decays. With
    ``ki = 0`` (singular ``A``) the forced response comes from the
    exponential of the augmented matrix ``[[A, B u], [0, 0]]``.
    """

    def __init__(self, state: State, u: float, system: SystemMatrices):
        self.state = State.of(state)
        self.u = _check_relay(u)
        self.system = system
        self._x0 = self.state.as_array()
        if not np.all(np.isfinite(self._x0)):
            raise ValueError(f"state must be finite, got {state}")
        a = np.array(system.a)
        if system.ki != 0:
            self._x_eq = np.array([system.fc * self.u / system.ki, 0.0, 0.0])
            self._z0 = self._x0 - self._x_eq
            self._m = a
        else:
            self._x_eq = None
            self._z0 = None
            m = np.zeros((4, 4))
            m[:3, :3] = a
            m[:3, 3] = system.b * self.u
            self._m = m
            self._x0_aug = np.append(self._x0, 1.0)

    def _z_at(self, t: float) -> np.ndarray:
        if t == 0:
            return self._z0
        return matrix_exponential(self._m, t) @ self._z0

    def at(self, t: float) -> np.ndarray:
        if t == 0:
            return self._x0.copy()
        if self._x_eq is not None:
            return self._x_eq + self._z_at(t)
        return (matrix_exponential(self._m, t) @ self._x0_aug)[:3]

    def deviation_at(self, t: float) -> float:
        """Distance to the slip attractor at time ``t``."""
        if self._x_eq is not None:
            return float(np.linalg.norm(self._z_at(t)))
        return self.deviation(self.at(t))

    def at_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if ts.size == 0:
            return np.empty((0, 3))
        e = scipy.linalg.expm(self._m[None, :, :] * ts[:, None, None])
        if self._x_eq is not None:
            out = self._x_eq + e @ self._z0
        else:
            out = (e @ self._x0_aug)[:, :3]
        out[ts == 0] = self._x0
        return out

    def rate_at(self, t: float) -> float:
        """Time derivative of ``x3`` at time ``t``.

        Taken from the deviation from equilibrium, so the friction term does
        not cancel against the PI drive and the sign stays exact in the tail.
        """
        s = self.system
        if self._x_eq is not None:
            z = self._z_at(t)
            return -s.ki * z[0] - s.kp * z[1] - s.kd * z[2]
        x = self.at(t)
        return -s.kp * (x[1] - s.fc * self.u / s.kp) - s.kd * x[2]

    def deviation(self, x: np.ndarray) -> float:
        """Distance to the slip attractor, in the coordinates that converge."""
        if self._x_eq is not None:
            return float(np.linalg.norm(x - self._x_eq))
        # ki = 0: (x2, x3) settles at (fc u / kp, 0) while x1 keeps drifting
        return math.hypot(x[1] - self.system.fc * self.u / self.system.kp, x[2])


def propagate(state: State, u: float, dt: float, system: SystemMatrices) -> State:
    """Advance ``state`` by ``dt`` under constant relay value ``u``."""
    if not math.isfinite(dt) or dt < 0:
        raise ValueError(f"dt must be finite and >= 0, got {dt}")
    return State.of(SlipFlow(state, u, system).at(dt))


def propagate_augmented(state: State, u: float, dt: float, system: SystemMatrices) -> State:
    """Same flow through the 4x4 augmented exponential, for every gain set."""
    m = np.zeros((4, 4))
    m[:3, :3] = system.a
    m[:3, 3] = system.b * _check_relay(u)
    e = matrix_exponential(m, dt)
    return State.of(e[:3, :3] @ np.asarray(state, float) + e[:3, 3])


def propagate_literal(state: State, u: float, dt: float, system: SystemMatrices) -> State:
    """``exp(A dt) x + A^-1 (exp(A dt) - I) B u``; needs ``ki != 0``."""
    if system.ki == 0:
        raise ValueError("A is singular for ki = 0")
    e = matrix_exponential(system.a, dt)
    forced = np.linalg.solve(system.a, (e - np.eye(3)) @ (system.b * _check_relay(u)))
    return State.of(e @ np.asarray(state, float) + forced)


def breakaway_input(state: State, system: SystemMatrices) -> float:
    """Relay value for motion starting from rest at ``state``.

    Motion starts against the net PI drive, so ``x3`` takes the sign of
    ``-(ki x1 + kp x2)`` and ``u = -sign(x3)`` is the sign of the drive. On a
    breakaway edge the drive equals ``sign(x2) * fc``; ``x2`` decides there.
    """
    drive = system.ki * state.x1 + system.kp * state.x2
    if system.fc > 0 and abs(abs(drive) - system.fc) <= 1e-9 * system.fc and state.x2 != 0:
        return math.copysign(1.0, state.x2)
    if drive == 0:
        if state.x2 == 0:
            raise ValueError("no net drive: the state is an equilibrium")
        return math.copysign(1.0, state.x2)
    return math.copysign(1.0, drive)


def _strides(system: SystemMatrices) -> tuple[float, float]:
    lams = eigenvalues(system)
    rho = max(abs(z) for z in lams)
    h0 = min(0.1, 1.0 / rho) if rho > 0 else 0.1
    cap = math.inf
    imag = max(abs(z.imag) for z in lams)
    if imag > 0:
        cap = 0.25 * math.pi / imag
    slow = [abs(z) for z in lams if abs(z) > 0]
    if slow:
        cap = min(cap, 1.0 / min(slow))
    return h0, max(h0, cap)


def _classify(x: np.ndarray, system: SystemMatrices) -> tuple[State, EventKind]:
    landed = State(float(x[0]), float(x[1]), 0.0)
    kind = EventKind.ENTER_STICTION if holds_at_rest(landed, system) else EventKind.RELAY_FLIP
    return landed, kind


def _event(flow: SlipFlow, t: float, system: SystemMatrices) -> SlipEvent:
    x = flow.at(t)
    landed, kind = _classify(x, system)
    return SlipEvent(event_time=t, event_state=landed, kind=kind, x3_raw=float(x[2]))


def _refine_root(flow: SlipFlow, d: float, a: float, b: float, tol_x3: float) -> float:
    """Zero of ``x3`` in ``(a, b]`` given ``d*x3(a) > 0 >= d*x3(b)``."""

    def g(t: float) -> float:
        return d * flow.at(t)[2]

    gb = g(b)
    if gb == 0:
        return b
    t = scipy.optimize.brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
    # brentq does not say which side it stopped on; settle on the sign
    # change with a few bisections at unit-roundoff resolution
    lo, hi = a, b
    gt = g(t)
    if gt > 0:
        lo = t
    else:
        hi = t
        if gt == 0:
            return t
    # bracket around t at the tolerance scale
    step = 4 * max(abs(t), 1.0) * np.finfo(float).eps
    cand_lo, cand_hi = max(lo, t - step), min(hi, t + step)
    if g(cand_lo) > 0:
        lo = cand_lo
    if g(cand_hi) <= 0:
        hi = cand_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if hi - lo <= 1e-13 * max(1.0, hi) and abs(g(hi)) <= tol_x3:
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    # the later end sits past the crossing; take whichever is closer to zero
    return hi if abs(g(hi)) <= abs(g(lo)) else lo


def _minimum_of(flow: SlipFlow, d: float, a: float, b: float) -> float:
    """Location of the minimum of ``d*x3`` where ``d*x3'`` goes from < 0 to > 0."""
    lo, hi = a, b
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if d * flow.rate_at(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def next_event(
    state: State,
    u: float,
    system: SystemMatrices,
    horizon: float,
    *,
    from_rest: bool = False,
) -> SlipEvent | None:
    """Earliest zero of ``x3`` in ``(0, horizon]`` along the slip flow.

    Parameters
    ----------
    state : State
        Start of the slip segment.
    u : {-1, +1}
        Relay value, ``-sign(x3)`` over the segment.
    system : SystemMatrices
    horizon : float
        Longest time to search.
    from_rest : bool
        The segment starts at ``x3 = 0`` as a breakaway; ``t = 0`` is not an
        event. Without it a state already at rest in the stick set returns an
        ``ENTER_STICTION`` event at ``t = 0``.

    Returns
    -------
    SlipEvent or None
        ``None`` when ``x3`` does not vanish within the horizon, or when the
        flow has converged onto its equilibrium without a crossing.
    """
    state = State.of(state)
    u = _check_relay(u)
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    d = -u
    flow = SlipFlow(state, u, system)
    tol_x3 = 1e-12 * max(1.0, state.norm())

    if state.x3 == 0 and not from_rest:
        if holds_at_rest(state, system):
            return SlipEvent(0.0, state, EventKind.ENTER_STICTION, 0.0)
        from_rest = True
    if state.x3 != 0 and math.copysign(1.0, state.x3) != d:
        raise ValueError(f"relay value u={u} inconsistent with x3={state.x3}")

    h, h_cap = _strides(system)

    def g(t: float) -> float:
        return d * flow.at(t)[2]

    if from_rest:
        # the first stride must show motion in direction d; if it does not,
        # look for an earlier instant that does
        t_try = min(h, horizon)
        gt = g(t_try)
        if gt <= 0:
            t = t_try
            for _ in range(64):
                t *= 0.5
                if g(t) > 0:
                    return _event(flow, _refine_root(flow, d, t, t_try, tol_x3), system)
            # no motion in direction d at all: straight back to rest
            return _event(flow, t, system)
        t0 = t_try
    else:
        t0 = 0.0

    dev0 = flow.deviation_at(0.0)

    def crossing(ta: float, tb: float) -> SlipEvent | None:
        t = _refine_root(flow, d, ta, tb, tol_x3)
        if dev0 > 0 and flow.deviation_at(t) <= TAIL_DECAY * dev0:
            # a zero this deep in the tail is rounding, not a landing
            return None
        return _event(flow, t, system)

    while t0 < horizon:
        t1 = min(t0 + h, horizon)
        g1 = g(t1)
        if g1 <= 0:
            return crossing(t0, t1)
        if d * flow.rate_at(t0) < 0 and d * flow.rate_at(t1) > 0:
            tm = _minimum_of(flow, d, t0, t1)
            gm = g(tm)
            if gm <= 0:
                return crossing(t0, tm)
            if gm <= tol_x3:
                ev = _event(flow, tm, system)
                if ev.kind is EventKind.ENTER_STICTION:
                    return ev
                # grazing outside the stick set: keep the relay value
        if dev0 > 0 and flow.deviation_at(t1) <= TAIL_DECAY * dev0:
            return None
        t0 = t1
        h = min(1.25 * h, h_cap)
    return None
