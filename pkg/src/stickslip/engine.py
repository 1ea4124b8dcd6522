"""Event-driven simulation of alternating stick and slip phases."""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import FrictionParams, Gains, State, SystemMatrices, build_system
from .slip import ChatterDetected, EventKind, SlipFlow, breakaway_input, next_event
from .stiction import holds_at_rest, stick_exit

__all__ = [
    "PhaseKind",
    "Termination",
    "Limits",
    "PhaseSegment",
    "EnergyReport",
    "Trace",
    "DivergenceDetected",
    "ChatterDetected",
    "simulate",
    "stiction_energy",
    "dissipation_increment",
]


class PhaseKind(str, enum.Enum):
    STICK = "stick"
    SLIP = "slip"


class Termination(str, enum.Enum):
    CONVERGED_TO_LAMBDA = "ConvergedToLambda"
    MAX_TIME = "MaxTime"
    MAX_CYCLES = "MaxCycles"
    NEVER_EXIT_STICK = "NeverExitStick"
    CHATTER_DETECTED = "ChatterDetected"
    DIVERGENCE_DETECTED = "DivergenceDetected"


class DivergenceDetected(RuntimeError):
    """The state norm left the configured bound."""

    def __init__(self, message: str, trace: "Trace | None" = None):
        super().__init__(message)
        self.trace = trace


def stiction_energy(state: State, gains: Gains) -> float:
    """Potential energy of the PI terms, ``ki x1^2 / 2 + kp x2^2 / 2``."""
    return 0.5 * gains.ki * state.x1 * state.x1 + 0.5 * gains.kp * state.x2 * state.x2


def dissipation_increment(x3: float, fc: float, dt: float) -> float:
    """Work done against Coulomb friction over ``dt`` at constant rate ``x3``."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    return fc * abs(x3) * dt


@dataclass(frozen=True)
class Limits:
    """Stopping rules for :func:`simulate`.

    ``eps_lambda`` defaults to ``1e-12 * max(1, fc/kp)``; ``divergence_bound``
    defaults to ``1e6`` times the largest of ``1``, ``|x0|`` and the stiction
    half-diagonals. More than ``chatter_flips`` relay flips inside
    ``chatter_span`` seconds counts as chattering.
    """

    t_max: float
    max_cycles: int = 100_000
    eps_lambda: float | None = None
    divergence_bound: float | None = None
    chatter_flips: int = 50
    chatter_span: float = 1e-9

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t_max) and self.t_max > 0):
            raise ValueError(f"t_max must be positive and finite, got {self.t_max}")
        if int(self.max_cycles) != self.max_cycles or self.max_cycles < 1:
            raise ValueError(f"max_cycles must be a positive integer, got {self.max_cycles}")
        if self.eps_lambda is not None and not self.eps_lambda > 0:
            raise ValueError("eps_lambda must be positive")
        if self.divergence_bound is not None and not self.divergence_bound > 0:
            raise ValueError("divergence_bound must be positive")

    def resolved_eps(self, system: SystemMatrices) -> float:
        if self.eps_lambda is not None:
            return self.eps_lambda
        return 1e-12 * max(1.0, system.fc / system.kp)

    def resolved_bound(self, system: SystemMatrices, initial: State) -> float:
        if self.divergence_bound is not None:
            return self.divergence_bound
        scale = max(1.0, initial.norm(), system.fc / system.kp)
        if system.ki > 0:
            scale = max(scale, system.fc / system.ki)
        return 1e6 * scale


@dataclass(frozen=True, eq=False)
class PhaseSegment:
    """One stick phase, or one slip phase with its relay flips.

    A slip segment runs at ``relay_u`` until its first flip and alternates the
    sign at every entry of ``flips`` (time, state with ``x3 = 0``). A stick
    segment has ``relay_u = None``. ``open_ended`` marks a stick phase that
    never ends; ``truncated`` marks a phase cut at ``t_max``.
    """

    kind: PhaseKind
    t_start: float
    t_end: float
    state_start: State
    state_end: State
    relay_u: float | None
    times: np.ndarray
    states: np.ndarray
    flips: tuple[tuple[float, State], ...] = ()
    open_ended: bool = False
    truncated: bool = False
    system: SystemMatrices | None = field(default=None, repr=False)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def samples(self) -> list[tuple[float, State]]:
        return [(float(t), State.of(x)) for t, x in zip(self.times, self.states)]

    def _pieces(self) -> list[tuple[float, State, float]]:
        pieces = [(self.t_start, self.state_start, self.relay_u)]
        u = self.relay_u
        for t, x in self.flips:
            u = -u
            pieces.append((t, x, u))
        return pieces

    def relay_at(self, t: float) -> float | None:
        if self.kind is PhaseKind.STICK:
            return None
        starts = [p[0] for p in self._pieces()]
        k = max(0, bisect.bisect_right(starts, t) - 1)
        return self._pieces()[k][2]

    def states_at(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.kind is PhaseKind.STICK:
            x1, x2, _ = self.state_start
            out = np.empty((ts.size, 3))
            out[:, 0] = x1 + x2 * (ts - self.t_start)
            out[:, 1] = x2
            out[:, 2] = 0.0
            return out
        out = np.empty((ts.size, 3))
        pieces = self._pieces()
        starts = np.array([p[0] for p in pieces])
        which = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(pieces) - 1)
        for k, (t0, x0, u) in enumerate(pieces):
            mask = which == k
            if mask.any():
                out[mask] = SlipFlow(x0, u, self.system).at_many(ts[mask] - t0)
        return out

    def state_at(self, t: float) -> State:
        return State.of(self.states_at([t])[0])


@dataclass(frozen=True)
class EnergyReport:
    """Energy bookkeeping along a trace.

    ``dissipated`` holds the cumulative friction work at the end of each
    segment; inside a slip piece ``x3`` keeps its sign, so the work is
    ``fc * |change of x2|`` exactly.
    """

    v_at_stick_onsets: tuple[float, ...]
    v_at_stick_exits: tuple[float, ...]
    ellipse_axes: tuple[tuple[float, float], ...]
    dissipated: tuple[float, ...]

    @property
    def dissipated_total(self) -> float:
        return self.dissipated[-1] if self.dissipated else 0.0


@dataclass(frozen=True, eq=False)
class Trace:
    segments: tuple[PhaseSegment, ...]
    cycle_count: int
    termination: Termination
    energy: EnergyReport
    gains: Gains
    fc: float
    initial: State
    limits: Limits
    output_rate: float

    @property
    def system(self) -> SystemMatrices:
        return build_system(self.gains, FrictionParams(self.fc))

    @property
    def t_end(self) -> float:
        if not self.segments:
            return 0.0
        last = self.segments[-1]
        return min(last.t_end, self.limits.t_max) if last.open_ended else last.t_end

    @property
    def final_state(self) -> State:
        return self.segments[-1].state_end if self.segments else self.initial

    def sticks(self) -> list[PhaseSegment]:
        return [s for s in self.segments if s.kind is PhaseKind.STICK]

    def slips(self) -> list[PhaseSegment]:
        return [s for s in self.segments if s.kind is PhaseKind.SLIP]

    def stick_onsets(self) -> list[tuple[float, State]]:
        return [(s.t_start, s.state_start) for s in self.sticks()]

    def completed_stick_durations(self) -> list[float]:
        return [s.duration for s in self.sticks() if not (s.open_ended or s.truncated)]

    def relay_flips(self) -> list[tuple[float, State]]:
        return [f for s in self.slips() for f in s.flips]

    def segment_at(self, t: float) -> PhaseSegment:
        starts = [s.t_start for s in self.segments]
        k = bisect.bisect_right(starts, t) - 1
        if k < 0 or t > self.t_end:
            raise ValueError(f"t={t} outside the trace [0, {self.t_end}]")
        return self.segments[k]

    def state_at(self, t: float) -> State:
        return self.segment_at(t).state_at(t)

    def states_at(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        out = np.empty((ts.size, 3))
        starts = np.array([s.t_start for s in self.segments])
        which = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(self.segments) - 1)
        for k, seg in enumerate(self.segments):
            mask = which == k
            if mask.any():
                out[mask] = seg.states_at(ts[mask])
        return out

    def sampled(self) -> tuple[np.ndarray, np.ndarray, list[str], list[float | None]]:
        """All samples in time order with phase label and relay value.

        A boundary sample shared by two segments is listed once, with the
        segment that ends there.
        """
        ts, xs, phases, us = [], [], [], []
        last_t = -math.inf
        for seg in self.segments:
            keep = seg.times > last_t
            t = seg.times[keep]
            if t.size == 0:
                continue
            ts.append(t)
            xs.append(seg.states[keep])
            phases.extend([seg.kind.value] * t.size)
            if seg.kind is PhaseKind.STICK:
                us.extend([None] * t.size)
            else:
                pieces = seg._pieces()
                starts = np.array([p[0] for p in pieces])
                relay = np.array([p[2] for p in pieces])
                k = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(pieces) - 1)
                us.extend(relay[k].tolist())
            last_t = t[-1]
        if not ts:
            return np.empty(0), np.empty((0, 3)), [], []
        return np.concatenate(ts), np.concatenate(xs).reshape(-1, 3), phases, us

    def events(self) -> list[tuple[str, float, State]]:
        """Phase boundaries: start, relay flips, stick onsets and exits, end."""
        out = [("start", 0.0, self.initial)]
        for seg in self.segments:
            if seg.kind is PhaseKind.STICK:
                out.append(("enter_stiction", seg.t_start, seg.state_start))
                if not (seg.open_ended or seg.truncated):
                    out.append(("stick_exit", seg.t_end, seg.state_end))
            else:
                out.extend(("relay_flip", t, x) for t, x in seg.flips)
        out.append(("end", self.t_end, self.final_state))
        return out


def _grid(t0: float, t1: float, rate: float) -> np.ndarray:
    k0 = math.ceil(t0 * rate)
    k1 = math.floor(t1 * rate)
    inner = np.arange(k0, k1 + 1, dtype=float) / rate if k1 >= k0 else np.empty(0)
    inner = inner[(inner > t0) & (inner < t1)]
    return inner


class _Builder:
    def __init__(self, initial, gains, friction, limits, output_rate):
        self.system = build_system(gains, friction)
        self.gains = gains
        self.fc = friction.fc
        self.initial = initial
        self.limits = limits
        self.rate = output_rate
        self.eps = limits.resolved_eps(self.system)
        self.bound = limits.resolved_bound(self.system, initial)
        self.segments: list[PhaseSegment] = []
        self.v_onsets: list[float] = []
        self.v_exits: list[float] = []
        self.axes: list[tuple[float, float]] = []
        self.dissipated: list[float] = []
        self.work = 0.0
        self.cycles = 0

    def trace(self, termination: Termination) -> Trace:
        return Trace(
            segments=tuple(self.segments),
            cycle_count=self.cycles,
            termination=termination,
            energy=EnergyReport(
                v_at_stick_onsets=tuple(self.v_onsets),
                v_at_stick_exits=tuple(self.v_exits),
                ellipse_axes=tuple(self.axes),
                dissipated=tuple(self.dissipated),
            ),
            gains=self.gains,
            fc=self.fc,
            initial=self.initial,
            limits=self.limits,
            output_rate=self.rate,
        )

    def check_bound(self, x: State | np.ndarray, t: float) -> None:
        n = float(np.linalg.norm(np.asarray(x, float)))
        if not n <= self.bound:
            raise DivergenceDetected(
                f"|x| = {n:.6g} exceeds {self.bound:.6g} at t = {t:.6g}",
                self.trace(Termination.DIVERGENCE_DETECTED),
            )

    def add_stick(self, t0, x0: State, t1, x1: State, *, open_ended=False, truncated=False):
        ts = np.concatenate([[t0], _grid(t0, t1, self.rate), [t1]])
        xs = np.empty((ts.size, 3))
        xs[:, 0] = x0.x1 + x0.x2 * (ts - t0)
        xs[:, 1] = x0.x2
        xs[:, 2] = 0.0
        xs[0] = x0
        xs[-1] = x1
        self.segments.append(
            PhaseSegment(
                PhaseKind.STICK, t0, t1, x0, x1, None, ts, xs,
                open_ended=open_ended, truncated=truncated, system=self.system,
            )
        )
        self.dissipated.append(self.work)

    def add_slip(self, t0, x0: State, u0, pieces, t1, x1: State, *, truncated=False):
        flips = tuple((t, x) for t, x, _ in pieces[1:])
        seg = PhaseSegment(
            PhaseKind.SLIP, t0, t1, x0, x1, u0, np.empty(0), np.empty((0, 3)),
            flips=flips, truncated=truncated, system=self.system,
        )
        bounds = [p[0] for p in pieces] + [t1]
        ts = np.concatenate([bounds, _grid(t0, t1, self.rate)])
        ts = np.unique(ts)
        xs = seg.states_at(ts)
        # event states are exact (x3 projected to zero): copy them in
        ends = [(t, x) for t, x, _ in pieces] + [(t1, x1)]
        for t, x in ends:
            xs[np.searchsorted(ts, t)] = x
        if xs.size:
            big = np.linalg.norm(xs, axis=1)
            k = int(np.argmax(big))
            self.check_bound(xs[k], float(ts[k]))
        object.__setattr__(seg, "times", ts)
        object.__setattr__(seg, "states", xs)
        self.segments.append(seg)
        ends_x2 = [x.x2 for _, x, _ in pieces] + [x1.x2]
        self.work += self.fc * sum(abs(b - a) for a, b in zip(ends_x2, ends_x2[1:]))
        self.dissipated.append(self.work)


def simulate(
    initial: State,
    gains: Gains,
    friction: FrictionParams,
    limits: Limits,
    output_rate: float = 1000.0,
) -> Trace:
    """Simulate the closed loop from ``initial`` until a stopping rule fires.

    Slip phases follow the closed-form flow to the next zero of ``x3``. A
    zero where friction can hold the mass (``|ki x1 + kp x2| <= fc``) starts
    a stick phase, any other zero flips the relay and the slip continues.
    Stick phases last until the closed-form breakaway.

    Raises
    ------
    DivergenceDetected
        The state norm exceeded ``limits.divergence_bound``.
    ChatterDetected
        Relay flips accumulated in a vanishing time span.

    Both exceptions carry the partial trace as ``.trace``.
    """
    initial = State.of(initial)
    if not all(math.isfinite(v) for v in initial):
        raise ValueError(f"initial state must be finite, got {initial}")
    if not (math.isfinite(output_rate) and output_rate > 0):
        raise ValueError(f"output_rate must be positive, got {output_rate}")
    b = _Builder(initial, gains, friction, limits, float(output_rate))
    system = b.system
    t_max = limits.t_max
    b.check_bound(initial, 0.0)

    t, x = 0.0, initial
    phase = PhaseKind.SLIP
    from_rest = False
    u = None
    if x.x3 == 0:
        if holds_at_rest(x, system):
            ex = stick_exit(x, 0.0, system)
            # starting on the breakaway edge: no stick, just the breakaway
            phase = PhaseKind.SLIP if ex is not None and ex.dwell == 0 else PhaseKind.STICK
        if phase is PhaseKind.SLIP:
            if x.x2 == 0 and x.x1 == 0 and system.fc == 0:
                b.add_stick(0.0, x, t_max, x, open_ended=True)
                return b.trace(Termination.CONVERGED_TO_LAMBDA)
            u = breakaway_input(x, system)
            from_rest = True
    else:
        u = -math.copysign(1.0, x.x3)

    while True:
        if phase is PhaseKind.STICK:
            b.v_onsets.append(stiction_energy(x, gains))
            ex = stick_exit(x, t, system)
            converged = abs(x.x2) <= b.eps
            if ex is None:
                b.add_stick(t, x, t_max, State(x.x1 + x.x2 * (t_max - t), x.x2, 0.0), open_ended=True)
                if system.ki == 0 and x.x2 != 0:
                    return b.trace(Termination.NEVER_EXIT_STICK)
                return b.trace(Termination.CONVERGED_TO_LAMBDA if converged else Termination.NEVER_EXIT_STICK)
            if ex.exit_time >= t_max:
                end = State(x.x1 + x.x2 * (t_max - t), x.x2, 0.0)
                b.add_stick(t, x, t_max, end, truncated=True)
                return b.trace(Termination.CONVERGED_TO_LAMBDA if converged else Termination.MAX_TIME)
            b.add_stick(t, x, ex.exit_time, ex.exit_state)
            v_exit = stiction_energy(ex.exit_state, gains)
            b.v_exits.append(v_exit)
            b.axes.append(
                (
                    math.sqrt(2 * v_exit / gains.kp),
                    math.sqrt(2 * v_exit / gains.ki) if gains.ki > 0 else math.inf,
                )
            )
            if converged:
                return b.trace(Termination.CONVERGED_TO_LAMBDA)
            t, x = ex.exit_time, ex.exit_state
            b.cycles += 1
            phase = PhaseKind.SLIP
            u = breakaway_input(x, system)
            from_rest = True
            continue

        # slip phase, possibly with relay flips
        t0, x0, u0 = t, x, u
        pieces = [(t, x, u)]
        recent: list[float] = []
        while True:
            horizon = t_max - t
            ev = next_event(x, u, system, horizon, from_rest=from_rest) if horizon > 0 else None
            if ev is None:
                flow = SlipFlow(x, u, system)
                x_end = State.of(flow.at(t_max - t))
                b.add_slip(t0, x0, u0, pieces, t_max, x_end, truncated=True)
                if system.fc == 0 and x_end.norm() <= b.eps:
                    return b.trace(Termination.CONVERGED_TO_LAMBDA)
                return b.trace(Termination.MAX_TIME)
            t = t + ev.event_time
            x = ev.event_state
            b.check_bound(x, t)
            if ev.kind is EventKind.ENTER_STICTION:
                b.add_slip(t0, x0, u0, pieces, t, x)
                break
            u = -u
            from_rest = True
            pieces.append((t, x, u))
            recent.append(t)
            if len(recent) > limits.chatter_flips:
                recent.pop(0)
                if recent[-1] - recent[0] <= limits.chatter_span:
                    b.add_slip(t0, x0, u0, pieces, t, x)
                    err = ChatterDetected(
                        f"{limits.chatter_flips} relay flips within {limits.chatter_span:g} s at t = {t:.6g}"
                    )
                    err.trace = b.trace(Termination.CHATTER_DETECTED)
                    raise err
            if system.fc == 0 and x.norm() <= b.eps:
                b.add_slip(t0, x0, u0, pieces, t, x)
                return b.trace(Termination.CONVERGED_TO_LAMBDA)
        if b.cycles >= limits.max_cycles:
            return b.trace(Termination.MAX_CYCLES)
        phase = PhaseKind.STICK
