"""Stick phase: the rhombus region, sliding-mode dynamics and breakaway.

While stuck the rate error is held at zero by the friction force, the output
error is frozen and the integral error grows linearly. Breakaway happens when
the integral action has grown enough that friction can no longer balance the
net PI drive ``ki*x1 + kp*x2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import State, SystemMatrices

__all__ = [
    "StictionRegion",
    "StickExit",
    "in_stiction",
    "holds_at_rest",
    "stick_derivative",
    "stick_exit",
    "equivalent_control",
    "region_vertices",
    "default_velocity_tolerance",
]


def default_velocity_tolerance(state: State) -> float:
    return 1e-10 * max(1.0, state.norm())


def _drive(state: State, system: SystemMatrices) -> float:
    # net PI drive that friction has to balance at x3 = 0
    return system.ki * state.x1 + system.kp * state.x2


@dataclass(frozen=True)
class StictionRegion:
    """The set ``{x3 = 0, |ki x1| + |kp x2| <= fc}``.

    ``d1`` and ``d2`` are the half-diagonals along ``x1`` and ``x2``. With
    ``ki = 0`` the region is the strip ``|x2| <= fc/kp`` and ``d1`` is infinite.
    """

    fc: float
    kp: float
    ki: float

    @classmethod
    def of(cls, system: SystemMatrices) -> "StictionRegion":
        return cls(fc=system.fc, kp=system.kp, ki=system.ki)

    @property
    def d1(self) -> float:
        return self.fc / self.ki if self.ki > 0 else math.inf

    @property
    def d2(self) -> float:
        return self.fc / self.kp

    @property
    def is_strip(self) -> bool:
        return self.ki == 0

    def contains(self, state: State, tol_v: float | None = None) -> bool:
        if tol_v is None:
            tol_v = default_velocity_tolerance(state)
        if abs(state.x3) > tol_v:
            return False
        return abs(self.ki * state.x1) + abs(self.kp * state.x2) <= self.fc


def in_stiction(state: State, system: SystemMatrices, tol_v: float | None = None) -> bool:
    """True when ``state`` lies in the rhombus ``|ki x1| + |kp x2| <= fc`` at rest.

    The boundary counts as sticking. ``tol_v`` is the band accepted as zero
    velocity and defaults to ``1e-10 * max(1, |x|)``.
    """
    if tol_v is not None and not tol_v > 0:
        raise ValueError("tol_v must be positive")
    return StictionRegion.of(system).contains(state, tol_v)


def holds_at_rest(state: State, system: SystemMatrices, tol_v: float | None = None) -> bool:
    """Force-balance stick test ``|ki x1 + kp x2| <= fc`` at zero velocity.

    This is ``|equivalent_control| <= 1``: friction can supply the force that
    keeps ``x3`` at zero. It contains the rhombus of :func:`in_stiction` and
    differs from it where ``x1`` and ``x2`` have opposite signs. The simulator
    uses this test when a slip segment comes to rest.
    """
    if tol_v is None:
        tol_v = default_velocity_tolerance(state)
    if abs(state.x3) > tol_v:
        return False
    return abs(_drive(state, system)) <= system.fc


def stick_derivative(state: State) -> State:
    """Sliding-mode vector field: ``(x2, 0, 0)``."""
    return State(state.x2, 0.0, 0.0)


@dataclass(frozen=True)
class StickExit:
    """Breakaway point and time of a stick phase.

    ``quadrant`` is the quadrant of the ``(x1, x2)`` plane the exit point lies
    in: 1 or 3 on the rhombus edges, 2 or 4 when the stick started far out in
    the force-balance band.
    """

    exit_state: State
    exit_time: float
    quadrant: int
    entry_state: State
    entry_time: float

    @property
    def dwell(self) -> float:
        return self.exit_time - self.entry_time


def _quadrant(x1: float, x2: float) -> int:
    if x2 > 0:
        return 1 if x1 >= 0 else 2
    return 3 if x1 <= 0 else 4


def breakaway_x1(x2: float, system: SystemMatrices) -> float:
    """Integral error at which a stick with output error ``x2`` breaks away."""
    return x2 * (system.fc / abs(x2) - system.kp) / system.ki


def stick_exit(entry: State, entry_time: float, system: SystemMatrices) -> StickExit | None:
    """Closed-form end of a stick phase entered at ``entry``.

    Returns ``None`` when the stick never ends: ``x2 = 0`` (the state is on
    the equilibrium segment) or ``ki = 0`` (no integral drift).

    Raises
    ------
    ValueError
        If ``entry`` is not at rest in the force-balance stick set.
    """
    if not math.isfinite(entry_time):
        raise ValueError("entry_time must be finite")
    if not holds_at_rest(entry, system):
        raise ValueError(f"entry state {entry} is not sticking")
    x1s, x2s = entry.x1, entry.x2
    if x2s == 0.0 or system.ki == 0.0:
        return None
    x1c = breakaway_x1(x2s, system)
    dwell = (x1c - x1s) / x2s
    # entries on the exit edge itself leave immediately
    dwell = max(dwell, 0.0)
    exit_state = State(x1c, x2s, 0.0)
    return StickExit(
        exit_state=exit_state,
        exit_time=entry_time + dwell,
        quadrant=_quadrant(x1c, x2s),
        entry_state=State(x1s, x2s, 0.0),
        entry_time=entry_time,
    )


def equivalent_control(state: State, system: SystemMatrices) -> float:
    """Continuous input that keeps ``x3 = 0``: ``(ki x1 + kp x2 + kd x3) / fc``."""
    if system.fc == 0:
        raise ValueError("equivalent control is undefined for fc = 0")
    return (system.ki * state.x1 + system.kp * state.x2 + system.kd * state.x3) / system.fc


def region_vertices(system: SystemMatrices) -> dict:
    """Corners of the rhombus in the ``(x1, x2)`` plane.

    For ``ki > 0`` returns ``{"kind": "rhombus", "vertices": [...]}`` with the
    four corners counter-clockwise from ``(fc/ki, 0)``. For ``ki = 0`` returns
    ``{"kind": "strip", "half_width": fc/kp}``.
    """
    if not system.kp > 0:
        raise ValueError("kp must be positive")
    region = StictionRegion.of(system)
    if region.is_strip:
        return {"kind": "strip", "half_width": region.d2}
    d1, d2 = region.d1, region.d2
    return {
        "kind": "rhombus",
        "vertices": [(d1, 0.0), (0.0, d2), (-d1, 0.0), (0.0, -d2)],
    }
