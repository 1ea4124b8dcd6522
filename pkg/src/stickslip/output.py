"""Plot-ready CSV files and the plain-text run report."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import Trace, stiction_energy
from .model import Gains, State, SystemMatrices, eigenvalues, is_linearly_stable
from .oracle import OracleRun

__all__ = [
    "TraceTable",
    "trace_table",
    "oracle_table",
    "write_trace_csv",
    "read_trace_csv",
    "write_events_csv",
    "read_events_csv",
    "oracle_events",
    "format_report",
]

TRACE_HEADER = ("t", "x1", "x2", "x3", "phase", "u", "V")
EVENT_HEADER = ("n", "kind", "t", "x1", "x2", "x3")


def _f(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True, eq=False)
class TraceTable:
    """Columns of ``trace.csv``. ``u`` is NaN on stick rows."""

    t: np.ndarray
    x: np.ndarray
    phase: list[str]
    u: np.ndarray
    v: np.ndarray

    def __len__(self) -> int:
        return self.t.size


def _energy(x: np.ndarray, gains: Gains) -> np.ndarray:
    return 0.5 * gains.ki * x[:, 0] ** 2 + 0.5 * gains.kp * x[:, 1] ** 2


def trace_table(trace: Trace) -> TraceTable:
    t, x, phase, u = trace.sampled()
    uu = np.array([math.nan if v is None else v for v in u], dtype=float)
    return TraceTable(t, x, phase, uu, _energy(x, trace.gains))


def oracle_table(run: OracleRun, system: SystemMatrices) -> TraceTable:
    x = run.states
    phase = ["stick" if r else "slip" for r in run.at_rest]
    drive = system.ki * x[:, 0] + system.kp * x[:, 1]
    u = np.where(x[:, 2] != 0, -np.sign(x[:, 2]), -np.sign(drive))
    u = np.where(run.at_rest, math.nan, u)
    return TraceTable(run.times, x, phase, u, _energy(x, system.gains))


def write_trace_csv(table: TraceTable, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for k in range(len(table)):
            u = table.u[k]
            w.writerow(
                [
                    _f(table.t[k]),
                    *(_f(c) for c in table.x[k]),
                    table.phase[k],
                    "" if math.isnan(u) else _f(u),
                    _f(table.v[k]),
                ]
            )
    return path


def read_trace_csv(path: str | Path) -> TraceTable:
    """Parse a file written by :func:`write_trace_csv`."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[:1]}")
    body = rows[1:]
    t = np.array([float(r[0]) for r in body])
    x = np.array([[float(c) for c in r[1:4]] for r in body]).reshape(-1, 3)
    phase = [r[4] for r in body]
    u = np.array([math.nan if r[5] == "" else float(r[5]) for r in body])
    v = np.array([float(r[6]) for r in body])
    return TraceTable(t, x, phase, u, v)


def write_events_csv(events: list[tuple[str, float, State]], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_HEADER)
        for n, (kind, t, x) in enumerate(events):
            w.writerow([n, kind, _f(t), *(_f(c) for c in x)])
    return path


def read_events_csv(path: str | Path) -> list[tuple[str, float, State]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != EVENT_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[:1]}")
    return [(r[1], float(r[2]), State(*(float(c) for c in r[3:6]))) for r in rows[1:]]


def oracle_events(run: OracleRun) -> list[tuple[str, float, State]]:
    """Phase changes seen at the oracle's sample resolution."""
    out = [("start", float(run.times[0]), State.of(run.states[0]))]
    rest = run.at_rest
    x3 = run.states[:, 2]
    for k in range(1, run.times.size):
        x = State.of(run.states[k])
        t = float(run.times[k])
        if rest[k] and not rest[k - 1]:
            out.append(("enter_stiction", t, x))
        elif rest[k - 1] and not rest[k]:
            out.append(("stick_exit", t, x))
        elif not rest[k] and not rest[k - 1] and x3[k] * x3[k - 1] < 0:
            out.append(("relay_flip", t, x))
    out.append(("end", float(run.times[-1]), State.of(run.states[-1])))
    return out


def _fmt_eig(z: complex) -> str:
    if z.imag == 0:
        return f"{z.real:.10g}"
    return f"{z.real:.10g} {'+' if z.imag > 0 else '-'} {abs(z.imag):.10g}j"


def format_report(trace: Trace, extra: list[str] | None = None) -> str:
    """Human-readable summary of a run."""
    system = trace.system
    g = trace.gains
    x = trace.final_state
    lines = [
        f"gains            kd = {g.kd:g}, kp = {g.kp:g}, ki = {g.ki:g}",
        f"friction         fc = {trace.fc:g}",
        f"initial state    {x_str(trace.initial)}",
        f"linear loop      {'stable' if is_linearly_stable(g) else 'not stable'}"
        f" (all gains > 0 and kd*kp > ki: {g.kd * g.kp:g} vs {g.ki:g})",
        "eigenvalues      " + ", ".join(_fmt_eig(z) for z in eigenvalues(system)),
        f"cycles           {trace.cycle_count}",
        f"termination      {trace.termination.value}",
        f"end time         {trace.t_end:.10g}",
        f"final state      {x_str(x)}",
        f"final V          {stiction_energy(x, g):.6g}",
    ]
    if g.ki > 0:
        bound = trace.fc / g.ki
        lines.append(f"final |x1|       {abs(x.x1):.6g} (fc/ki = {bound:.6g}, {'within' if abs(x.x1) <= bound else 'outside'})")
    else:
        lines.append(f"final |x1|       {abs(x.x1):.6g} (ki = 0: no bound)")
    lines.append(f"stick phases     {len(trace.sticks())}, relay flips {len(trace.relay_flips())}")
    lines.append(f"friction work    {trace.energy.dissipated_total:.6g}")
    if extra:
        lines.extend(extra)
    return "\n".join(lines) + "\n"


def x_str(x: State) -> str:
    return f"({x.x1:.10g}, {x.x2:.10g}, {x.x3:.10g})"
