"""Command-line front end: ``stickslip run | compare | presets``.

Exit codes: 0 success, 1 comparison outside tolerance, 2 configuration error,
3 divergence, 4 chatter.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .compare import compare
from .config import PRESETS, ConfigError, ScenarioConfig, load_config
from .engine import DivergenceDetected, simulate
from .model import build_system
from .oracle import OracleConfig, oracle_run
from .output import (
    format_report,
    oracle_events,
    oracle_table,
    trace_table,
    write_events_csv,
    write_trace_csv,
)
from .slip import ChatterDetected

log = logging.getLogger("stickslip")

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_CHATTER = 4


def _parse_sweep(text: str) -> tuple[str, list[float]]:
    key, sep, vals = text.partition("=")
    if not sep or not vals.strip():
        raise ConfigError(f"--sweep expects PARAM=v1,v2,..., got {text!r}")
    try:
        values = [float(v) for v in vals.split(",")]
    except ValueError:
        raise ConfigError(f"--sweep values must be numbers, got {vals!r}") from None
    key = key.strip()
    if key not in ("kd", "kp", "ki", "fc", "t_max", "output_rate"):
        raise ConfigError(f"cannot sweep {key!r}")
    return key, values


def _scenarios(args) -> list[tuple[str, ScenarioConfig]]:
    """Resolve --preset/--config plus overrides into labelled scenarios."""
    if args.config:
        runs = [("", load_config(args.config))]
    else:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; try 'stickslip presets'")
        runs = PRESETS[args.preset].configs()
    over = {}
    if args.rate is not None:
        over["output_rate"] = args.rate
    if getattr(args, "mode", None):
        over["mode"] = args.mode
    if getattr(args, "oracle_dt", None):
        over["oracle_dt"] = args.oracle_dt
    if over:
        runs = [(lab, c.replace(**over)) for lab, c in runs]
    if getattr(args, "sweep", None):
        key, values = _parse_sweep(args.sweep)
        runs = [
            ((f"{lab}," if lab else "") + f"{key}={v:g}", c.replace(**{key: v}))
            for lab, c in runs
            for v in values
        ]
    return runs


def _out_dir(args, cfg: ScenarioConfig, label: str, many: bool) -> Path:
    base = Path(args.out or cfg.out or f"out/{cfg.name}")
    if many:
        base = base / label.replace(",", "_")
    base.mkdir(parents=True, exist_ok=True)
    return base


def _run_one(cfg: ScenarioConfig, out: Path) -> dict:
    system = build_system(cfg.gains, cfg.friction)
    row = {"scenario": cfg.name, "out": str(out)}
    extra = [f"mode             {cfg.mode}"]
    if cfg.mode in ("engine", "both"):
        trace = simulate(cfg.initial, cfg.gains, cfg.friction, cfg.limits, cfg.output_rate)
        write_trace_csv(trace_table(trace), out / "trace.csv")
        write_events_csv(trace.events(), out / "events.csv")
        row.update(cycles=trace.cycle_count, termination=trace.termination.value, final=trace.final_state)
    if cfg.mode in ("oracle", "both"):
        ocfg = OracleConfig(cfg.oracle_dt, cfg.oracle_v_eps)
        t_end = trace.t_end if cfg.mode == "both" else cfg.t_max
        run = oracle_run(cfg.initial, system, ocfg, t_end, sample_dt=1.0 / cfg.output_rate)
        name = "oracle_" if cfg.mode == "both" else ""
        write_trace_csv(oracle_table(run, system), out / f"{name}trace.csv")
        write_events_csv(oracle_events(run), out / f"{name}events.csv")
        extra.append(f"oracle dt        {ocfg.dt:g} (band {ocfg.band(cfg.fc):g})")
        if cfg.mode == "both":
            dev = np.abs(trace.states_at(run.times[run.times <= t_end]) - run.states[run.times <= t_end])
            extra.append("max |dx| vs oracle " + ", ".join(f"{d:.3e}" for d in dev.max(axis=0)))
        else:
            row.update(final=tuple(run.states[-1]), termination="oracle")
    if cfg.mode == "oracle":
        (out / "report.txt").write_text(_oracle_report(cfg, run) + "\n".join(extra) + "\n")
    else:
        (out / "report.txt").write_text(format_report(trace, extra))
    return row


def _oracle_report(cfg: ScenarioConfig, run) -> str:
    x = run.states[-1]
    return (
        f"gains            kd = {cfg.kd:g}, kp = {cfg.kp:g}, ki = {cfg.ki:g}\n"
        f"friction         fc = {cfg.fc:g}\n"
        f"end time         {run.times[-1]:.10g}\n"
        f"final state      ({x[0]:.10g}, {x[1]:.10g}, {x[2]:.10g})\n"
        f"ended at rest    {bool(run.at_rest[-1])}\n"
    )


def cmd_run(args) -> int:
    runs = _scenarios(args)
    many = len(runs) > 1
    jobs = [(lab, cfg, _out_dir(args, cfg, lab, many)) for lab, cfg in runs]
    with ThreadPoolExecutor(max_workers=max(1, min(len(jobs), args.jobs))) as pool:
        futures = [pool.submit(_run_one, cfg, out) for _, cfg, out in jobs]
        rows = [f.result() for f in futures]
    lines = []
    for (lab, _, _), row in zip(jobs, rows):
        fin = row.get("final")
        fin_s = "" if fin is None else "final x = (" + ", ".join(f"{v:.6g}" for v in fin) + ")"
        lines.append(f"{lab or row['scenario']}: cycles {row.get('cycles', '-')}, {row['termination']}, {fin_s}")
    if many:
        root = Path(args.out or runs[0][1].out or f"out/{runs[0][1].name}")
        (root / "sweep_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_compare(args) -> int:
    runs = _scenarios(args)
    oracle_cfg = load_config(args.oracle_config) if args.oracle_config else None
    status = EXIT_OK
    for lab, cfg in runs:
        ocfg = oracle_cfg.replace(name=cfg.name) if oracle_cfg else None
        res = compare(cfg, ocfg)
        out = _out_dir(args, cfg, lab, len(runs) > 1)
        with (out / "deviation.csv").open("w") as fh:
            fh.write("t,dx1,dx2,dx3\n")
            for t, d in zip(res.times, res.deviation):
                fh.write(f"{t:.17g},{d[0]:.17g},{d[1]:.17g},{d[2]:.17g}\n")
        (out / "report.txt").write_text(format_report(res.trace, res.summary()))
        print(f"{lab or cfg.name}: " + "; ".join(res.summary()[2:]))
        if not res.passed:
            status = EXIT_MISMATCH
    return status


def cmd_presets(args) -> int:
    for name, p in PRESETS.items():
        c = p.config
        sweep = f" [sweep {p.sweep[0]} in {list(p.sweep[1])}]" if p.sweep else ""
        print(f"{name:10s} kd={c.kd:g} kp={c.kp:g} ki={c.ki:g} fc={c.fc:g} x0={c.x0} t_max={c.t_max:g}{sweep}")
        print(f"{'':10s} {p.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stickslip", description="PID positioning with Coulomb friction")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--preset", help="built-in scenario (see 'presets')")
        src.add_argument("--config", help="key = value scenario file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--rate", type=float, help="output sample rate in Hz")
        sp.add_argument("--sweep", help="PARAM=v1,v2,... runs one scenario per value")
        sp.add_argument("--oracle-dt", type=float, help="oracle step size")

    r = sub.add_parser("run", help="simulate and write trace.csv, events.csv, report.txt")
    scenario_args(r)
    r.add_argument("--mode", choices=("engine", "oracle", "both"))
    r.add_argument("--jobs", type=int, default=4, help="parallel sweep workers")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="engine against the fixed-step oracle")
    scenario_args(c)
    c.add_argument("--oracle-config", help="scenario file with oracle_dt / oracle_v_eps")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("presets", help="list built-in scenarios")
    s.set_defaults(func=cmd_presets)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceDetected as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ChatterDetected as exc:
        print(f"chatter: {exc}", file=sys.stderr)
        return EXIT_CHATTER


if __name__ == "__main__":
    sys.exit(main())
