import math

import numpy as np
import pytest

from stickslip.cli import EXIT_CHATTER, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, main
from stickslip.compare import compare
from stickslip.config import PRESETS, ConfigError, parse_config, preset_digest
from stickslip.engine import Limits, simulate
from stickslip.model import FrictionParams, Gains, State
from stickslip.output import read_events_csv, read_trace_csv, trace_table, write_trace_csv

PRESET_SHA256 = "5d65ea3dfecb85e9b168411192df469c732fdcf203f041d1a0a4719885945328"

EX2_TEXT = """
# positioning run
kd = 20
kp = 100
ki = 1000      # integral gain
fc = 50
x0 = 0, -1.1, 0
t_max = 5
output_rate = 100
"""


def test_presets_pinned():
    assert preset_digest() == PRESET_SHA256


@pytest.mark.parametrize(
    "name, gains, fcs, x0, t_max",
    [
        ("example1", (0, 100, 1), [0, 1], (0, 0, 10), 60),
        ("example2a", (20, 100, 1000), [50], (0, -1.1, 0), 120),
        ("example2b", (20, 100, 1000), [75], (0, -1.1, 0), 120),
        ("example2c", (20, 100, 1000), [100], (0, -1.1, 0), 120),
        ("example3", (10, 1040, 8000), [100], (0, -0.15, 0), 10),
        ("example4a", (56, 1040, 6400), [100], (0, -0.2, 0), 20),
        ("example4b", (56, 1040, 6400), [100], (0, -0.25, 0), 20),
        ("example4c", (56, 1040, 6400), [100], (0, -0.3, 0), 20),
        ("example4d", (56, 1040, 6400), [100], (0, -0.35, 0), 20),
        ("example5", (20, 100, 1000), [50], (0, -0.5, 0), 1e5),
    ],
)
def test_preset_values(name, gains, fcs, x0, t_max):
    p = PRESETS[name]
    assert (p.config.kd, p.config.kp, p.config.ki) == gains
    assert [c.fc for _, c in p.configs()] == fcs
    assert p.config.x0 == x0
    assert p.config.t_max == t_max


def test_parse_config():
    cfg = parse_config(EX2_TEXT)
    assert (cfg.kd, cfg.kp, cfg.ki, cfg.fc) == (20, 100, 1000, 50)
    assert cfg.x0 == (0.0, -1.1, 0.0)
    assert cfg.output_rate == 100
    assert cfg.mode == "engine"
    assert parse_config(cfg.to_text()) == cfg.replace(name="scenario")


@pytest.mark.parametrize(
    "text",
    [
        "kd = 1\nkp = 1\nki = 1\nfc = 1\nx0 = 0, 0\nt_max = 1",
        "kd = 1\nkp = 1\nki = 1\nfc = 1\nx0 = 0, 0, 0",
        "kd = 1\nkp = 1\nki = 1\nfc = 1\nx0 = 0, 0, 0\nt_max = inf",
        "kd = 1\nkp = 1\nki = 1\nfc = -1\nx0 = 0, 0, 0\nt_max = 1",
        "kd = 1\nkp = 0\nki = 1\nfc = 1\nx0 = 0, 0, 0\nt_max = 1",
        "kd = 1\nkp = 1\nki = 1\nfc = 1\nx0 = 0, 0, 0\nt_max = 1\nbogus = 2",
        "kd = 1\nkd = 2\nkp = 1\nki = 1\nfc = 1\nx0 = 0, 0, 0\nt_max = 1",
        "kd 1",
        "kd = 1\nkp = 1\nki = 1\nfc = 1\nx0 = 0, 0, 0\nt_max = 1\nmode = fast",
        "kd = 1\nkp = 1\nki = 1\nfc = 1\nx0 = 0, a, 0\nt_max = 1",
    ],
)
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_trace_csv_round_trip(tmp_path):
    tr = simulate(State(0, -1.1, 0), Gains(20, 100, 1000), FrictionParams(50), Limits(t_max=3.0), 200.0)
    table = trace_table(tr)
    path = write_trace_csv(table, tmp_path / "trace.csv")
    back = read_trace_csv(path)
    assert np.array_equal(back.t, table.t)
    assert np.array_equal(back.x, table.x)
    assert np.array_equal(back.v, table.v)
    assert back.phase == table.phase
    assert np.array_equal(np.isnan(back.u), np.isnan(table.u))
    ok = ~np.isnan(table.u)
    assert np.array_equal(back.u[ok], table.u[ok])


def _write(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_writes_files(tmp_path):
    cfg = _write(tmp_path, EX2_TEXT)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out)]) == EXIT_OK
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2,x3,phase,u,V"
    events = read_events_csv(out / "events.csv")
    assert events[0][0] == "start" and events[-1][0] == "end"
    assert any(k == "enter_stiction" for k, _, _ in events)
    report = (out / "report.txt").read_text()
    for key in ("kd = 20", "stable", "eigenvalues", "cycles", "termination", "fc/ki"):
        assert key in report


def test_run_example2b_convergence(tmp_path):
    out = tmp_path / "ex2b"
    assert main(["run", "--preset", "example2b", "--out", str(out), "--rate", "100"]) == EXIT_OK
    table = read_trace_csv(out / "trace.csv")
    x2 = np.abs(table.x[:, 1])
    early = x2[(table.t >= 12) & (table.t < 60)].max()
    late = x2[table.t >= 60].max()
    assert late < early
    onsets = [abs(x.x2) for k, _, x in read_events_csv(out / "events.csv") if k == "enter_stiction"]
    assert onsets[-1] < onsets[1]


def test_run_example5_durations(tmp_path):
    out = tmp_path / "ex5"
    assert main(["run", "--preset", "example5", "--out", str(out)]) == EXIT_OK
    ev = read_events_csv(out / "events.csv")
    starts = [t for k, t, _ in ev if k == "enter_stiction"]
    ends = [t for k, t, _ in ev if k == "stick_exit"]
    durations = [b - a for a, b in zip(starts, ends)]
    assert len(durations) >= 10
    assert all(b > a for a, b in zip(durations, durations[1:]))


def test_frictionless_report(tmp_path):
    cfg = _write(tmp_path, "kd = 20\nkp = 100\nki = 1000\nfc = 0\nx0 = 0.1, -0.5, 2\nt_max = 60\noutput_rate = 10\n")
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out)]) == EXIT_OK
    report = (out / "report.txt").read_text()
    assert "cycles           0" in report
    assert "ConvergedToLambda" in report


def test_sweep(tmp_path):
    cfg = _write(tmp_path, EX2_TEXT)
    out = tmp_path / "sw"
    assert main(["run", "--config", cfg, "--out", str(out), "--sweep", "fc=50,75,100"]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["fc=100", "fc=50", "fc=75", "sweep_report.txt"]
    assert len((out / "sweep_report.txt").read_text().splitlines()) == 3
    assert main(["run", "--config", cfg, "--out", str(out), "--sweep", "fc"]) == EXIT_CONFIG
    assert main(["run", "--config", cfg, "--out", str(out), "--sweep", "x0=1,2"]) == EXIT_CONFIG


def test_modes(tmp_path):
    cfg = _write(tmp_path, EX2_TEXT + "oracle_dt = 1e-4\n")
    for mode, files in (("oracle", {"trace.csv", "events.csv", "report.txt"}),
                        ("both", {"trace.csv", "events.csv", "report.txt", "oracle_trace.csv", "oracle_events.csv"})):
        out = tmp_path / mode
        assert main(["run", "--config", cfg, "--out", str(out), "--mode", mode]) == EXIT_OK
        assert {p.name for p in out.iterdir()} == files
    report = (tmp_path / "both" / "report.txt").read_text()
    assert "max |dx| vs oracle" in report


def test_exit_codes(tmp_path, capsys):
    assert main(["run", "--preset", "nope"]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    div = _write(tmp_path, "kd = 0\nkp = 100\nki = 1\nfc = 0\nx0 = 0, 0, 10\nt_max = 1000\ndivergence_bound = 20\n")
    assert main(["run", "--config", div, "--out", str(tmp_path / "d")]) == EXIT_DIVERGENCE
    assert "divergence" in capsys.readouterr().err


def test_chatter_exit_code(tmp_path, monkeypatch):
    import stickslip.cli as cli
    from stickslip.slip import ChatterDetected

    def boom(*a, **k):
        raise ChatterDetected("too many flips")

    monkeypatch.setattr(cli, "simulate", boom)
    cfg = _write(tmp_path, EX2_TEXT)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "c")]) == EXIT_CHATTER


def test_compare_and_mismatch(tmp_path):
    cfg = parse_config(EX2_TEXT + "oracle_dt = 1e-4\n")
    res = compare(cfg)
    assert res.passed and res.worst < 1e-6
    assert res.deviation.shape == (res.times.size, 3)
    with pytest.raises(ConfigError):
        compare(cfg, cfg.replace(kp=101.0))
    other = _write(tmp_path, EX2_TEXT.replace("kp = 100", "kp = 101"), "o.cfg")
    mine = _write(tmp_path, EX2_TEXT)
    assert main(["compare", "--config", mine, "--oracle-config", other, "--out", str(tmp_path / "c")]) == EXIT_CONFIG


def test_compare_frictionless(tmp_path):
    cfg = parse_config("kd = 20\nkp = 100\nki = 1000\nfc = 0\nx0 = 0.1, -0.5, 2\nt_max = 2\noracle_dt = 1e-3\n")
    res = compare(cfg)
    # RK4 truncation at dt = 1e-3 for these rates is well below 1e-8
    assert res.worst < 1e-8


def test_compare_cli(tmp_path):
    cfg = _write(tmp_path, EX2_TEXT + "oracle_dt = 1e-4\n")
    out = tmp_path / "cmp"
    assert main(["compare", "--config", cfg, "--out", str(out)]) == EXIT_OK
    lines = (out / "deviation.csv").read_text().splitlines()
    assert lines[0] == "t,dx1,dx2,dx3"
    assert "PASS" in (out / "report.txt").read_text()


def test_presets_listing(capsys):
    assert main(["presets"]) == EXIT_OK
    text = capsys.readouterr().out
    assert all(name in text for name in PRESETS)
    assert math.isfinite(PRESETS["example5"].config.output_rate)
