"""Scenario configuration: flat ``key = value`` files and the built-in presets."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .engine import Limits
from .model import FrictionParams, Gains, State

__all__ = ["ConfigError", "ScenarioConfig", "Preset", "PRESETS", "parse_config", "load_config", "preset_digest"]

MODES = ("engine", "oracle", "both")


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    kd: float
    kp: float
    ki: float
    fc: float
    x0: tuple[float, float, float]
    t_max: float
    max_cycles: int = 100_000
    eps_lambda: float | None = None
    output_rate: float = 1000.0
    out: str | None = None
    mode: str = "engine"
    oracle_dt: float = 1e-5
    oracle_v_eps: float | None = None
    tolerance: float = 1e-6
    divergence_bound: float | None = None
    name: str = "scenario"

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f"{f.name} must be finite, got {v}")
        if len(self.x0) != 3 or not all(math.isfinite(v) for v in self.x0):
            raise ConfigError(f"x0 needs three finite values, got {self.x0}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        try:
            self.gains
            self.friction
            self.limits
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("output_rate", "oracle_dt", "tolerance"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def gains(self) -> Gains:
        return Gains(self.kd, self.kp, self.ki)

    @property
    def friction(self) -> FrictionParams:
        return FrictionParams(self.fc)

    @property
    def initial(self) -> State:
        return State.of(self.x0)

    @property
    def limits(self) -> Limits:
        return Limits(
            t_max=self.t_max,
            max_cycles=self.max_cycles,
            eps_lambda=self.eps_lambda,
            divergence_bound=self.divergence_bound,
        )

    def replace(self, **changes) -> "ScenarioConfig":
        try:
            return dataclasses.replace(self, **changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def physics(self) -> tuple:
        return (self.kd, self.kp, self.ki, self.fc, tuple(self.x0))

    def to_text(self) -> str:
        lines = [f"# {self.name}"]
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None or f.name == "name":
                continue
            if f.name == "x0":
                v = ", ".join(repr(float(c)) for c in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FLOAT_KEYS = {
    "kd", "kp", "ki", "fc", "t_max", "eps_lambda", "output_rate",
    "oracle_dt", "oracle_v_eps", "tolerance", "divergence_bound",
}


def _number(key: str, text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite, got {text!r}")
    return v


def parse_config(text: str, name: str = "scenario") -> ScenarioConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    ``x0`` takes three comma-separated numbers. Required keys are ``kd``,
    ``kp``, ``ki``, ``fc``, ``x0`` and ``t_max``.
    """
    values: dict = {"name": name}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (p.strip() for p in line.partition("="))
        if key in values and key != "name":
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in _FLOAT_KEYS:
            values[key] = _number(key, val)
        elif key == "max_cycles":
            v = _number(key, val)
            if v != int(v):
                raise ConfigError(f"max_cycles must be an integer, got {val!r}")
            values[key] = int(v)
        elif key == "x0":
            parts = [p for p in val.split(",")]
            if len(parts) != 3:
                raise ConfigError(f"x0 needs three comma-separated values, got {val!r}")
            values[key] = tuple(_number("x0", p.strip()) for p in parts)
        elif key in ("out", "mode", "name"):
            values[key] = val
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    missing = [k for k in ("kd", "kp", "ki", "fc", "x0", "t_max") if k not in values]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    try:
        return ScenarioConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, name=path.stem)


@dataclass(frozen=True)
class Preset:
    name: str
    config: ScenarioConfig
    description: str
    sweep: tuple[str, tuple[float, ...]] | None = None

    def configs(self) -> list[tuple[str, ScenarioConfig]]:
        """Concrete scenarios, one per sweep value (or just the one)."""
        if self.sweep is None:
            return [("", self.config)]
        key, vals = self.sweep
        return [(f"{key}={v:g}", self.config.replace(**{key: v})) for v in vals]


def _ex(name, gains, fc, x0, t_max, **kw) -> ScenarioConfig:
    kd, kp, ki = gains
    return ScenarioConfig(kd=kd, kp=kp, ki=ki, fc=fc, x0=x0, t_max=t_max, name=name, **kw)


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in [
        Preset(
            "example1",
            _ex("example1", (0.0, 100.0, 1.0), 1.0, (0.0, 0.0, 10.0), 60.0),
            "unstable linear loop (kd = 0) stabilised by Coulomb friction; fc in {0, 1}",
            sweep=("fc", (0.0, 1.0)),
        ),
        *[
            Preset(
                f"example2{tag}",
                _ex(f"example2{tag}", (20.0, 100.0, 1000.0), fc, (0.0, -1.1, 0.0), 120.0),
                f"positioning task from x2 = -1.1 with fc = {fc:g}",
            )
            for tag, fc in zip("abc", (50.0, 75.0, 100.0))
        ],
        Preset(
            "example3",
            _ex("example3", (10.0, 1040.0, 8000.0), 100.0, (0.0, -0.15, 0.0), 10.0),
            "one overshoot, then stick-slip without zero crossing of x2",
        ),
        *[
            Preset(
                f"example4{tag}",
                _ex(f"example4{tag}", (56.0, 1040.0, 6400.0), 100.0, (0.0, x2, 0.0), 20.0),
                f"poles -20, -20, -16 from x2 = {x2:g}: one overshoot stick, then slip onto x1 = fc/ki",
            )
            for tag, x2 in zip("abcd", (-0.2, -0.25, -0.3, -0.35))
        ],
        Preset(
            "example5",
            _ex("example5", (20.0, 100.0, 1000.0), 50.0, (0.0, -0.5, 0.0), 1e5, output_rate=1.0),
            "long run from the stiction boundary: stick durations grow geometrically",
        ),
    ]
}


def preset_digest() -> str:
    """SHA-256 over the physical parameters of every preset."""
    payload = {
        name: {
            "gains": [p.config.kd, p.config.kp, p.config.ki],
            "fc": [c.fc for _, c in p.configs()],
            "x0": list(p.config.x0),
            "t_max": p.config.t_max,
        }
        for name, p in sorted(PRESETS.items())
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
