"""Side-by-side runs of the event-driven simulator and the fixed-step oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ScenarioConfig
from .engine import Trace, simulate
from .model import build_system
from .oracle import OracleConfig, OracleRun, oracle_run

__all__ = ["Comparison", "compare"]


@dataclass(frozen=True, eq=False)
class Comparison:
    """Engine and oracle sampled on the oracle's grid.

    ``deviation[k, i]`` is ``|engine_i - oracle_i|`` at ``times[k]``.
    """

    trace: Trace
    oracle: OracleRun
    times: np.ndarray
    engine_states: np.ndarray
    deviation: np.ndarray
    tolerance: float

    @property
    def sup_norm(self) -> np.ndarray:
        return self.deviation.max(axis=0) if self.deviation.size else np.zeros(3)

    @property
    def worst(self) -> float:
        return float(self.sup_norm.max())

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def summary(self) -> list[str]:
        s = self.sup_norm
        return [
            f"oracle dt        {self.oracle.config.dt:g} (band {self.oracle.config.band(self.trace.fc):g})",
            f"compared over    [0, {self.times[-1]:.10g}] at {self.times.size} samples",
            f"max |dx|         x1 {s[0]:.3e}, x2 {s[1]:.3e}, x3 {s[2]:.3e}",
            f"tolerance        {self.tolerance:g}: {'PASS' if self.passed else 'FAIL'}",
        ]


def compare(config: ScenarioConfig, oracle_config: ScenarioConfig | None = None) -> Comparison:
    """Run both integrators on ``config`` and measure their disagreement.

    ``oracle_config`` may supply the oracle step and band separately; its
    gains, friction and initial state must match ``config``.
    """
    ocfg = oracle_config or config
    if ocfg.physics() != config.physics():
        raise ConfigError(
            f"oracle scenario {ocfg.physics()} does not match engine scenario {config.physics()}"
        )
    system = build_system(config.gains, config.friction)
    trace = simulate(config.initial, config.gains, config.friction, config.limits, config.output_rate)
    t_end = trace.t_end
    cfg = OracleConfig(ocfg.oracle_dt, ocfg.oracle_v_eps)
    run = oracle_run(config.initial, system, cfg, t_end, sample_dt=1.0 / config.output_rate)
    keep = run.times <= t_end
    times = run.times[keep]
    ours = trace.states_at(times)
    dev = np.abs(ours - run.states[keep])
    return Comparison(trace, run, times, ours, dev, config.tolerance)
