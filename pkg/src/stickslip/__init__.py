"""Stick-slip simulation of PID positioning under Coulomb friction."""

from .compare import Comparison, compare
from .config import PRESETS, ConfigError, Preset, ScenarioConfig, load_config, parse_config
from .engine import (
    DivergenceDetected,
    EnergyReport,
    Limits,
    PhaseKind,
    PhaseSegment,
    Termination,
    Trace,
    dissipation_increment,
    simulate,
    stiction_energy,
)
from .model import (
    FrictionParams,
    Gains,
    State,
    SystemMatrices,
    build_system,
    characteristic_roots,
    eigenvalues,
    is_linearly_stable,
    spectral_radius,
)
from .oracle import OracleConfig, OracleRun, oracle_run, oracle_step
from .slip import (
    ChatterDetected,
    EventKind,
    SlipEvent,
    SlipFlow,
    matrix_exponential,
    next_event,
    propagate,
    propagate_augmented,
    propagate_literal,
)
from .stiction import (
    StickExit,
    StictionRegion,
    equivalent_control,
    holds_at_rest,
    in_stiction,
    region_vertices,
    stick_derivative,
    stick_exit,
)

__version__ = "0.1.0"

__all__ = [
    "ChatterDetected",
    "Comparison",
    "ConfigError",
    "DivergenceDetected",
    "EnergyReport",
    "EventKind",
    "FrictionParams",
    "Gains",
    "Limits",
    "OracleConfig",
    "OracleRun",
    "PRESETS",
    "PhaseKind",
    "PhaseSegment",
    "Preset",
    "ScenarioConfig",
    "SlipEvent",
    "SlipFlow",
    "State",
    "StickExit",
    "StictionRegion",
    "SystemMatrices",
    "Termination",
    "Trace",
    "build_system",
    "characteristic_roots",
    "compare",
    "dissipation_increment",
    "eigenvalues",
    "equivalent_control",
    "holds_at_rest",
    "in_stiction",
    "is_linearly_stable",
    "load_config",
    "matrix_exponential",
    "next_event",
    "oracle_run",
    "oracle_step",
    "parse_config",
    "propagate",
    "propagate_augmented",
    "propagate_literal",
    "region_vertices",
    "simulate",
    "spectral_radius",
    "stick_derivative",
    "stick_exit",
    "stiction_energy",
]
