"""Closed-loop PID plant with Coulomb friction in relay-feedback form.

The regulation error ``e`` of a unit mass obeys::

    e'' + kd e' + kp e + ki \\int e dt + fc sign(e') = 0

and with the state ``x = (\\int e, e, e')`` this becomes ``x' = A x + B u``
with ``u = -sign(x3)``, ``A`` in companion form and ``B = (0, 0, fc)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Gains",
    "FrictionParams",
    "SystemMatrices",
    "State",
    "build_system",
    "is_linearly_stable",
    "eigenvalues",
    "characteristic_roots",
]


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Gains:
    """Derivative, proportional and integral feedback gains."""

    kd: float
    kp: float
    ki: float

    def __post_init__(self) -> None:
        _check_finite(kd=self.kd, kp=self.kp, ki=self.ki)
        if self.kd < 0:
            raise ValueError(f"kd must be >= 0, got {self.kd}")
        if self.kp <= 0:
            raise ValueError(f"kp must be > 0, got {self.kp}")
        if self.ki < 0:
            raise ValueError(f"ki must be >= 0, got {self.ki}")

    def scaled(self, c: float) -> "Gains":
        return Gains(self.kd * c, self.kp * c, self.ki * c)


@dataclass(frozen=True)
class FrictionParams:
    """Coulomb friction level (force per unit mass); ``fc = 0`` is frictionless."""

    fc: float

    def __post_init__(self) -> None:
        _check_finite(fc=self.fc)
        if self.fc < 0:
            raise ValueError(f"fc must be >= 0, got {self.fc}")


class State(NamedTuple):
    """Integral error, output error and rate error."""

    x1: float
    x2: float
    x3: float

    @classmethod
    def of(cls, values) -> "State":
        x1, x2, x3 = (float(v) for v in values)
        return cls(x1, x2, x3)

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.x1 * self.x1 + self.x2 * self.x2 + self.x3 * self.x3)


@dataclass(frozen=True, eq=False)
class SystemMatrices:
    """State-space data ``(A, B, C)`` of the closed loop plus the friction level.

    Arrays are marked read-only; the gains they were built from are kept so
    the scalar hot paths never have to read matrix entries back.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    fc: float
    gains: Gains

    @property
    def kd(self) -> float:
        return self.gains.kd

    @property
    def kp(self) -> float:
        return self.gains.kp

    @property
    def ki(self) -> float:
        return self.gains.ki


def build_system(gains: Gains, friction: FrictionParams) -> SystemMatrices:
    """Assemble ``A``, ``B`` and ``C`` for the given gains and friction level.

    Parameters
    ----------
    gains : Gains
        Feedback gains; validated on construction.
    friction : FrictionParams
        Coulomb level ``fc``.

    Returns
    -------
    SystemMatrices
        ``A`` has rows ``(0, 1, 0)``, ``(0, 0, 1)``, ``(-ki, -kp, -kd)``;
        ``B = (0, 0, fc)`` and ``C = (0, 0, 1)``.
    """
    if not isinstance(gains, Gains) or not isinstance(friction, FrictionParams):
        raise TypeError("build_system expects Gains and FrictionParams")
    # 0.0 - g rather than -g: zero gains must read back as +0.0
    a = np.array(
        [
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0 - gains.ki, 0.0 - gains.kp, 0.0 - gains.kd],
        ]
    )
    b = np.array([0.0, 0.0, float(friction.fc)])
    c = np.array([0.0, 0.0, 1.0])
    for arr in (a, b, c):
        arr.setflags(write=False)
    return SystemMatrices(a=a, b=b, c=c, fc=float(friction.fc), gains=gains)


def is_linearly_stable(gains: Gains) -> bool:
    """Routh-Hurwitz test for ``s^3 + kd s^2 + kp s + ki``.

    All three gains must be strictly positive and ``kd * kp > ki`` must hold
    strictly. Systems with ``kd = 0`` or ``ki = 0`` are reported unstable here
    even though the simulator accepts them.
    """
    return gains.kd > 0 and gains.kp > 0 and gains.ki > 0 and gains.kd * gains.kp > gains.ki


_EPS = np.finfo(float).eps


def _horner(coeffs: tuple[float, float, float], z: complex) -> complex:
    kd, kp, ki = coeffs
    return ((z + kd) * z + kp) * z + ki


def _real_root(kd: float, kp: float, ki: float) -> float:
    """One real root of the monic cubic by safeguarded Newton on a bracket."""

    def p(s: float) -> float:
        return ((s + kd) * s + kp) * s + ki

    def dp(s: float) -> float:
        return (3.0 * s + 2.0 * kd) * s + kp

    if ki == 0.0:
        return 0.0
    # Cauchy bound on root magnitude
    r = 1.0 + max(abs(kd), abs(kp), abs(ki))
    lo, hi = -r, r
    # p(lo) < 0 < p(hi) for a monic cubic beyond the bound
    s = -ki / kp if kp else -r
    s = min(max(s, lo), hi)
    for _ in range(400):
        f = p(s)
        if f == 0.0:
            return s
        if f < 0.0:
            lo = s
        else:
            hi = s
        d = dp(s)
        step_ok = False
        if d != 0.0:
            t = s - f / d
            if lo < t < hi:
                step_ok = True
                s_new = t
        if not step_ok:
            s_new = 0.5 * (lo + hi)
        if s_new == s or hi - lo <= 4.0 * math.ulp(max(abs(lo), abs(hi), 1e-300)):
            return s_new
        s = s_new
    return s


def _polish(coeffs: tuple[float, float, float], z: complex) -> complex:
    kd, kp, _ = coeffs
    for _ in range(3):
        d = (3.0 * z + 2.0 * kd) * z + kp
        if d == 0:
            break
        z_new = z - _horner(coeffs, z) / d
        if abs(_horner(coeffs, z_new)) >= abs(_horner(coeffs, z)):
            break
        z = z_new
    return z


def characteristic_roots(kd: float, kp: float, ki: float) -> list[complex]:
    """Roots of ``s^3 + kd s^2 + kp s + ki`` sorted by real then imaginary part."""
    coeffs = (float(kd), float(kp), float(ki))
    r = _real_root(*coeffs)
    # deflate: s^3 + kd s^2 + kp s + ki = (s - r)(s^2 + p s + q)
    p = kd + r
    q = kp + r * p
    disc = p * p - 4.0 * q
    if disc < 0.0 and -disc <= 64.0 * _EPS * max(p * p, abs(4.0 * q)):
        disc = 0.0  # double root lost to rounding
    if disc >= 0.0:
        sq = math.sqrt(disc)
        # numerically stable pair
        big = -0.5 * (p + math.copysign(sq, p))
        small = q / big if big != 0.0 else 0.0
        pair = [complex(big), complex(small)]
    else:
        sq = math.sqrt(-disc)
        pair = [complex(-0.5 * p, 0.5 * sq), complex(-0.5 * p, -0.5 * sq)]
    roots = [complex(r)] + [_polish(coeffs, z) for z in pair]
    # keep the conjugate pair exactly symmetric after polishing
    if disc < 0.0:
        z = roots[1]
        roots[1], roots[2] = complex(z.real, abs(z.imag)), complex(z.real, -abs(z.imag))
    return sorted(roots, key=lambda z: (z.real, z.imag))


def eigenvalues(system: SystemMatrices) -> list[complex]:
    """Eigenvalues of the slip-phase matrix ``A`` (companion form, degree 3)."""
    return characteristic_roots(system.kd, system.kp, system.ki)


def residual(system: SystemMatrices, z: complex) -> float:
    return abs(_horner((system.kd, system.kp, system.ki), z))


def spectral_radius(system: SystemMatrices) -> float:
    return max(abs(z) for z in eigenvalues(system))
