"""Spin-dependent reflection from a single-sided cavity holding one SiV spin.

Two routes to the same number:

* :func:`reflection_coefficient` evaluates the closed form in dimensionless
  cooperativity and detunings.
* :func:`reflection_steady_state_oracle` solves the steady-state Langevin
  equations for the cavity field and dipole in the weak-excitation limit
  (``<sigma_z> = -1``, zero-mean noise) as a 2x2 linear system.

Sign convention of the oracle: ``da/dt`` carries ``-sqrt(kappa) a_in`` and the
output is ``a_out = a_in + sqrt(kappa) a``. With this pairing the linear solve
matches the closed form exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DOWN = "down"
UP = "up"
SPINS = (DOWN, UP)

SINGULAR_TOL = 1e-15


class SingularParametersError(ValueError):
    """Raised when the reflection denominator (or linear system) is singular."""


@dataclass(frozen=True)
class CavityParams:
    """Dimensionless cavity parameters.

    ``override`` pins ``(r_down, r_up)`` directly and bypasses the formula.
    """

    C: float = 0.0
    delta_down: float = 0.0
    delta_up: float = 0.0
    delta_c: float = 0.0
    override: tuple[complex, complex] | None = None

    def __post_init__(self):
        if self.C < 0:
            raise ValueError(f"cooperativity must be non-negative, got {self.C}")
        for name in ("C", "delta_down", "delta_up", "delta_c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def ideal(cls) -> CavityParams:
        return cls(override=(1.0, -1.0))

    @classmethod
    def symmetric(cls, r: float) -> CavityParams:
        """``r_down = r`` and ``r_up = -r``."""
        return cls(override=(complex(r), complex(-r)))

    def reflections(self) -> tuple[complex, complex]:
        if self.override is not None:
            return complex(self.override[0]), complex(self.override[1])
        return reflection_coefficient(self, DOWN), reflection_coefficient(self, UP)


@dataclass(frozen=True)
class PhysicalParams:
    """Rates and frequencies in consistent angular units.

    ``omega_up`` is the up-spin transition, ``omega_down + Zeeman splitting``.
    """

    g: float
    kappa: float
    gamma: float
    omega: float = 0.0
    omega_c: float = 0.0
    omega_down: float = 0.0
    omega_up: float = 0.0

    def __post_init__(self):
        if not self.g >= 0:
            raise ValueError(f"g must be non-negative, got {self.g}")
        for name in ("kappa", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def to_cavity_params(self) -> CavityParams:
        d_down, d_up, d_c = detunings(self)
        return CavityParams(C=cooperativity(self), delta_down=d_down, delta_up=d_up, delta_c=d_c)


def _spin_detuning(p: CavityParams, spin: str) -> float:
    if spin == DOWN:
        return p.delta_down
    if spin == UP:
        return p.delta_up
    raise ValueError(f"spin must be 'down' or 'up', got {spin!r}")


def reflection_coefficient(p: CavityParams, spin: str) -> complex:
    """Closed-form reflection ``1 - 2(1 + i D_d) / (C + (1 + i D_d)(1 + i D_c))``."""
    if p.override is not None:
        raise ValueError("parameters carry an explicit (r_down, r_up) override")
    d = 1 + 1j * _spin_detuning(p, spin)
    denom = p.C + d * (1 + 1j * p.delta_c)
    if abs(denom) < SINGULAR_TOL:
        raise SingularParametersError(f"reflection denominator vanishes for {p}")
    return 1 - 2 * d / denom


def cooperativity(p: PhysicalParams) -> float:
    return 4 * p.g**2 / (p.kappa * p.gamma)


def detunings(p: PhysicalParams) -> tuple[float, float, float]:
    """Dimensionless ``(D_down, D_up, D_c)``."""
    return (
        2 * (p.omega_down - p.omega) / p.gamma,
        2 * (p.omega_up - p.omega) / p.gamma,
        2 * (p.omega_c - p.omega) / p.kappa,
    )


def reflection_steady_state_oracle(p: PhysicalParams, spin: str, a_in: complex = 1.0) -> complex:
    """Reflection from the steady state of the Langevin equations.

    Unknowns ``x = (<a>, <sigma_->)``; with ``sigma_z = -1`` both time
    derivatives vanish when::

        -(i(w_c - w) + kappa/2) a - g s = sqrt(kappa) a_in
        g a - (i(w_d - w) + gamma/2) s = 0
    """
    if spin == DOWN:
        w_d = p.omega_down
    elif spin == UP:
        w_d = p.omega_up
    else:
        raise ValueError(f"spin must be 'down' or 'up', got {spin!r}")
    m = np.array(
        [
            [-(1j * (p.omega_c - p.omega) + p.kappa / 2), -p.g],
            [p.g, -(1j * (w_d - p.omega) + p.gamma / 2)],
        ],
        dtype=complex,
    )
    rhs = np.array([math.sqrt(p.kappa) * a_in, 0.0], dtype=complex)
    if abs(np.linalg.det(m)) < SINGULAR_TOL * max(1.0, np.max(np.abs(m)) ** 2):
        raise SingularParametersError(f"steady-state system is singular for {p}")
    a, _ = np.linalg.solve(m, rhs)
    return complex(1 + math.sqrt(p.kappa) * a / a_in)
