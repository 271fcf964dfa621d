"""Physical constants, unit conversion and mass-scaled Jacobi coordinates.

Internally everything is in atomic units (hbar = 1, bohr, hartree,
electron masses). Conversion happens only at the I/O boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nccscatter.lib.errors import DomainError


@dataclass(frozen=True)
class UnitSystem:
    """Conversion factors from physical units to internal (atomic) units."""

    mass: float = 1822.888486  # amu -> electron masses
    length: float = 1.8897259886  # angstrom -> bohr
    energy: float = 0.036749322  # eV -> hartree
    hbar: float = 1.0

    def amu(self, value):
        return value * self.mass

    def angstrom(self, value):
        return value * self.length

    def ev(self, value):
        return value * self.energy

    def to_angstrom(self, value):
        return value / self.length

    def to_ev(self, value):
        return value / self.energy


UNITS = UnitSystem()


@dataclass(frozen=True)
class MassSystem:
    """Masses of A + BC and the derived mass-scaling constants.

    ``b`` is the skew parameter cot(theta_skew); ``lam`` is the scaling
    factor between Jacobi and mass-scaled coordinates.
    """

    m_A: float
    m_B: float
    m_C: float
    M: float
    mu: float
    lam: float
    b: float
    theta_skew: float

    @property
    def b_ac(self) -> float:
        """Mass-scaled weight of q1 in the A-C distance."""
        return math.sqrt(self.m_A * self.m_B / (self.m_C * self.M))

    @classmethod
    def from_amu(cls, m_A: float, m_B: float, m_C: float, units: UnitSystem = UNITS) -> "MassSystem":
        return build_mass_system(units.amu(m_A), units.amu(m_B), units.amu(m_C))


def build_mass_system(m_A: float, m_B: float, m_C: float) -> MassSystem:
    """Build the mass system for A + BC.

    Args:
        m_A: Mass of the incoming atom A.
        m_B: Mass of B (bonded to C in the reactant).
        m_C: Mass of the leaving atom C.

    Returns:
        MassSystem with mu, lambda, b and the skew angle filled in.

    Raises:
        DomainError: If a mass is non-positive or not finite.

    Examples:
        >>> ms = build_mass_system(1.0, 1.0, 1.0)
        >>> round(math.degrees(ms.theta_skew), 6)
        60.0
    """
    for name, m in (("m_A", m_A), ("m_B", m_B), ("m_C", m_C)):
        if not math.isfinite(m) or m <= 0.0:
            raise DomainError(f"{name} must be positive and finite, got {m!r}")
    M = m_A + m_B + m_C
    mu = math.sqrt(m_A * m_B * m_C / M)
    lam = math.sqrt(m_A * (1.0 - m_A / M) / mu)
    b = math.sqrt(m_A * m_C / (m_B * M))
    # arccot on (0, inf) maps into (0, pi/2)
    theta_skew = math.atan2(1.0, b)
    return MassSystem(m_A=m_A, m_B=m_B, m_C=m_C, M=M, mu=mu, lam=lam, b=b, theta_skew=theta_skew)


def _check_finite(name: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise DomainError(f"{name} contains non-finite components: {value!r}")


def jacobi_to_scaled(ms: MassSystem, R, r) -> tuple[np.ndarray, np.ndarray]:
    """Map Jacobi vectors (R, r) to mass-scaled (q0, q1) = (lambda R, r / lambda)."""
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    _check_finite("R", R)
    _check_finite("r", r)
    return ms.lam * R, r / ms.lam


def scaled_to_jacobi(ms: MassSystem, q0, q1) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`jacobi_to_scaled`."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    _check_finite("q0", q0)
    _check_finite("q1", q1)
    return q0 / ms.lam, q1 * ms.lam
