"""Reaction-coordinate curve and natural collision coordinates (NCC).

The curve joins the reactant valley (q1 -> q_eq_minus, q0 -> inf) to the
product valley (q0 ~ b q1 + q_eq_plus) in the mass-scaled (q0, q1) plane:

    q0c = a / (q1c - q_eq_minus) + b q1c + q_eq_plus

Points are written as (q0, q1) = (q0c - v sin phi, q1c + v cos phi) where u
runs along the curve and v is the signed distance from it. Everything here
is pure and vectorises over numpy arrays unless stated otherwise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from nccscatter.lib.errors import ConvergenceError, DomainError, RegionError
from nccscatter.lib.units import MassSystem

logger = logging.getLogger(__name__)

# smallest 1 + K v kept on a transverse grid
MIN_STRETCH = 0.1


@dataclass(frozen=True)
class ReactionPathSpec:
    """Parameters of the reaction curve, all in mass-scaled atomic units."""

    a: float
    b: float
    q_eq_minus: float
    q_eq_plus: float
    u0: float = 0.0

    def __post_init__(self):
        if not (self.a > 0.0 and math.isfinite(self.a)):
            raise DomainError(f"path constant a must be positive, got {self.a!r}")
        if not self.b > 0.0:
            raise DomainError(f"skew parameter b must be positive, got {self.b!r}")
        if self.q_eq_minus < 0.0 or self.q_eq_plus < 0.0:
            raise DomainError(
                f"equilibrium lengths must be non-negative, got q_eq_minus={self.q_eq_minus!r}, q_eq_plus={self.q_eq_plus!r}"
            )

    @classmethod
    def from_bond_lengths(cls, ms: MassSystem, a: float, r_eq_bc: float, r_eq_ab: float, u0: float = 0.0) -> "ReactionPathSpec":
        """Build a spec from physical equilibrium bond lengths (bohr)."""
        return cls(a=a, b=ms.b, q_eq_minus=r_eq_bc / ms.lam, q_eq_plus=ms.lam * r_eq_ab, u0=u0)


@dataclass(frozen=True)
class NccPoint:
    u: float
    v: float
    theta: float = 0.0


def _qbar_of_q1c(spec: ReactionPathSpec, q1c):
    qbar = np.asarray(q1c, dtype=float) - spec.q_eq_minus
    if np.any(qbar <= 0.0):
        raise DomainError(f"q1c must exceed q_eq_minus={spec.q_eq_minus!r}, got {q1c!r}")
    return qbar


def _qbar_of_u(spec: ReactionPathSpec, u):
    w = np.asarray(u, dtype=float) - spec.u0
    disc = np.sqrt(w * w + 4.0 * spec.a * spec.b)
    # two algebraically equal forms; pick the one free of cancellation
    return np.where(w >= 0.0, (w + disc) / (2.0 * spec.b), 2.0 * spec.a / (disc - w))


def path_point(spec: ReactionPathSpec, q1c):
    """q0 on the curve for a given q1c (> q_eq_minus)."""
    qbar = _qbar_of_q1c(spec, q1c)
    return spec.a / qbar + spec.b * np.asarray(q1c, dtype=float) + spec.q_eq_plus


def u_of(spec: ReactionPathSpec, q1c):
    """Reaction coordinate u of the curve point with abscissa q1c."""
    qbar = _qbar_of_q1c(spec, q1c)
    return spec.u0 - spec.a / qbar + spec.b * qbar


def q1c_of_u(spec: ReactionPathSpec, u):
    """Closed-form inverse of :func:`u_of`."""
    return spec.q_eq_minus + _qbar_of_u(spec, u)


def phi_of_u(spec: ReactionPathSpec, u):
    """Orthogonality angle phi(u) in (0, pi), with cot phi = b - a / qbar**2.

    atan2 with a positive first argument is continuous on (0, pi), so no
    unwrapping is needed between samples.
    """
    qbar = _qbar_of_u(spec, u)
    return np.arctan2(1.0, spec.b - spec.a / (qbar * qbar))


def curve_point(spec: ReactionPathSpec, u):
    """(q0c, q1c) of the curve at u."""
    qbar = _qbar_of_u(spec, u)
    q1c = spec.q_eq_minus + qbar
    return spec.a / qbar + spec.b * q1c + spec.q_eq_plus, q1c


def ncc_to_scaled(spec: ReactionPathSpec, u, v):
    """Map NCC (u, v) to mass-scaled (q0, q1)."""
    q0c, q1c = curve_point(spec, u)
    phi = phi_of_u(spec, u)
    v = np.asarray(v, dtype=float)
    return q0c - v * np.sin(phi), q1c + v * np.cos(phi)


def curvature_data(spec: ReactionPathSpec, u):
    """Curvature K, arclength factor ds/du and F at u."""
    qbar = _qbar_of_u(spec, u)
    slope = spec.b - spec.a / (qbar * qbar)
    F = 1.0 + slope * slope
    K = 2.0 * spec.a * F ** -1.5 / qbar ** 3
    ds_du = np.sqrt(F) / (spec.b + spec.a / (qbar * qbar))
    return K, ds_du, F


def eta(spec: ReactionPathSpec, u, v):
    """Metric factor (1 + K v) ds/du.

    Raises:
        RegionError: If 1 + K v <= 0 (self-crossing region).
    """
    K, ds_du, _ = curvature_data(spec, u)
    stretch = 1.0 + K * np.asarray(v, dtype=float)
    if np.any(stretch < 0.0):
        raise RegionError(f"point inside the self-crossing region: 1 + K v = {np.min(stretch)!r}")
    return stretch * ds_du


def admissible_v(spec: ReactionPathSpec, u: float, v, min_stretch: float = MIN_STRETCH) -> np.ndarray:
    """Mask of the v samples with 1 + K(u) v above ``min_stretch`` at one u.

    K > 0, so the mask is a suffix of any increasing v grid.
    """
    K, _, _ = curvature_data(spec, float(u))
    return 1.0 + float(K) * np.asarray(v, dtype=float) > min_stretch


def ab_distance(ms: MassSystem, q0, q1, theta):
    """Mass-scaled A-B distance f(q0, q1, theta); theta = 0 is collinear A-B-C."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    bq1 = ms.b * q1
    return np.sqrt(np.maximum(q0 * q0 - 2.0 * q0 * bq1 * np.cos(theta) + bq1 * bq1, 0.0))


def ac_distance(ms: MassSystem, q0, q1, theta):
    """Mass-scaled A-C distance; equals f(AB) + lambda**2 q1 at theta = 0."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    cq1 = ms.b_ac * q1
    return np.sqrt(np.maximum(q0 * q0 + 2.0 * q0 * cq1 * np.cos(theta) + cq1 * cq1, 0.0))


def tangent_and_normal(spec: ReactionPathSpec, u):
    """Unit tangent t and normal n of the curve at u, as (q0, q1) pairs."""
    phi = phi_of_u(spec, u)
    c, s = np.cos(phi), np.sin(phi)
    return (c, s), (-s, c)


def _foot_residual(spec: ReactionPathSpec, q0: float, q1: float, u: float) -> float:
    q0c, q1c = curve_point(spec, u)
    (t0, t1), _ = tangent_and_normal(spec, u)
    return float((q0 - q0c) * t0 + (q1 - q1c) * t1)


def _scan_window(spec: ReactionPathSpec, q0: float, q1: float) -> float:
    return 4.0 * (abs(q0) + abs(q1)) + abs(spec.u0) + 10.0


def scaled_to_ncc(
    spec: ReactionPathSpec,
    q0: float,
    q1: float,
    u_guess: Optional[float] = None,
    scan_points: int = 4001,
    xtol: float = 1e-12,
) -> tuple[float, float]:
    """Project (q0, q1) onto the curve and return (u, v).

    The foot point solves (q - qc(u)) . t(u) = 0. A bracket around
    ``u_guess`` is tried first; otherwise roots are bracketed on a coarse
    u-scan and refined with Brent's method. Among the roots with
    1 + K v > 0 the one closest to the point wins.

    Raises:
        RegionError: If no admissible foot point exists, or two lie at the
            same distance.
        ConvergenceError: If Brent's method does not converge.
    """
    q0 = float(q0)
    q1 = float(q1)
    if u_guess is not None:
        local = _local_foot(spec, q0, q1, float(u_guess), xtol)
        if local is not None:
            return local

    half = _scan_window(spec, q0, q1)
    grid = np.linspace(spec.u0 - half, spec.u0 + half, scan_points)
    q0c, q1c = curve_point(spec, grid)
    (t0, t1), _ = tangent_and_normal(spec, grid)
    g = (q0 - q0c) * t0 + (q1 - q1c) * t1

    candidates: list[tuple[float, float]] = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0.0)[0]:
        lo, hi = float(grid[i]), float(grid[i + 1])
        if g[i] == 0.0:
            u = lo
        else:
            try:
                u = brentq(lambda x: _foot_residual(spec, q0, q1, x), lo, hi, xtol=xtol, maxiter=200)
            except (RuntimeError, ValueError) as exc:
                raise ConvergenceError(f"foot-point search failed on [{lo}, {hi}]: {exc}") from exc
        v = _normal_offset(spec, q0, q1, u)
        K, _, _ = curvature_data(spec, u)
        if 1.0 + float(K) * v > 0.0:
            candidates.append((u, v))

    if not candidates:
        raise RegionError(f"no admissible foot point for (q0, q1) = ({q0}, {q1})")
    candidates.sort(key=lambda c: abs(c[1]))
    if len(candidates) > 1 and abs(abs(candidates[1][1]) - abs(candidates[0][1])) < 1e-9 and abs(candidates[1][0] - candidates[0][0]) > 1e-6:
        raise RegionError(f"foot point of ({q0}, {q1}) is not unique")
    return candidates[0]


def _normal_offset(spec: ReactionPathSpec, q0: float, q1: float, u: float) -> float:
    q0c, q1c = curve_point(spec, u)
    _, (n0, n1) = tangent_and_normal(spec, u)
    return float((q0 - q0c) * n0 + (q1 - q1c) * n1)


def _local_foot(spec: ReactionPathSpec, q0: float, q1: float, u_guess: float, xtol: float) -> Optional[tuple[float, float]]:
    step = 0.05 + 0.01 * abs(u_guess)
    g0 = _foot_residual(spec, q0, q1, u_guess)
    for _ in range(12):
        lo, hi = u_guess - step, u_guess + step
        glo = _foot_residual(spec, q0, q1, lo)
        ghi = _foot_residual(spec, q0, q1, hi)
        if glo * ghi <= 0.0:
            break
        step *= 2.0
    else:
        return None
    if g0 == 0.0:
        u = u_guess
    else:
        try:
            u = brentq(lambda x: _foot_residual(spec, q0, q1, x), lo, hi, xtol=xtol, maxiter=200)
        except (RuntimeError, ValueError):
            return None
    v = _normal_offset(spec, q0, q1, u)
    K, _, _ = curvature_data(spec, u)
    if 1.0 + float(K) * v <= 0.0:
        return None
    return u, v
