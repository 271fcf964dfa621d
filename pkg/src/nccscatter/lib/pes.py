"""LEPS potential energy surface and the NCC channel potentials.

The surface is the standard Sato-LEPS form built from one Morse/anti-Morse
pair per bond. Parameters are held in internal units; file parsing lives
in :mod:`nccscatter.lib.config`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from nccscatter.lib import reaction_path as rp
from nccscatter.lib.errors import ConvergenceError, DomainError, RegionError
from nccscatter.lib.units import MassSystem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairParameters:
    """Morse parameters of one bond plus its Sato parameter."""

    De: float
    beta: float
    re: float
    sato: float = 0.0

    def __post_init__(self):
        if not self.De > 0.0:
            raise DomainError(f"De must be positive, got {self.De!r}")
        if not self.beta > 0.0:
            raise DomainError(f"beta must be positive, got {self.beta!r}")
        if not self.re > 0.0:
            raise DomainError(f"re must be positive, got {self.re!r}")
        if not self.sato > -1.0:
            raise DomainError(f"sato parameter must exceed -1, got {self.sato!r}")

    def morse(self, r):
        x = np.exp(-self.beta * (np.asarray(r, dtype=float) - self.re))
        return self.De * (x * x - 2.0 * x)

    def coulomb_exchange(self, r):
        """Coulomb (Q) and exchange (J) integrals at bond length r."""
        x = np.exp(-self.beta * (np.asarray(r, dtype=float) - self.re))
        pref = self.De / (4.0 * (1.0 + self.sato))
        d = self.sato
        Q = pref * ((3.0 + d) * x * x - (2.0 + 6.0 * d) * x)
        J = pref * ((1.0 + 3.0 * d) * x * x - (6.0 + 2.0 * d) * x)
        return Q, J


@dataclass(frozen=True)
class LepsParameters:
    bc: PairParameters
    ab: PairParameters
    ac: PairParameters

    def pairs(self) -> dict[str, PairParameters]:
        return {"BC": self.bc, "AB": self.ab, "AC": self.ac}


@dataclass(frozen=True)
class InternalGeometry:
    """Physical bond lengths (bohr)."""

    r_bc: float
    r_ab: float
    r_ac: float

    def __post_init__(self):
        if min(self.r_bc, self.r_ab, self.r_ac) < 0.0:
            raise DomainError(f"bond lengths must be non-negative: {self}")
        longest = max(self.r_bc, self.r_ab, self.r_ac)
        if longest > (self.r_bc + self.r_ab + self.r_ac - longest) * (1.0 + 1e-9) + 1e-9:
            raise DomainError(f"bond lengths violate the triangle inequality: {self}")


def leps_energy(p: LepsParameters, g: InternalGeometry | tuple):
    """Sato-LEPS energy for bond lengths (r_bc, r_ab, r_ac).

    ``g`` may also be a tuple of equally shaped arrays for vectorised use.
    """
    if isinstance(g, InternalGeometry):
        r_bc, r_ab, r_ac = g.r_bc, g.r_ab, g.r_ac
    else:
        r_bc, r_ab, r_ac = g
    Q1, J1 = p.bc.coulomb_exchange(r_bc)
    Q2, J2 = p.ab.coulomb_exchange(r_ab)
    Q3, J3 = p.ac.coulomb_exchange(r_ac)
    exchange = np.sqrt(0.5 * ((J1 - J2) ** 2 + (J2 - J3) ** 2 + (J3 - J1) ** 2))
    return Q1 + Q2 + Q3 - exchange


def bond_lengths(ms: MassSystem, q0, q1, theta):
    """Physical (r_bc, r_ab, r_ac) from mass-scaled coordinates."""
    r_bc = ms.lam * np.asarray(q1, dtype=float)
    r_ab = rp.ab_distance(ms, q0, q1, theta) / ms.lam
    r_ac = rp.ac_distance(ms, q0, q1, theta) / ms.lam
    return r_bc, r_ab, r_ac


def potential_internal(ms: MassSystem, p: LepsParameters, q0, q1, theta):
    """LEPS energy at mass-scaled (q0, q1, theta)."""
    return leps_energy(p, bond_lengths(ms, q0, q1, theta))


class Surface(Protocol):
    """What the dynamics and channel solvers need from a potential."""

    mass_system: MassSystem

    def energy(self, q0, q1, theta): ...

    @property
    def well_depth(self) -> float: ...


class LepsSurface:
    """LEPS surface bound to a mass system."""

    def __init__(self, ms: MassSystem, params: LepsParameters):
        self.mass_system = ms
        self.params = params

    def energy(self, q0, q1, theta):
        return potential_internal(self.mass_system, self.params, q0, q1, theta)

    @property
    def well_depth(self) -> float:
        return max(pp.De for pp in self.params.pairs().values())

    def channel_potential(self, side: str, q0, q1):
        """Separated-diatom potential of the reactant (BC) or product (AB) valley, collinear."""
        r_bc, r_ab, _ = bond_lengths(self.mass_system, q0, q1, 0.0)
        if side == "reactant":
            return self.params.bc.morse(r_bc)
        if side == "product":
            return self.params.ab.morse(r_ab)
        raise DomainError(f"side must be 'reactant' or 'product', got {side!r}")

    def __repr__(self) -> str:
        return f"LepsSurface(mu={self.mass_system.mu:.6g}, params={self.params!r})"


def collinear_potential(surface: Surface, spec: rp.ReactionPathSpec, u, v):
    """U(u, v, theta = 0)."""
    q0, q1 = rp.ncc_to_scaled(spec, u, v)
    return surface.energy(q0, q1, 0.0)


def effective_potential(
    eta_fn: Callable,
    deta_dv_fn: Callable,
    u,
    v,
    h_u: float = 1e-4,
):
    """Geometric effective-potential bracket for a metric factor eta(u, v).

    (1/4 eta^2)(d eta/dv)^2 - (1/2 eta^3) d2eta/du2 + (5/4 eta^4)(d eta/du)^2,
    with the u-derivatives taken by central differences of step ``h_u``.
    """
    e0 = np.asarray(eta_fn(u, v), dtype=float)
    if np.any(e0 <= 0.0):
        raise RegionError(f"metric factor eta must be positive, got min {np.min(e0)!r}")
    ep = np.asarray(eta_fn(np.asarray(u) + h_u, v), dtype=float)
    em = np.asarray(eta_fn(np.asarray(u) - h_u, v), dtype=float)
    eta_u = (ep - em) / (2.0 * h_u)
    eta_uu = (ep - 2.0 * e0 + em) / (h_u * h_u)
    eta_v = np.asarray(deta_dv_fn(u, v), dtype=float)
    return eta_v ** 2 / (4.0 * e0 ** 2) - eta_uu / (2.0 * e0 ** 3) + 5.0 * eta_u ** 2 / (4.0 * e0 ** 4)


def u_eff(spec: rp.ReactionPathSpec, u, v, mu: float | None = None, h_u: float = 1e-4, hbar: float = 1.0):
    """Effective potential of the curved NCC frame.

    Without ``mu`` the geometric bracket (1/length^2) is returned; with
    ``mu`` it is scaled by hbar^2 / (2 mu) into an energy.
    """

    def eta_fn(uu, vv):
        return rp.eta(spec, uu, vv)

    def deta_dv(uu, vv):
        K, ds_du, _ = rp.curvature_data(spec, uu)
        return np.broadcast_to(K * ds_du, np.broadcast(np.asarray(uu), np.asarray(vv)).shape)

    bracket = effective_potential(eta_fn, deta_dv, u, v, h_u=h_u)
    if mu is None:
        return bracket
    return hbar * hbar / (2.0 * mu) * bracket


def u_bar(surface: Surface, spec: rp.ReactionPathSpec, u, v, h_u: float = 1e-4, hbar: float = 1.0):
    """Transverse channel potential U(theta=0) - U_eff (energy units)."""
    U = collinear_potential(surface, spec, u, v)
    return U - u_eff(spec, u, v, mu=surface.mass_system.mu, h_u=h_u, hbar=hbar)


def barrier_top(surface: Surface, spec: rp.ReactionPathSpec, half_width: float = 60.0, points: int = 4801) -> float:
    """u of the highest potential along the curve (v = 0)."""
    grid = np.linspace(spec.u0 - half_width, spec.u0 + half_width, points)
    U = collinear_potential(surface, spec, grid, 0.0)
    return float(grid[int(np.argmax(U))])


def asymptotic_limits(
    surface: LepsSurface,
    spec: rp.ReactionPathSpec,
    tol: float = 1e-6,
    v_band: tuple[float, ...] = (-0.3, 0.0, 0.3),
    step: float = 0.05,
    extent: float = 400.0,
) -> tuple[float, float]:
    """u-values beyond which the channel coupling is below ``tol`` x well depth.

    The coupling at u is the largest deviation of the surface from the
    separated-diatom potential of the nearer valley over ``v_band``, with
    samples past the stretch floor dropped. Each side is walked outward from
    the barrier top in geometrically growing steps; the limit is the first
    of four consecutive steps below the threshold.

    Returns:
        (u_nonreact, u_react) on the reactant and product sides.

    Raises:
        ConvergenceError: If the coupling does not fall off within ``extent``.
    """
    threshold = tol * surface.well_depth
    u_top = barrier_top(surface, spec)
    v_band_arr = np.asarray(v_band, dtype=float)

    def coupling(u: float, side: str) -> float:
        vs = v_band_arr[rp.admissible_v(spec, u, v_band_arr)]
        q0, q1 = rp.ncc_to_scaled(spec, np.full_like(vs, u), vs)
        return float(np.max(np.abs(surface.energy(q0, q1, 0.0) - surface.channel_potential(side, q0, q1))))

    limits = []
    for side, direction in (("reactant", -1.0), ("product", 1.0)):
        found = None
        # geometric step growth
        u = u_top
        h = step
        quiet = 0
        while abs(u - u_top) < extent:
            u += direction * h
            h *= 1.01
            if coupling(u, side) < threshold:
                quiet += 1
                if found is None:
                    found = u
                if quiet >= 4:
                    break
            else:
                quiet = 0
                found = None
        if found is None or quiet < 4:
            raise ConvergenceError(f"{side} coupling does not fall below {threshold:.3g} within |u - u_top| < {extent}")
        limits.append(found)
    logger.info(f"asymptotic limits: u_nonreact={limits[0]:.4f} u_react={limits[1]:.4f} (barrier top at u={u_top:.4f})")
    return limits[0], limits[1]


__all__ = [
    "PairParameters",
    "LepsParameters",
    "InternalGeometry",
    "LepsSurface",
    "Surface",
    "leps_energy",
    "bond_lengths",
    "potential_internal",
    "collinear_potential",
    "effective_potential",
    "u_eff",
    "u_bar",
    "barrier_top",
    "asymptotic_limits",
]

