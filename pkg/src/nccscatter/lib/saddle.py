"""Collinear saddle-point search on a potential surface."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import root

from nccscatter.lib.errors import NoSaddleError
from nccscatter.lib.pes import LepsSurface

logger = logging.getLogger(__name__)

DEFAULT_SCAN_POINTS = 60
DEFAULT_SCAN_RANGE = (0.8, 2.5)
GRADIENT_STEP = 1e-5
HESSIAN_STEP = 1e-4


@dataclass(frozen=True)
class Saddle:
    """Stationary point of saddle signature in the collinear plane."""

    q0: float
    q1: float
    r_ab: float
    r_bc: float
    energy: float
    gradient_norm: float
    hessian_eigenvalues: tuple[float, float]


def collinear_gradient(surface: LepsSurface, q0: float, q1: float, h: float = GRADIENT_STEP) -> np.ndarray:
    """Central-difference gradient of V(q0, q1, 0)."""
    q0s = np.array([q0 + h, q0 - h, q0, q0])
    q1s = np.array([q1, q1, q1 + h, q1 - h])
    V = surface.energy(q0s, q1s, 0.0)
    return np.array([(V[0] - V[1]) / (2.0 * h), (V[2] - V[3]) / (2.0 * h)])


def collinear_hessian(surface: LepsSurface, q0: float, q1: float, h: float = HESSIAN_STEP) -> np.ndarray:
    g0p = collinear_gradient(surface, q0 + h, q1)
    g0m = collinear_gradient(surface, q0 - h, q1)
    g1p = collinear_gradient(surface, q0, q1 + h)
    g1m = collinear_gradient(surface, q0, q1 - h)
    H = np.column_stack([(g0p - g0m) / (2.0 * h), (g1p - g1m) / (2.0 * h)])
    return 0.5 * (H + H.T)


def _newton_polish(surface: LepsSurface, q0: float, q1: float, steps: int = 4) -> tuple[float, float]:
    x = np.array([q0, q1])
    for _ in range(steps):
        g = collinear_gradient(surface, x[0], x[1])
        try:
            dx = np.linalg.solve(collinear_hessian(surface, x[0], x[1]), g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dx)) or np.linalg.norm(dx) > 0.1:
            break
        x = x - dx
    return float(x[0]), float(x[1])


def scan_table(surface: LepsSurface, points: int = DEFAULT_SCAN_POINTS, scale=DEFAULT_SCAN_RANGE):
    """Tabulate V and |grad V| on a (r_BC, r_AB) grid around the equilibria.

    Returns:
        (q0, q1, V, grad_norm) as 2-D arrays indexed [i_bc, i_ab].
    """
    ms = surface.mass_system
    p = surface.params
    r_bc = np.linspace(scale[0] * p.bc.re, scale[1] * p.bc.re, points)
    r_ab = np.linspace(scale[0] * p.ab.re, scale[1] * p.ab.re, points)
    RBC, RAB = np.meshgrid(r_bc, r_ab, indexing="ij")
    q1 = RBC / ms.lam
    q0 = ms.lam * RAB + ms.b * q1
    h = GRADIENT_STEP
    d0 = (surface.energy(q0 + h, q1, 0.0) - surface.energy(q0 - h, q1, 0.0)) / (2.0 * h)
    d1 = (surface.energy(q0, q1 + h, 0.0) - surface.energy(q0, q1 - h, 0.0)) / (2.0 * h)
    V = surface.energy(q0, q1, 0.0)
    return q0, q1, V, np.hypot(d0, d1)


def find_saddle(
    surface: LepsSurface,
    points: int = DEFAULT_SCAN_POINTS,
    max_seeds: int = 12,
    gtol: float = 1e-8,
) -> Saddle:
    """Locate the collinear saddle between the reactant and product valleys.

    Interior grid minima of |grad V| seed a root search on the gradient,
    followed by a few Newton steps. A candidate is accepted on its own
    gradient norm and Hessian signature, whatever the root finder reports.

    Raises:
        NoSaddleError: If no seed converges to a saddle. The error carries
            the scan rows (q0, q1, V, |grad V|).
    """
    q0, q1, V, gnorm = scan_table(surface, points)
    interior = gnorm[1:-1, 1:-1]
    local_min = np.ones_like(interior, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            local_min &= interior <= gnorm[1 + di : points - 1 + di, 1 + dj : points - 1 + dj]
    idx = np.argwhere(local_min) + 1
    idx = sorted((tuple(i) for i in idx), key=lambda ij: gnorm[ij])[:max_seeds]
    logger.debug(f"saddle search: {len(idx)} seeds from a {points}x{points} scan")

    ms = surface.mass_system
    for ij in idx:
        x0 = np.array([q0[ij], q1[ij]])
        sol = root(lambda x: collinear_gradient(surface, x[0], x[1]), x0, method="hybr")
        if not sol.success:
            logger.debug(f"seed {x0}: {sol.message}")
        s0, s1 = _newton_polish(surface, float(sol.x[0]), float(sol.x[1]))
        grad = float(np.linalg.norm(collinear_gradient(surface, s0, s1)))
        eig = np.linalg.eigvalsh(collinear_hessian(surface, s0, s1))
        if not np.isfinite(grad) or grad >= gtol or not (eig[0] < 0.0 < eig[1]):
            logger.debug(f"seed {x0} rejected: grad={grad:.3e} hessian={eig}")
            continue
        r_bc = ms.lam * s1
        r_ab = (s0 - ms.b * s1) / ms.lam
        saddle = Saddle(
            q0=s0,
            q1=s1,
            r_ab=float(r_ab),
            r_bc=float(r_bc),
            energy=float(surface.energy(s0, s1, 0.0)),
            gradient_norm=grad,
            hessian_eigenvalues=(float(eig[0]), float(eig[1])),
        )
        logger.info(f"saddle at r_AB={saddle.r_ab:.6f} r_BC={saddle.r_bc:.6f} bohr, V={saddle.energy:.8f} Eh")
        return saddle

    scan = np.column_stack([q0.ravel(), q1.ravel(), V.ravel(), gnorm.ravel()])
    raise NoSaddleError(f"no saddle found from {len(idx)} seeds on a {points}x{points} scan", scan=scan)


def path_constant_from_saddle(surface: LepsSurface, saddle: Saddle) -> float:
    """Curve constant a that puts the saddle on the reaction curve.

    On the curve q0c - b q1c - q_eq_plus = a / (q1c - q_eq_minus); in bond
    lengths this is lambda (r_AB - re_AB) times (r_BC - re_BC) / lambda.
    """
    p = surface.params
    a = (saddle.r_ab - p.ab.re) * (saddle.r_bc - p.bc.re)
    if a <= 0.0:
        raise NoSaddleError(
            f"saddle at r_AB={saddle.r_ab:.6f}, r_BC={saddle.r_bc:.6f} is not stretched in both bonds; set path.a explicitly"
        )
    return float(a)
