"""Vibrational channel basis and the matrix elements built on it.

The transverse problem at fixed u is

    [-hbar^2/(2 mu) d^2/dv^2 + Ubar(u, v) + hbar^2 j (j + 1) / (2 mu v^2)] Xi = eps Xi

solved by second-order finite differences on a uniform v grid with
Dirichlet ends. Where the curve bends, a smooth confining wall is added in
front of the self-crossing region and each u slice keeps only the v samples
with 1 + K v above the stretch floor. Channel functions are normalised so
that sum(Xi^2) dv = 1 and are zero outside the kept samples.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import eigh_tridiagonal
from scipy.special import lpmv

from nccscatter.lib import reaction_path as rp
from nccscatter.lib.errors import (
    BasisDeficiencyError,
    DomainError,
    GridRangeError,
    QuadratureOrderError,
)
from nccscatter.lib.pes import Surface, u_bar
from nccscatter.lib.units import MassSystem

logger = logging.getLogger(__name__)

# 1 + K v where the confining wall starts, and its height (hartree) at the stretch floor
WALL_ONSET = 0.3
WALL_HEIGHT = 1.0


@dataclass(frozen=True)
class ChannelBasis:
    """Eigenpairs of the transverse problem on every u sample.

    ``energies`` has shape (nu, N), ``functions`` (nu, N, nv) and ``ubar``
    (nu, nv); ``ubar`` is the potential each slice was solved with (U_bar plus
    the confining wall), NaN where a slice drops the sample. ``phase_fixed`` is set
    once sign continuity along u has been imposed.
    """

    u_grid: np.ndarray
    v_grid: np.ndarray
    j: int
    energies: np.ndarray
    functions: np.ndarray
    ubar: np.ndarray
    phase_fixed: bool = False

    @property
    def channels(self) -> int:
        return self.energies.shape[1]

    @property
    def dv(self) -> float:
        return float(self.v_grid[1] - self.v_grid[0])

    def overlap(self, k: int) -> np.ndarray:
        """<Xi_n | Xi_m> at u index k."""
        X = self.functions[k]
        return X @ X.T * self.dv


def transverse_eigenstates(
    V,
    v,
    mu: float,
    N: int,
    j: int = 0,
    richardson: bool = True,
    hbar: float = 1.0,
    lower_wall: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest N eigenpairs of the transverse operator for potential values V(v).

    With ``richardson`` the eigenvalues are extrapolated from this grid and
    its every-other-point subgrid; eigenvectors always come from the full
    grid. ``lower_wall`` marks the first sample as the neighbour of a hard
    wall: only the upper edge then bounds the states, and the subgrid keeps
    the wall in place.

    Raises:
        BasisDeficiencyError: If the grid resolves fewer than N states below
            the potential at the grid edges.
    """
    v = np.asarray(v, dtype=float)
    V = np.asarray(V, dtype=float)
    nv = v.size
    if N < 1:
        raise DomainError(f"channel count must be positive, got {N}")
    if N > nv // 4:
        raise BasisDeficiencyError(f"{N} channels need at least {4 * N} v points, got {nv}")
    if j > 0:
        if np.any(v <= 0.0):
            raise DomainError(f"j = {j} needs a strictly positive v grid")
        V = V + hbar * hbar * j * (j + 1) / (2.0 * mu * v * v)
    h = float(v[1] - v[0])

    eps, vecs = _tridiagonal_levels(V, h, mu, N, hbar)
    edge = V[-1] if lower_wall else min(V[0], V[-1])
    if eps[-1] >= edge:
        raise BasisDeficiencyError(
            f"only {int(np.count_nonzero(eps < edge))} of {N} states lie below the grid-edge potential {edge:.6g}; widen the v grid"
        )
    if richardson and nv >= 8 * N:
        coarse, _ = _tridiagonal_levels(V[1::2] if lower_wall else V[::2], 2.0 * h, mu, N, hbar)
        eps = (4.0 * eps - coarse) / 3.0
    return eps, vecs / math.sqrt(h)


def confining_wall(spec: rp.ReactionPathSpec, u: float, v, height: float = WALL_HEIGHT) -> np.ndarray:
    """Cubic barrier that is zero for 1 + K v >= WALL_ONSET and reaches ``height`` at the stretch floor.

    At fixed v it is continuous in u, so the basis stays smooth where the
    kept part of the v grid changes from one slice to the next.
    """
    K, _, _ = rp.curvature_data(spec, float(u))
    stretch = 1.0 + float(K) * np.asarray(v, dtype=float)
    x = np.clip((WALL_ONSET - stretch) / (WALL_ONSET - rp.MIN_STRETCH), 0.0, None)
    return height * x ** 3


def _tridiagonal_levels(V: np.ndarray, h: float, mu: float, N: int, hbar: float):
    kin = hbar * hbar / (2.0 * mu * h * h)
    diag = V + 2.0 * kin
    off = np.full(V.size - 1, -kin)
    eps, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, N - 1))
    return eps, vecs.T


def _fix_signs(functions: np.ndarray, dv: float) -> None:
    first = functions[0]
    for n in range(first.shape[0]):
        if first[n, np.argmax(np.abs(first[n]))] < 0.0:
            first[n] *= -1.0
    for k in range(1, functions.shape[0]):
        ov = np.sum(functions[k] * functions[k - 1], axis=1) * dv
        functions[k][ov < 0.0] *= -1.0


def vibrational_eigenstates(
    surface: Surface,
    spec: rp.ReactionPathSpec,
    u_grid,
    v_grid,
    N: int,
    j: int = 0,
    richardson: bool = True,
    h_u: float = 1e-4,
    threads: int = 1,
) -> ChannelBasis:
    """Build the channel basis on a (u, v) grid.

    Slices are solved independently (optionally on a thread pool) and then
    made sign-continuous along u in one sequential pass. Where the curve
    bends, a slice sees the confining wall and drops the v samples at or
    below the stretch floor.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    if u_grid.ndim != 1 or u_grid.size < 1:
        raise DomainError("u grid must be a non-empty 1-D array")
    if v_grid.ndim != 1 or v_grid.size < 8:
        raise DomainError("v grid must be a 1-D array of at least 8 points")
    mu = surface.mass_system.mu

    def solve_slice(u: float):
        keep = rp.admissible_v(spec, u, v_grid)
        vs = v_grid[keep]
        if vs.size < 4 * N:
            raise BasisDeficiencyError(
                f"at u = {u:.6g}: only {vs.size} v points clear the self-crossing region, {N} channels need {4 * N}; raise v_steps"
            )
        ub = np.full(v_grid.size, np.nan)
        ub[keep] = u_bar(surface, spec, np.full_like(vs, u), vs, h_u=h_u) + confining_wall(spec, u, vs)
        try:
            eps, vecs = transverse_eigenstates(ub[keep], vs, mu, N, j=j, richardson=richardson, lower_wall=not keep[0])
        except BasisDeficiencyError as exc:
            raise BasisDeficiencyError(f"at u = {u:.6g}: {exc}") from exc
        funcs = np.zeros((N, v_grid.size))
        funcs[:, keep] = vecs
        return ub, eps, funcs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            slices = list(ex.map(solve_slice, u_grid))
    else:
        slices = [solve_slice(u) for u in u_grid]

    ubar = np.array([s[0] for s in slices])
    energies = np.array([s[1] for s in slices])
    functions = np.array([s[2] for s in slices])
    _fix_signs(functions, float(v_grid[1] - v_grid[0]))
    cut = int(np.count_nonzero(np.isnan(ubar[:, 0])))
    logger.info(f"channel basis: {u_grid.size} u slices x {v_grid.size} v points, N={N}, j={j}, {cut} slices cut at the stretch floor")
    return ChannelBasis(
        u_grid=u_grid,
        v_grid=v_grid,
        j=j,
        energies=energies,
        functions=functions,
        ubar=ubar,
        phase_fixed=True,
    )


@dataclass(frozen=True)
class CouplingMatrices:
    """Channel matrix elements at one u sample.

    ``d1[n, m] = <n|d/du|m>`` and ``d2[n, m] = <n|d2/du2|m>``. The metric
    blocks weight by 1/eta^2: ``inv_eta2 = <n|eta^-2|m>``,
    ``inv_eta2_d1 = <n|eta^-2 d/du|m>`` and
    ``d1_inv_eta2_d1 = <d/du n|eta^-2|d/du m>``.
    """

    d1: np.ndarray
    d2: np.ndarray
    eta2: np.ndarray
    inv_eta2: np.ndarray
    inv_eta2_d1: np.ndarray
    d1_inv_eta2_d1: np.ndarray


def _metric_tables(spec: rp.ReactionPathSpec, u: float, v: np.ndarray):
    """(eta, 1/eta^2) on the v grid; both are zero where the slice is cut."""
    K, ds_du, _ = rp.curvature_data(spec, u)
    keep = rp.admissible_v(spec, u, v)
    e0 = np.where(keep, (1.0 + float(K) * v) * float(ds_du), 0.0)
    inv2 = np.divide(1.0, e0 * e0, out=np.zeros_like(e0), where=keep)
    return e0, inv2


def _u_derivatives(basis: ChannelBasis, k: int, warn: bool = True):
    X = basis.functions
    nu = X.shape[0]
    if nu < 3:
        raise DomainError("derivative couplings need at least 3 u samples")
    du = float(basis.u_grid[1] - basis.u_grid[0])
    if 0 < k < nu - 1:
        dX = (X[k + 1] - X[k - 1]) / (2.0 * du)
        ddX = (X[k + 1] - 2.0 * X[k] + X[k - 1]) / (du * du)
        return dX, ddX
    if warn:
        logger.warning(f"one-sided u-differences at boundary index {k}")
    if k == 0:
        dX = (-3.0 * X[0] + 4.0 * X[1] - X[2]) / (2.0 * du)
        ddX = (X[0] - 2.0 * X[1] + X[2]) / (du * du)
    else:
        dX = (3.0 * X[-1] - 4.0 * X[-2] + X[-3]) / (2.0 * du)
        ddX = (X[-1] - 2.0 * X[-2] + X[-3]) / (du * du)
    return dX, ddX


def coupling_matrices(basis: ChannelBasis, spec: rp.ReactionPathSpec, k: int, warn: bool = True) -> CouplingMatrices:
    """Derivative couplings and metric-weighted overlaps at u index ``k``."""
    if not basis.phase_fixed:
        raise DomainError("coupling matrices need a sign-continuous basis")
    if not 0 <= k < basis.u_grid.size:
        raise GridRangeError(f"u index {k} outside 0..{basis.u_grid.size - 1}")
    X = basis.functions[k]
    dv = basis.dv
    dX, ddX = _u_derivatives(basis, k, warn=warn)
    e0, inv2 = _metric_tables(spec, float(basis.u_grid[k]), basis.v_grid)
    Xw = X * inv2
    return CouplingMatrices(
        d1=X @ dX.T * dv,
        d2=X @ ddX.T * dv,
        eta2=(X * e0 * e0) @ X.T * dv,
        inv_eta2=Xw @ X.T * dv,
        inv_eta2_d1=Xw @ dX.T * dv,
        d1_inv_eta2_d1=(dX * inv2) @ dX.T * dv,
    )


def weighted_overlap(basis: ChannelBasis, k: int, weight) -> np.ndarray:
    """<n| w(v) |m> at u index k for weights tabulated on the v grid."""
    X = basis.functions[k]
    return (X * np.asarray(weight, dtype=float)) @ X.T * basis.dv


def theta_function(j: int, K: int, x):
    """Normalised associated Legendre function Theta_jK(cos theta)."""
    if not 0 <= K <= j:
        raise DomainError(f"need 0 <= K <= j, got j={j}, K={K}")
    norm = math.sqrt((2 * j + 1) / 2.0 * math.factorial(j - K) / math.factorial(j + K))
    return norm * lpmv(K, j, np.asarray(x, dtype=float))


def angular_matrix(surface: Surface, spec: rp.ReactionPathSpec, u: float, v: float, j: int, jp: int, K: int, order: int) -> float:
    """U^K_{j j'}(u, v) by Gauss-Legendre quadrature in cos theta.

    Raises:
        QuadratureOrderError: If ``order`` < j + jp + 2.
    """
    if min(j, jp) < K or K < 0:
        raise DomainError(f"need j, j' >= K >= 0, got j={j}, j'={jp}, K={K}")
    if order < j + jp + 2:
        raise QuadratureOrderError(f"quadrature order {order} too low for j={j}, j'={jp}; need >= {j + jp + 2}")
    x, w = leggauss(order)
    q0, q1 = rp.ncc_to_scaled(spec, u, v)
    U = surface.energy(np.full_like(x, float(q0)), np.full_like(x, float(q1)), np.arccos(x))
    return float(np.sum(w * theta_function(j, K, x) * U * theta_function(jp, K, x)))


def c_pm(J: int, K: int) -> tuple[float, float]:
    """(c+_{JK}, c-_{JK}) = sqrt(J(J+1) - K(K +/- 1))."""
    if abs(K) > J:
        raise DomainError(f"|K| must not exceed J, got J={J}, K={K}")
    base = J * (J + 1)
    return math.sqrt(base - K * (K + 1)), math.sqrt(base - K * (K - 1))


def coriolis_coefficients(J: int, j: int, K: int) -> tuple[float, float]:
    """(C+, C-) = (c+_{JK} c+_{jK}, c-_{JK} c-_{jK})."""
    if abs(K) > min(J, j):
        raise DomainError(f"|K| must not exceed min(J, j), got J={J}, j={j}, K={K}")
    cpJ, cmJ = c_pm(J, K)
    cpj, cmj = c_pm(j, K)
    return cpJ * cpj, cmJ * cmj


def centrifugal_energy(ms: MassSystem | float, J: int, K: int, q0, hbar: float = 1.0):
    """E_JK = hbar^2 (J(J+1) - 2K^2) / (2 mu q0^2)."""
    if abs(K) > J:
        raise DomainError(f"|K| must not exceed J, got J={J}, K={K}")
    q0 = np.asarray(q0, dtype=float)
    if np.any(q0 <= 0.0):
        raise DomainError(f"q0 must be positive, got {q0!r}")
    mu = ms.mu if isinstance(ms, MassSystem) else float(ms)
    return 0.5 * hbar * hbar / mu / (q0 * q0) * (J * (J + 1) - 2 * K * K)


def wavefunction_value(basis: ChannelBasis, G, u: float, v: float, theta: float = 0.0, J: int = 0, K: int = 0) -> complex:
    """Sum_n G_n(u) Xi_n(v; u) Theta_jK(theta), interpolated linearly in u and v.

    ``G`` has shape (nu, N) on the basis u grid. ``J`` is accepted for the
    full expansion but only the collinear J = K = 0 channel set is carried.
    """
    G = np.asarray(G)
    ug, vg = basis.u_grid, basis.v_grid
    if G.shape != (ug.size, basis.channels):
        raise DomainError(f"channel functions must have shape {(ug.size, basis.channels)}, got {G.shape}")
    if not (ug[0] <= u <= ug[-1]) or not (vg[0] <= v <= vg[-1]):
        raise GridRangeError(f"point (u, v) = ({u}, {v}) outside the basis grid")
    if abs(K) > J:
        raise DomainError(f"|K| must not exceed J, got J={J}, K={K}")

    def bracket(grid, x):
        i = int(np.clip(np.searchsorted(grid, x) - 1, 0, grid.size - 2)) if grid.size > 1 else 0
        if grid.size == 1:
            return 0, 0, 0.0
        t = (x - grid[i]) / (grid[i + 1] - grid[i])
        return i, i + 1, float(t)

    i0, i1, tu = bracket(ug, u)
    k0, k1, tv = bracket(vg, v)

    def at(i):
        xi = (1.0 - tv) * basis.functions[i][:, k0] + tv * basis.functions[i][:, k1]
        return np.dot(G[i], xi)

    radial = (1.0 - tu) * at(i0) + tu * at(i1)
    angular = theta_function(basis.j, K, math.cos(theta))
    return complex(radial * angular)
