"""Coupled-channel propagation along u and S-matrix assembly.

The channel functions G(u) obey the projection of

    d/du (eta^-2 d psi/du) + kappa (E - H_v) psi = 0

onto the channel basis, carried as the first-order pair

    F = W G' + X G,    F' = X^T G' + (Y - kappa diag(E - eps)) G

with W = <eta^-2>, X = <eta^-2 d/du>, Y = <d/du| eta^-2 |d/du> and
kappa = 2 mu / hbar^2. W and Y are symmetric, so the Wronskian
G1^H F2 - F1^H G2 is constant along u for any basis size. The end samples
carry no derivative coupling, so the flux there is that of free channel
waves. Waves travelling
toward +u are exp(-i k u), so the incoming reactant wave at u_min is
exp(-i k (u - u_min)).

Two stabilised shootings give the full S-matrix: one started at u_max with
purely outgoing/decaying data (reactant incidence) and one started at u_min
(product incidence). Solutions are re-orthogonalised by QR every
``reorth_stride`` grid intervals.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from nccscatter.lib import reaction_path as rp
from nccscatter.lib.channels import ChannelBasis, coupling_matrices
from nccscatter.lib.errors import ClosedChannelError, DomainError, StabilizationError
from nccscatter.models.scattering import ScatteringMatrix
from nccscatter.models.trajectory import GeodesicTrajectory, Outcome

logger = logging.getLogger(__name__)

DEFAULT_REORTH_STRIDE = 50
DEFAULT_MAX_PHASE_STEP = 0.05
COND_LIMIT = 1e12


def _free_ends(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # end samples are matched to free channel waves
    X = X.copy()
    Y = Y.copy()
    X[0] = X[-1] = 0.0
    Y[0] = Y[-1] = 0.0
    return X, Y


@dataclass(frozen=True)
class CoupledSystem:
    """Coefficient tables of the coupled equations on a uniform u grid."""

    u: np.ndarray
    W: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    eps: np.ndarray
    kappa: float
    W_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        inv = np.linalg.inv(self.W)
        object.__setattr__(self, "W_inv", 0.5 * (inv + np.swapaxes(inv, -1, -2)))

    @property
    def channels(self) -> int:
        return self.eps.shape[1]

    @classmethod
    def from_basis(cls, basis: ChannelBasis, spec: rp.ReactionPathSpec, mu: float, hbar: float = 1.0) -> "CoupledSystem":
        nu = basis.u_grid.size
        if nu < 4:
            raise DomainError(f"coupled propagation needs at least 4 u samples, got {nu}")
        N = basis.channels
        W = np.empty((nu, N, N))
        X = np.empty((nu, N, N))
        Y = np.empty((nu, N, N))
        for k in range(nu):
            c = coupling_matrices(basis, spec, k, warn=False)
            W[k] = 0.5 * (c.inv_eta2 + c.inv_eta2.T)
            X[k] = c.inv_eta2_d1
            Y[k] = 0.5 * (c.d1_inv_eta2_d1 + c.d1_inv_eta2_d1.T)
        X, Y = _free_ends(X, Y)
        return cls(u=basis.u_grid.copy(), W=W, X=X, Y=Y, eps=basis.energies.copy(), kappa=2.0 * mu / (hbar * hbar))

    @classmethod
    def uncoupled(cls, u, eps, kappa: float, eta: float = 1.0) -> "CoupledSystem":
        """System with no channel coupling and a constant metric factor."""
        u = np.asarray(u, dtype=float)
        eps = np.asarray(eps, dtype=float)
        if eps.ndim == 1:
            eps = np.broadcast_to(eps, (u.size, eps.size)).copy()
        N = eps.shape[1]
        zeros = np.zeros((u.size, N, N))
        W = np.broadcast_to(np.eye(N) / (eta * eta), (u.size, N, N)).copy()
        return cls(u=u, W=W, X=zeros, Y=zeros.copy(), eps=eps, kappa=kappa)

    def slice(self, i0: int, i1: int) -> "CoupledSystem":
        """Sub-system on grid indices [i0, i1), with free ends."""
        X, Y = _free_ends(self.X[i0:i1], self.Y[i0:i1])
        return CoupledSystem(u=self.u[i0:i1], W=self.W[i0:i1], X=X, Y=Y, eps=self.eps[i0:i1], kappa=self.kappa)

    def metric(self, k: int) -> np.ndarray:
        """diag(W^-1) at grid index k; eta^2 of the channel where the metric is diagonal."""
        return np.diag(self.W_inv[k])

    def wavenumbers(self, E: float, k: int):
        """(open mask, |k_n|) at grid index k; |k_n| is the decay constant for closed channels."""
        val = self.kappa * self.metric(k) * (E - self.eps[k])
        return E - self.eps[k] > 0.0, np.sqrt(np.abs(val))

    def momenta(self, E: float, k: int) -> np.ndarray:
        """Physical momenta sqrt(2 mu (E - eps_n)) / hbar of the open channels."""
        open_, _ = self.wavenumbers(E, k)
        return np.sqrt(self.kappa * (E - self.eps[k][open_]))


@dataclass
class _Shot:
    G: np.ndarray
    dG: np.ndarray
    T: np.ndarray
    order: list
    frames: list
    rs: dict


def _rhs(Wi, X, B, G, F):
    dG = Wi @ (F - X @ G)
    return dG, X.T @ dG + B @ G


def _shoot(system: CoupledSystem, E: float, from_right: bool, reorth_stride: int, max_phase_step: float, record: bool = False) -> _Shot:
    nu = system.u.size
    N = system.channels
    start = nu - 1 if from_right else 0
    open_, kabs = system.wavenumbers(E, start)
    sign = -1.0 if from_right else 1.0
    d = np.where(open_, sign * 1j * kabs, sign * kabs)
    G = np.eye(N, dtype=complex)
    F = system.W[start] @ np.diag(d) + system.X[start]
    T = np.eye(N, dtype=complex)
    order = list(range(nu - 1, -1, -1)) if from_right else list(range(nu))
    frames = [G.copy()] if record else []
    rs: dict[int, np.ndarray] = {}

    def coefficients(k):
        return system.W_inv[k], system.X[k], system.Y[k] - np.diag(system.kappa * (E - system.eps[k]))

    prev = coefficients(start)
    for step, (k0, k1) in enumerate(zip(order[:-1], order[1:]), start=1):
        h = system.u[k1] - system.u[k0]
        nxt = coefficients(k1)
        wave = max(float(np.max(np.abs(np.diag(c[0]) * np.diag(c[2])))) for c in (prev, nxt))
        drift = max(float(np.max(np.abs(c[0] @ c[1]))) for c in (prev, nxt))
        m = max(1, int(math.ceil((math.sqrt(wave) + 2.0 * drift) * abs(h) / max_phase_step)))
        hs = h / m

        def at(t):
            return tuple((1.0 - t) * a + t * b for a, b in zip(prev, nxt))

        for i in range(m):
            ca, cb, cc = at(i / m), at((i + 0.5) / m), at((i + 1) / m)
            k1g, k1f = _rhs(*ca, G, F)
            k2g, k2f = _rhs(*cb, G + 0.5 * hs * k1g, F + 0.5 * hs * k1f)
            k3g, k3f = _rhs(*cb, G + 0.5 * hs * k2g, F + 0.5 * hs * k2f)
            k4g, k4f = _rhs(*cc, G + hs * k3g, F + hs * k3f)
            G = G + hs / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
            F = F + hs / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f)
        prev = nxt
        if step % reorth_stride == 0 and step < nu - 1:
            Qm, R = np.linalg.qr(np.vstack([G, F]))
            G, F = Qm[:N], Qm[N:]
            T = T @ solve_triangular(R, np.eye(N, dtype=complex))
            if record:
                rs[k1] = R
        if record:
            frames.append(G.copy())
    end = order[-1]
    dG = system.W_inv[end] @ (F - system.X[end] @ G)
    return _Shot(G=G, dG=dG, T=T, order=order, frames=frames, rs=rs)


def _matching(shot: _Shot, open_: np.ndarray, kabs: np.ndarray, at_left: bool):
    """(C, outgoing rows) at the far end of a shooting.

    C stacks the incoming amplitude of open channels and the growing
    amplitude of closed channels; both must be fixed by the boundary data.
    """
    Y, Z = shot.G, shot.dG
    kk = kabs[:, None]
    ik = 1j * kk
    plus = (ik * Y - Z) / np.where(open_[:, None], 2.0 * ik, 1.0)  # exp(-ikx) coefficient
    minus = (ik * Y + Z) / np.where(open_[:, None], 2.0 * ik, 1.0)  # exp(+ikx) coefficient
    safe = np.where(kk > 0.0, kk, 1.0)
    grow_right = (kk * Y + Z) / (2.0 * safe)
    grow_left = (kk * Y - Z) / (2.0 * safe)
    if at_left:
        incoming, outgoing, forbidden = plus, minus, grow_left
    else:
        incoming, outgoing, forbidden = minus, plus, grow_right
    C = np.where(open_[:, None], incoming, forbidden)
    return C, outgoing


def _solve_incidence(system, E, from_right, reorth_stride, max_phase_step, record=False):
    shot = _shoot(system, E, from_right, reorth_stride, max_phase_step, record=record)
    end = 0 if from_right else system.u.size - 1
    open_end, k_end = system.wavenumbers(E, end)
    C, outgoing = _matching(shot, open_end, k_end, at_left=from_right)
    cond = np.linalg.cond(C)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise StabilizationError(
            f"matching system condition number {cond:.3g} exceeds {COND_LIMIT:.0e}; lower reorth_stride (now {reorth_stride})"
        )
    B = np.eye(system.channels, dtype=complex)[:, open_end]
    D = np.linalg.solve(C, B)
    return shot, D, outgoing @ D, open_end, k_end


def _flux(system: CoupledSystem, k: int, open_: np.ndarray, kabs: np.ndarray) -> np.ndarray:
    return kabs[open_] / system.metric(k)[open_]


def solve_coupled_static(
    system: CoupledSystem,
    E: float,
    reorth_stride: int = DEFAULT_REORTH_STRIDE,
    max_phase_step: float = DEFAULT_MAX_PHASE_STEP,
) -> ScatteringMatrix:
    """Full S-matrix at energy E over the whole u grid.

    Raises:
        ClosedChannelError: If no reactant channel is open at E.
        StabilizationError: If a matching system is ill-conditioned.
    """
    if reorth_stride < 1:
        raise DomainError(f"reorth_stride must be positive, got {reorth_stride}")
    nu = system.u.size
    open_L, k_L = system.wavenumbers(E, 0)
    open_R, k_R = system.wavenumbers(E, nu - 1)
    nL, nR = int(open_L.sum()), int(open_R.sum())
    if nL == 0:
        raise ClosedChannelError(f"E = {E:.8g} lies below the lowest reactant threshold {system.eps[0].min():.8g}")
    fL = _flux(system, 0, open_L, k_L)
    fR = _flux(system, nu - 1, open_R, k_R)

    S = np.zeros((nL + nR, nL + nR), dtype=complex)
    shot, D, refl, _, _ = _solve_incidence(system, E, True, reorth_stride, max_phase_step)
    trans = (shot.T @ D)[open_R]
    S[:nL, :nL] = refl[open_L] * np.sqrt(fL[:, None] / fL[None, :])
    S[nL:, :nL] = trans * np.sqrt(fR[:, None] / fL[None, :])
    if nR:
        shot, D, refl, _, _ = _solve_incidence(system, E, False, reorth_stride, max_phase_step)
        trans = (shot.T @ D)[open_L]
        S[nL:, nL:] = refl[open_R] * np.sqrt(fR[:, None] / fR[None, :])
        S[:nL, nL:] = trans * np.sqrt(fL[:, None] / fR[None, :])

    res = unitarity_residual(S)
    logger.debug(f"static solve at E={E:.8g}: {nL} reactant / {nR} product open, unitarity residual {res:.3g}")
    return ScatteringMatrix(
        energy=float(E),
        p_reactant=system.momenta(E, 0),
        p_product=system.momenta(E, nu - 1),
        amplitudes=S,
        unitarity_residual=res,
        mode="static",
        u_interval=(float(system.u[0]), float(system.u[-1])),
    )


def channel_functions(
    system: CoupledSystem,
    E: float,
    n: int,
    reorth_stride: int = DEFAULT_REORTH_STRIDE,
    max_phase_step: float = DEFAULT_MAX_PHASE_STEP,
) -> np.ndarray:
    """G(u) on the grid, shape (nu, N), for unit incidence in reactant channel n."""
    open_L, _ = system.wavenumbers(E, 0)
    if not 0 <= n < int(open_L.sum()):
        raise ClosedChannelError(f"reactant channel {n} is not open at E = {E:.8g}")
    shot, D, _, _, _ = _solve_incidence(system, E, True, reorth_stride, max_phase_step, record=True)
    x = D[:, n]
    G = np.empty((system.u.size, system.channels), dtype=complex)
    for pos in range(len(shot.order) - 1, -1, -1):
        k = shot.order[pos]
        G[k] = shot.frames[pos] @ x
        R = shot.rs.get(k)
        if R is not None:
            x = solve_triangular(R, x)
    return G


def swept_interval(traj: GeodesicTrajectory) -> tuple[float, float]:
    u = traj.column("u")
    u = u[np.isfinite(u)]
    if u.size == 0:
        raise DomainError("trajectory has no samples with a defined u")
    return float(u.min()), float(u.max())


def solve_coupled_tube(
    system: CoupledSystem,
    E: float,
    traj: GeodesicTrajectory,
    reorth_stride: int = DEFAULT_REORTH_STRIDE,
    max_phase_step: float = DEFAULT_MAX_PHASE_STEP,
) -> ScatteringMatrix:
    """Tube-mode S-matrix for the tube generated by ``traj``.

    Reactive tubes are propagated over the grid part of the u-interval the
    trajectory swept. Non-reactive tubes reflect from a wall at the turning
    point, with zero transmission. Undecided tubes are flagged resonant.
    """
    u = system.u
    nu = u.size
    lo, hi = swept_interval(traj)
    open_L, k_L = system.wavenumbers(E, 0)
    open_R, _ = system.wavenumbers(E, nu - 1)
    if not open_L.any():
        raise ClosedChannelError(f"E = {E:.8g} lies below the lowest reactant threshold {system.eps[0].min():.8g}")
    p_L, p_R = system.momenta(E, 0), system.momenta(E, nu - 1)
    phi = float(traj.initial_phase)

    if traj.outcome == Outcome.Reactive:
        i0 = int(np.argmin(np.abs(u - max(u[0], lo))))
        i1 = int(np.argmin(np.abs(u - min(u[-1], hi))))
        if i1 - i0 < 3:
            raise DomainError(f"swept interval [{lo:.6g}, {hi:.6g}] covers fewer than 4 grid points")
        S = solve_coupled_static(system.slice(i0, i1 + 1), E, reorth_stride, max_phase_step)
        return replace(S, mode="tube", phi=phi)

    if traj.outcome == Outcome.NonReactive:
        nL, nR = int(open_L.sum()), int(open_R.sum())
        L = max(0.0, min(hi, float(u[-1])) - float(u[0]))
        amp = np.eye(nL + nR, dtype=complex)
        amp[np.arange(nL), np.arange(nL)] = -np.exp(-2j * k_L[open_L] * L)
        return ScatteringMatrix(
            energy=float(E),
            p_reactant=p_L,
            p_product=p_R,
            amplitudes=amp,
            unitarity_residual=unitarity_residual(amp),
            mode="tube",
            phi=phi,
            u_interval=(float(u[0]), float(u[0]) + L),
        )

    logger.debug(f"tube at phi={phi:.6g} is resonant; no amplitudes")
    return ScatteringMatrix(
        energy=float(E),
        p_reactant=p_L,
        p_product=p_R,
        amplitudes=None,
        unitarity_residual=float("nan"),
        mode="tube",
        phi=phi,
        resonant=True,
        u_interval=(lo, hi),
    )


def unitarity_residual(S) -> float:
    """max |S^dagger S - 1|."""
    if isinstance(S, ScatteringMatrix):
        if S.amplitudes is None:
            return float("nan")
        S = S.amplitudes
    S = np.asarray(S, dtype=complex)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DomainError(f"S-matrix must be square, got shape {S.shape}")
    if S.size == 0:
        return 0.0
    return float(np.max(np.abs(S.conj().T @ S - np.eye(S.shape[0]))))
