"""Classical dynamics as geodesics of the conformal Jacobi metric.

The collinear kinetic metric in mass-scaled (q0, q1) is Euclidean, so the
Jacobi metric g_ij = P^2 delta_ij with P^2 = 2 mu (E - U) is conformal in
that frame and the geodesic equations are integrated there, with theta as
third coordinate. Samples are mapped to NCC (u, v, theta) for output and
classification. The natural parameter s is normalised so that

    g00 |qdot|^2 + I^2 / (mu^2 g00) = 1

which is a first integral of the flow.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import RK45, solve_ivp
from scipy.optimize import brentq

from nccscatter.lib import reaction_path as rp
from nccscatter.lib.channels import vibrational_eigenstates
from nccscatter.lib.errors import (
    BoundaryGrazingError,
    ClosedChannelError,
    ConvergenceError,
    DomainError,
    RegionError,
    ScatterError,
    SurfaceExitError,
)
from nccscatter.lib.pes import Surface, collinear_potential
from nccscatter.models.trajectory import ChaosMap, GeodesicState, GeodesicTrajectory, Outcome

logger = logging.getLogger(__name__)

GRADIENT_STEP = 1e-5
DEFAULT_V_RANGE = (-3.0, 1.2)


@dataclass(frozen=True)
class IntegrationControls:
    """Numerical controls of a geodesic run.

    ``u_react`` and ``u_nonreact`` are the classification thresholds; runs
    stop as soon as one is crossed outward. ``renorm_ds`` overrides the
    Lyapunov renormalisation interval derived from the vibrational period.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    s_max: float = 2e4
    output_stride: float = 1.0
    u_react: float = math.inf
    u_nonreact: float = -math.inf
    angular_momentum: float = 0.0
    delta0: float = 1e-8
    renorm_fraction: float = 0.02
    renorm_ds: Optional[float] = None
    lyapunov_retries: int = 3

    def __post_init__(self):
        if not self.u_nonreact < self.u_react:
            raise DomainError(f"u_nonreact ({self.u_nonreact}) must lie below u_react ({self.u_react})")
        if self.s_max <= 0.0 or self.output_stride <= 0.0:
            raise DomainError("s_max and output_stride must be positive")


@dataclass(frozen=True)
class AsymptoticLevel:
    """Vibrational level of the separated diatom at u_start."""

    n: int
    energy: float
    v_center: float
    amplitude: float
    u_start: float
    spacing: float


class GeodesicFlow:
    """Geodesic vector field of one surface at fixed total energy."""

    def __init__(self, surface: Surface, E: float, I: float = 0.0, h: float = GRADIENT_STEP):
        self.surface = surface
        self.mu = surface.mass_system.mu
        self.E = float(E)
        self.I = float(I)
        self.h = h

    def potential_and_gradient(self, q0: float, q1: float, theta: float):
        h = self.h
        q0s = np.array([q0, q0 + h, q0 - h, q0, q0, q0, q0])
        q1s = np.array([q1, q1, q1, q1 + h, q1 - h, q1, q1])
        ths = np.array([theta, theta, theta, theta, theta, theta + h, theta - h])
        U = self.surface.energy(q0s, q1s, ths)
        grad = np.array([U[1] - U[2], U[3] - U[4], U[5] - U[6]]) / (2.0 * h)
        return float(U[0]), grad

    def metric(self, q) -> tuple[float, np.ndarray]:
        """(g00, grad chi) at q = (q0, q1, theta); chi = ln g00.

        Raises:
            SurfaceExitError: If E <= U at q.
        """
        U, grad = self.potential_and_gradient(q[0], q[1], q[2])
        g00 = 2.0 * self.mu * (self.E - U)
        if not g00 > 0.0:
            raise SurfaceExitError(f"E = {self.E:.10g} <= U = {U:.10g} at q = {tuple(float(x) for x in q)}")
        return g00, -2.0 * self.mu * grad / g00

    def rhs(self, s: float, y: np.ndarray) -> np.ndarray:
        q, qd = y[:3], y[3:]
        g00, dchi = self.metric(q)
        c = self.I * self.I / (self.mu * self.mu * g00 * g00)
        sq = qd * qd
        speed2 = float(np.sum(sq))
        acc = -0.5 * dchi * (2.0 * sq - speed2 - c) - (float(np.dot(dchi, qd)) - dchi * qd) * qd
        return np.concatenate([qd, acc])

    def safe_rhs(self, s: float, y: np.ndarray) -> np.ndarray:
        """rhs that returns NaN outside the Lagrange surface, forcing a step rejection."""
        try:
            return self.rhs(s, y)
        except SurfaceExitError:
            return np.full(6, np.nan)

    def norm(self, y: np.ndarray) -> float:
        g00, _ = self.metric(y[:3])
        return g00 * float(np.dot(y[3:], y[3:])) + self.I * self.I / (self.mu * self.mu * g00)


def metric(surface: Surface, state: GeodesicState, E: float) -> tuple[float, np.ndarray]:
    """g00 = 2 mu (E - U) and the gradient of ln g00 at the state's position."""
    return GeodesicFlow(surface, E, state.I).metric(np.asarray(state.q, dtype=float))


def geodesic_rhs(surface: Surface, state: GeodesicState, E: float) -> np.ndarray:
    """d/ds of (q0, q1, theta, q0', q1', theta')."""
    y = np.concatenate([np.asarray(state.q, dtype=float), np.asarray(state.qdot, dtype=float)])
    return GeodesicFlow(surface, E, state.I).rhs(state.s, y)


def reconstructed_energy(surface: Surface, state: GeodesicState, E: float) -> float:
    """Physical energy rebuilt from U and the velocity of a normalised state."""
    flow = GeodesicFlow(surface, E, state.I)
    U = float(surface.energy(state.q[0], state.q[1], state.q[2]))
    return U + (E - U) * flow.norm(np.asarray(state.q + state.qdot, dtype=float))


def _to_ncc_state(spec: rp.ReactionPathSpec, y: np.ndarray, s: float, I: float, u_guess: Optional[float]) -> GeodesicState:
    q0, q1, th, d0, d1, dth = (float(x) for x in y)
    try:
        u, v = rp.scaled_to_ncc(spec, q0, q1, u_guess=u_guess)
        (t0, t1), (n0, n1) = rp.tangent_and_normal(spec, u)
        et = float(rp.eta(spec, u, v))
        du = (d0 * t0 + d1 * t1) / et
        dv = d0 * n0 + d1 * n1
    except (RegionError, ConvergenceError):
        logger.debug(f"no NCC image for q = ({q0:.6g}, {q1:.6g}) at s = {s:.6g}")
        u = v = du = dv = math.nan
    return GeodesicState(x=(u, v, th), xdot=(du, dv, dth), s=float(s), I=I, q=(q0, q1, th), qdot=(d0, d1, dth))


def asymptotic_level(
    surface: Surface,
    spec: rp.ReactionPathSpec,
    n: int,
    u_start: float,
    v_range: tuple[float, float] = DEFAULT_V_RANGE,
    v_points: int = 801,
) -> AsymptoticLevel:
    """Energy, centre and half-width of vibrational level n at u_start.

    The energy comes from the transverse eigenproblem; the classical
    turning points of U(u_start, v) at that energy fix centre and width.
    """
    if n < 0:
        raise DomainError(f"vibrational index must be non-negative, got {n}")
    v = np.linspace(v_range[0], v_range[1], v_points)
    basis = vibrational_eigenstates(surface, spec, [u_start], v, n + 2)
    eps = basis.energies[0]
    level = float(eps[n])

    def U(x):
        return float(collinear_potential(surface, spec, u_start, x))

    Uv = collinear_potential(surface, spec, np.full_like(v, u_start), v)
    i = int(np.argmin(Uv))
    lo = i
    while lo > 0 and Uv[lo] < level:
        lo -= 1
    hi = i
    while hi < v.size - 1 and Uv[hi] < level:
        hi += 1
    if Uv[lo] < level or Uv[hi] < level:
        raise DomainError(f"v range {v_range} does not contain the turning points of level {n}")
    v_lo = brentq(lambda x: U(x) - level, v[lo], v[lo + 1])
    v_hi = brentq(lambda x: U(x) - level, v[hi - 1], v[hi])
    return AsymptoticLevel(
        n=n,
        energy=level,
        v_center=0.5 * (v_lo + v_hi),
        amplitude=0.5 * (v_hi - v_lo),
        u_start=float(u_start),
        spacing=float(eps[n + 1] - eps[n]),
    )


def initial_conditions(
    surface: Surface,
    spec: rp.ReactionPathSpec,
    E: float,
    n: int,
    phi: float,
    u_start: float,
    I: float = 0.0,
    level: Optional[AsymptoticLevel] = None,
) -> GeodesicState:
    """Reactant-valley state with the diatom in level n at vibrational phase phi.

    v = v_n + A_n cos(phi), dv/dt has the sign of -sin(phi) and its size is
    fixed by the level energy; the remaining energy goes into motion toward
    +u. The velocity is normalised to the geodesic parametrisation.

    Raises:
        ClosedChannelError: If E is below the level energy.
    """
    if level is None or level.n != n or level.u_start != u_start:
        level = asymptotic_level(surface, spec, n, u_start)
    if E < level.energy:
        raise ClosedChannelError(f"E = {E:.10g} is below the level energy eps_{n} = {level.energy:.10g}")
    mu = surface.mass_system.mu
    if hasattr(surface, "channel_potential"):
        q0, q1 = rp.ncc_to_scaled(spec, u_start, level.v_center)
        dev = abs(float(surface.energy(q0, q1, 0.0)) - float(surface.channel_potential("reactant", q0, q1)))
        if dev > 1e-6 * surface.well_depth:
            logger.warning(f"u_start = {u_start} is not asymptotic: coupling {dev:.3g} Eh")

    v = level.v_center + level.amplitude * math.cos(phi)
    U = float(collinear_potential(surface, spec, u_start, v))
    v_t = -math.copysign(1.0, math.sin(phi)) * math.sqrt(max(2.0 * (level.energy - U) / mu, 0.0))
    if math.sin(phi) == 0.0:
        v_t = 0.0
    et = float(rp.eta(spec, u_start, v))
    u_t = math.sqrt(2.0 * (E - level.energy) / mu) / et

    (t0, t1), (n0, n1) = rp.tangent_and_normal(spec, u_start)
    qt = np.array([t0 * et * u_t + n0 * v_t, t1 * et * u_t + n1 * v_t])
    q0, q1 = rp.ncc_to_scaled(spec, u_start, v)
    P2 = 2.0 * mu * (E - U)
    if not P2 > 0.0:
        raise SurfaceExitError(f"start point lies on the boundary of the Lagrange surface (E - U = {E - U:.3g})")
    qd = qt * mu / P2
    if I != 0.0:
        shell = 1.0 - I * I / (mu * mu * P2)
        if shell <= 0.0:
            raise DomainError(f"angular momentum I = {I} exceeds the available energy at the start point")
        qd *= math.sqrt(shell)
    y = np.array([float(q0), float(q1), 0.0, qd[0], qd[1], 0.0])
    state = _to_ncc_state(spec, y, 0.0, I, u_start)
    return replace(state, x=(float(u_start), float(v), 0.0))


def classify_outcome(traj: GeodesicTrajectory, u_react: float, u_nonreact: float) -> Outcome:
    """Reactive / NonReactive from the terminal sample, else Undecided."""
    if not traj.samples:
        return Outcome.Undecided
    last = traj.samples[-1]
    u, du = last.x[0], last.xdot[0]
    if u > u_react and du > 0.0:
        return Outcome.Reactive
    if u < u_nonreact and du < 0.0:
        return Outcome.NonReactive
    return Outcome.Undecided


def integrate(surface: Surface, spec: rp.ReactionPathSpec, init: GeodesicState, E: float, controls: IntegrationControls, phi: float = 0.0) -> GeodesicTrajectory:
    """Integrate from ``init`` until classified or s_max is reached.

    Samples are recorded every ``output_stride`` in s plus the terminal
    point.

    Raises:
        BoundaryGrazingError: If the step size underflows; the partial
            trajectory is attached.
    """
    flow = GeodesicFlow(surface, E, init.I)
    y0 = np.concatenate([np.asarray(init.q, dtype=float), np.asarray(init.qdot, dtype=float)])
    solver = RK45(flow.safe_rhs, init.s, y0, init.s + controls.s_max, rtol=controls.rtol, atol=controls.atol)
    samples = [init]
    norms = [flow.norm(y0)]
    u_last = init.x[0] if math.isfinite(init.x[0]) else None
    next_out = init.s + controls.output_stride
    terminated = "s_max"

    def partial(reason: str) -> GeodesicTrajectory:
        return GeodesicTrajectory(
            samples=tuple(samples), conserved_norm=np.array(norms), outcome=Outcome.Undecided, initial_phase=phi, energy=E, terminated=reason
        )

    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise BoundaryGrazingError(f"integration failed at s = {solver.t:.6g}: {message}", trajectory=partial("grazing"))
        if not np.all(np.isfinite(solver.y)):
            raise BoundaryGrazingError(f"non-finite state at s = {solver.t:.6g}", trajectory=partial("grazing"))
        if next_out <= solver.t:
            dense = solver.dense_output()
            while next_out <= solver.t:
                st = _to_ncc_state(spec, dense(next_out), next_out, init.I, u_last)
                if math.isfinite(st.x[0]):
                    u_last = st.x[0]
                samples.append(st)
                norms.append(flow.norm(np.asarray(st.q + st.qdot)))
                next_out += controls.output_stride
        end = _to_ncc_state(spec, solver.y, solver.t, init.I, u_last)
        if math.isfinite(end.x[0]):
            u_last = end.x[0]
            u, du = end.x[0], end.xdot[0]
            if (u > controls.u_react and du > 0.0) or (u < controls.u_nonreact and du < 0.0):
                terminated = "classified"
                break
    if samples[-1].s != end.s:
        samples.append(end)
        norms.append(flow.norm(solver.y))

    traj = GeodesicTrajectory(
        samples=tuple(samples), conserved_norm=np.array(norms), outcome=Outcome.Undecided, initial_phase=phi, energy=E, terminated=terminated
    )
    outcome = classify_outcome(traj, controls.u_react, controls.u_nonreact)
    logger.debug(f"trajectory E={E:.8g} phi={phi:.6g}: {outcome.name} after s={end.s:.6g}, norm drift {traj.norm_drift:.2e}")
    return replace(traj, outcome=outcome)


def _shell_rescale(flow: GeodesicFlow, y: np.ndarray) -> np.ndarray:
    g00, _ = flow.metric(y[:3])
    target = 1.0 - flow.I * flow.I / (flow.mu * flow.mu * g00)
    speed2 = float(np.dot(y[3:], y[3:]))
    out = y.copy()
    out[3:] *= math.sqrt(target / (g00 * speed2))
    return out


def renormalisation_interval(surface: Surface, init: GeodesicState, E: float, level: AsymptoticLevel, fraction: float = 0.02) -> float:
    """Delta s spanning ``fraction`` of one vibrational period at the start point."""
    mu = surface.mass_system.mu
    U = float(surface.energy(*init.q))
    P2 = 2.0 * mu * (E - U)
    period = 2.0 * math.pi / level.spacing
    return P2 / mu * period * fraction


def lyapunov_max(
    surface: Surface,
    spec: rp.ReactionPathSpec,
    init: GeodesicState,
    E: float,
    controls: IntegrationControls,
    level: Optional[AsymptoticLevel] = None,
) -> float:
    """Leading Lyapunov exponent (per unit s) by shadow-trajectory renormalisation.

    The shadow starts delta0 away in position, is put back on the norm
    shell and is pulled back to distance delta0 every renormalisation
    interval. The run ends at s_max or when the reference trajectory is
    classified.

    Raises:
        ConvergenceError: If the shadow keeps leaving the Lagrange surface
            after ``lyapunov_retries`` reductions of delta0.
    """
    ds = controls.renorm_ds
    if ds is None:
        if level is None:
            level = asymptotic_level(surface, spec, 0, init.x[0])
        ds = renormalisation_interval(surface, init, E, level, controls.renorm_fraction)
    delta0 = controls.delta0
    for attempt in range(controls.lyapunov_retries + 1):
        try:
            return _benettin(surface, spec, init, E, controls, ds, delta0)
        except (SurfaceExitError, BoundaryGrazingError) as exc:
            logger.warning(f"shadow trajectory left the surface (delta0={delta0:.1e}): {exc}")
            delta0 /= 10.0
    raise ConvergenceError(f"Lyapunov estimate failed after {controls.lyapunov_retries} delta0 reductions")


def _benettin(surface, spec, init, E, controls, ds, delta0) -> float:
    flow = GeodesicFlow(surface, E, init.I)
    y = np.concatenate([np.asarray(init.q, dtype=float), np.asarray(init.qdot, dtype=float)])
    direction = np.zeros(6)
    direction[:2] = 1.0 / math.sqrt(2.0)
    ys = _shell_rescale(flow, y + delta0 * direction)
    log_sum = 0.0
    s = 0.0
    u_guess = init.x[0]
    while s < controls.s_max:
        span = (0.0, min(ds, controls.s_max - s))
        a = solve_ivp(flow.safe_rhs, span, y, method="RK45", rtol=controls.rtol, atol=controls.atol)
        b = solve_ivp(flow.safe_rhs, span, ys, method="RK45", rtol=controls.rtol, atol=controls.atol)
        if not (a.success and b.success) or not (np.all(np.isfinite(a.y[:, -1])) and np.all(np.isfinite(b.y[:, -1]))):
            raise BoundaryGrazingError(f"segment integration failed at s = {s:.6g}")
        y, ys = a.y[:, -1], b.y[:, -1]
        s += span[1]
        d = float(np.linalg.norm(ys - y))
        log_sum += math.log(d / delta0)
        ys = y + (ys - y) * (delta0 / d)
        ys = _shell_rescale(flow, ys)
        st = _to_ncc_state(spec, y, s, init.I, u_guess)
        if math.isfinite(st.x[0]):
            u_guess = st.x[0]
            if (st.x[0] > controls.u_react and st.xdot[0] > 0.0) or (st.x[0] < controls.u_nonreact and st.xdot[0] < 0.0):
                break
    return log_sum / s if s > 0.0 else 0.0


def phase_period(surface: Surface, spec: rp.ReactionPathSpec, E: float, n: int, u_start: float, level: Optional[AsymptoticLevel] = None) -> float:
    """Distance in u travelled during one vibrational period of level n."""
    if level is None:
        level = asymptotic_level(surface, spec, n, u_start)
    if E <= level.energy:
        raise ClosedChannelError(f"E = {E:.10g} is below eps_{n} = {level.energy:.10g}")
    mu = surface.mass_system.mu
    speed = math.sqrt(2.0 * (E - level.energy) / mu) / float(rp.eta(spec, u_start, level.v_center))
    return speed * 2.0 * math.pi / level.spacing


@dataclass(frozen=True)
class InternalTimeProfile:
    turning_points: int
    label: str
    s_total: float


def internal_time_profile(traj: GeodesicTrajectory) -> InternalTimeProfile:
    """Count turning points of u(s) and label the trajectory family.

    ``direct`` for a reactive run with monotone u, ``reflected`` for a
    non-reactive run with one turning point, ``resonant`` otherwise.
    """
    du = traj.column("du_ds")
    du = du[np.isfinite(du) & (du != 0.0)]
    turns = int(np.count_nonzero(np.diff(np.sign(du)) != 0)) if du.size > 1 else 0
    s_total = traj.samples[-1].s - traj.samples[0].s if traj.samples else 0.0
    if traj.outcome == Outcome.Reactive and turns == 0:
        label = "direct"
    elif traj.outcome == Outcome.NonReactive and turns <= 1:
        label = "reflected"
    else:
        label = "resonant"
    return InternalTimeProfile(turning_points=turns, label=label, s_total=float(s_total))


def chaos_map(
    surface: Surface,
    spec: rp.ReactionPathSpec,
    E_range: tuple[float, float],
    nE: int,
    nPhi: int,
    n: int,
    u_start: float,
    controls: IntegrationControls,
    phi_range: tuple[float, float] = (0.0, 2.0 * math.pi),
    threads: int = 1,
    with_lyapunov: bool = False,
) -> ChaosMap:
    """Outcome grid over E (rows, linspace) and phi (columns, half-open).

    Cells that fail numerically are recorded as Undecided and counted.
    The result does not depend on ``threads``.
    """
    if nE < 1 or nPhi < 1:
        raise DomainError(f"grid sizes must be positive, got nE={nE}, nPhi={nPhi}")
    energies = np.linspace(E_range[0], E_range[1], nE)
    phases = phi_range[0] + (phi_range[1] - phi_range[0]) * np.arange(nPhi) / nPhi
    level = asymptotic_level(surface, spec, n, u_start)
    if energies.min() < level.energy:
        raise ClosedChannelError(f"E_min = {energies.min():.10g} is below eps_{n} = {level.energy:.10g}")

    def cell(ik: tuple[int, int]):
        i, k = ik
        E, phi = float(energies[i]), float(phases[k])
        try:
            init = initial_conditions(surface, spec, E, n, phi, u_start, controls.angular_momentum, level=level)
            traj = integrate(surface, spec, init, E, controls, phi=phi)
            lyap = lyapunov_max(surface, spec, init, E, controls, level=level) if with_lyapunov else math.nan
            return int(traj.outcome), lyap, False
        except ScatterError as exc:
            logger.debug(f"cell (E={E:.8g}, phi={phi:.6g}) failed: {exc}")
            return int(Outcome.Undecided), math.nan, True

    cells = [(i, k) for i in range(nE) for k in range(nPhi)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(cell, cells))
    else:
        results = [cell(c) for c in cells]

    outcomes = np.array([r[0] for r in results], dtype=int).reshape(nE, nPhi)
    lyap = np.array([r[1] for r in results]).reshape(nE, nPhi) if with_lyapunov else None
    failed = tuple(c for c, r in zip(cells, results) if r[2])
    if failed:
        logger.warning(f"{len(failed)} of {len(cells)} map cells failed and were recorded as Undecided")
    cmap = ChaosMap(energies=energies, phases=phases, outcomes=outcomes, n=n, lyapunov=lyap, failures=len(failed), failed_cells=failed)
    logger.info(f"chaos map {nE}x{nPhi}: {cmap.counts()}")
    return cmap
