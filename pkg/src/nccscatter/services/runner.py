"""Run orchestration for the CLI subcommands.

A :class:`Runner` owns one validated configuration, derives the values the
configuration leaves open (curve constant, asymptotic limits) and writes every artifact of a command into the output directory.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from nccscatter.lib import reaction_path as rp
from nccscatter.lib.channels import ChannelBasis, vibrational_eigenstates
from nccscatter.lib.config import PesFile, RunConfig, load_leps_parameters
from nccscatter.lib.coupled import CoupledSystem, solve_coupled_static, solve_coupled_tube
from nccscatter.lib.errors import ConfigError, DomainError, NoSaddleError, ScatterError
from nccscatter.lib.geodesic import (
    IntegrationControls,
    asymptotic_level,
    chaos_map,
    initial_conditions,
    integrate,
    internal_time_profile,
    lyapunov_max,
    phase_period,
)
from nccscatter.lib.pes import LepsSurface, asymptotic_limits, collinear_potential, u_bar, u_eff
from nccscatter.lib.phase_average import MeasureBuilder, average_probability, measure_from_map, refine_until_converged
from nccscatter.lib.saddle import Saddle, find_saddle, path_constant_from_saddle
from nccscatter.lib.units import UNITS, MassSystem
from nccscatter.models.measure import PhaseMeasure, Rectangle
from nccscatter.models.scattering import ScatteringMatrix
from nccscatter.models.trajectory import Outcome
from nccscatter.services import artifacts

logger = logging.getLogger(__name__)

ENERGY_MATCH_TOL = 1e-9
TWO_PI = 2.0 * math.pi


def _circular_distance(a: float, b: float) -> float:
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)


@dataclass
class RunResult:
    command: str
    artifacts: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    manifest: Optional[Path] = None


class Runner:
    """Executes subcommands against one configuration."""

    def __init__(
        self,
        config: RunConfig,
        out_dir: str | Path,
        threads: Optional[int] = None,
        seed: Optional[int] = None,
        plot_script: bool = False,
    ):
        self.config = config.with_values("run", threads=threads, seed=seed)
        self.out_dir = Path(out_dir)
        self.threads = max(1, int(self.config.get("run", "threads")))
        self.seed = int(self.config.get("run", "seed"))
        self.plot_script = plot_script
        m = self.config.values["masses"]
        self.ms: MassSystem = MassSystem.from_amu(m["mA_amu"], m["mB_amu"], m["mC_amu"])
        self.pes: PesFile = load_leps_parameters(self.config.pes_path, strict=self.config.strict)
        self.surface = LepsSurface(self.ms, self.pes.params)
        self._saddle: Optional[Saddle] = None
        self._spec: Optional[rp.ReactionPathSpec] = None
        self._limits_done = False
        self._basis: Optional[ChannelBasis] = None
        self._system: Optional[CoupledSystem] = None
        logger.info(f"mass system: mu={self.ms.mu:.6f} me, lambda={self.ms.lam:.6f}, b={self.ms.b:.6f}")

    # -- derived quantities -------------------------------------------------

    def _derive(self, section: str, key: str, value) -> None:
        self.config = self.config.with_derived(section, key, value)
        logger.info(f"derived {section}.{key} = {value!r}")

    @property
    def saddle(self) -> Saddle:
        if self._saddle is None:
            self._saddle = find_saddle(self.surface)
        return self._saddle

    @property
    def spec(self) -> rp.ReactionPathSpec:
        if self._spec is None:
            path = self.config.values["path"]
            if path["a"] is None:
                self._derive("path", "a", path_constant_from_saddle(self.surface, self.saddle))
            if path["q_eq_minus_A"] is None:
                self._derive("path", "q_eq_minus_A", UNITS.to_angstrom(self.pes.params.bc.re))
            if path["q_eq_plus_A"] is None:
                self._derive("path", "q_eq_plus_A", UNITS.to_angstrom(self.pes.params.ab.re))
            path = self.config.values["path"]
            self._spec = rp.ReactionPathSpec.from_bond_lengths(
                self.ms,
                path["a"],
                UNITS.angstrom(path["q_eq_minus_A"]),
                UNITS.angstrom(path["q_eq_plus_A"]),
                path["u0"],
            )
        return self._spec

    def ensure_limits(self) -> None:
        """Fill the u thresholds and grid ends the configuration leaves open."""
        if self._limits_done:
            return
        integ = self.config.values["integrator"]
        quantum = self.config.values["quantum"]
        needed = [integ["u_react"], integ["u_nonreact"], integ["u_start"], quantum["u_min"], quantum["u_max"]]
        if any(v is None for v in needed):
            u_nonreact, u_react = asymptotic_limits(self.surface, self.spec)
            if integ["u_nonreact"] is None:
                self._derive("integrator", "u_nonreact", u_nonreact)
            if integ["u_react"] is None:
                self._derive("integrator", "u_react", u_react)
            if integ["u_start"] is None:
                self._derive("integrator", "u_start", self.config.get("integrator", "u_nonreact"))
            if quantum["u_min"] is None:
                self._derive("quantum", "u_min", self.config.get("integrator", "u_nonreact"))
            if quantum["u_max"] is None:
                self._derive("quantum", "u_max", self.config.get("integrator", "u_react"))
        self._limits_done = True

    def controls(self) -> IntegrationControls:
        self.ensure_limits()
        i = self.config.values["integrator"]
        return IntegrationControls(
            rtol=i["rtol"],
            atol=i["atol"],
            s_max=i["s_max"],
            output_stride=i["output_stride"],
            u_react=i["u_react"],
            u_nonreact=i["u_nonreact"],
            angular_momentum=i["angular_momentum"],
            delta0=i["lyapunov_delta0"],
            renorm_fraction=i["lyapunov_renorm_fraction"],
        )

    def energy(self, section: str, key: str) -> float:
        value = self.config.get(section, key)
        if value is None:
            raise ConfigError(f"{section}.{key} must be set for this command", path=self.config.source)
        return UNITS.ev(value)

    def u_grid(self) -> np.ndarray:
        self.ensure_limits()
        q = self.config.values["quantum"]
        if not q["u_min"] < q["u_max"]:
            raise DomainError(f"quantum.u_min ({q['u_min']}) must lie below quantum.u_max ({q['u_max']})")
        return np.linspace(q["u_min"], q["u_max"], q["u_steps"])

    def v_grid(self) -> np.ndarray:
        """Common transverse grid; each u slice keeps its part clear of the self-crossing region."""
        q = self.config.values["quantum"]
        if not q["v_min"] < q["v_max"]:
            raise DomainError(f"v range [{q['v_min']}, {q['v_max']}] is empty")
        return np.linspace(q["v_min"], q["v_max"], q["v_steps"])

    def basis(self) -> ChannelBasis:
        if self._basis is None:
            u = self.u_grid()
            q = self.config.values["quantum"]
            self._basis = vibrational_eigenstates(self.surface, self.spec, u, self.v_grid(), q["channels"], j=q["j"], threads=self.threads)
        return self._basis

    def system(self) -> CoupledSystem:
        if self._system is None:
            self._system = CoupledSystem.from_basis(self.basis(), self.spec, self.ms.mu)
        return self._system

    def _csv(self, result: RunResult, name: str, columns: Sequence[str], rows, plot: Optional[tuple] = None) -> Path:
        path = artifacts.write_csv(self.out_dir / name, columns, rows)
        result.artifacts.append(path)
        if self.plot_script and plot is not None:
            result.artifacts.append(artifacts.write_plot_script(path, *plot))
        return path

    def finish(self, result: RunResult, started: float) -> RunResult:
        result.manifest = artifacts.write_manifest(
            self.out_dir,
            result.command,
            self.config.effective(),
            self.config.derived,
            result.artifacts,
            audit=result.audit,
            summary=result.summary,
            wall_time=time.time() - started,
            seed=self.seed,
        )
        return result

    # -- subcommands ----------------------------------------------------------

    def path_table(self) -> RunResult:
        started = time.time()
        result = RunResult("path-table")
        u = self.u_grid()
        q0c, q1c = rp.curve_point(self.spec, u)
        phi = rp.phi_of_u(self.spec, u)
        K, ds_du, _ = rp.curvature_data(self.spec, u)
        rows = zip(u, q1c, q0c, phi, K, ds_du)
        self._csv(result, "path_table.csv", ["u_bohr", "q1c_bohr", "q0c_bohr", "phi_rad", "K_invbohr", "ds_du"], rows, plot=("q1c_bohr", "q0c_bohr"))
        result.summary = {"points": int(u.size), "a": self.spec.a}
        result.audit = {"u_monotone": bool(np.all(np.diff(u) > 0.0)), "ds_du_positive": bool(np.all(ds_du > 0.0))}
        return self.finish(result, started)

    def pes_slice(self) -> RunResult:
        started = time.time()
        result = RunResult("pes-slice")
        u = self.u_grid()
        v = self.v_grid()
        U, V = np.meshgrid(u, v, indexing="ij")
        U, V = U.ravel(), V.ravel()
        Uc = collinear_potential(self.surface, self.spec, U, V)
        # the curved-frame terms are left undefined past the stretch floor
        K, _, _ = rp.curvature_data(self.spec, U)
        ok = 1.0 + K * V > rp.MIN_STRETCH
        Ue = np.full(U.shape, np.nan)
        Ub = np.full(U.shape, np.nan)
        Ue[ok] = u_eff(self.spec, U[ok], V[ok], mu=self.ms.mu)
        Ub[ok] = u_bar(self.surface, self.spec, U[ok], V[ok])
        rows = zip(U, V, UNITS.to_ev(Uc), UNITS.to_ev(Ue), UNITS.to_ev(Ub))
        self._csv(result, "pes_slice.csv", ["u_bohr", "v_bohr", "U_collinear_eV", "U_eff_eV", "U_bar_eV"], rows, plot=("u_bohr", "v_bohr", "", "points", "U_collinear_eV"))
        result.summary = {"points": int(U.size), "U_min_eV": float(UNITS.to_ev(np.min(Uc))), "cut_points": int(np.count_nonzero(~ok))}
        return self.finish(result, started)

    def trajectory(self, with_lyapunov: bool = False) -> RunResult:
        started = time.time()
        result = RunResult("trajectory")
        E = self.energy("trajectory", "E_eV")
        t = self.config.values["trajectory"]
        controls = self.controls()
        u_start = self.config.get("integrator", "u_start")
        level = asymptotic_level(self.surface, self.spec, t["n"], u_start)
        init = initial_conditions(self.surface, self.spec, E, t["n"], t["phi_rad"], u_start, controls.angular_momentum, level=level)
        traj = integrate(self.surface, self.spec, init, E, controls, phi=t["phi_rad"])
        norm0 = traj.conserved_norm[0]
        rows = (
            (st.s, st.x[0], st.x[1], st.x[2], st.xdot[0], st.xdot[1], st.xdot[2], nrm / norm0 - 1.0)
            for st, nrm in zip(traj.samples, traj.conserved_norm)
        )
        self._csv(result, "trajectory.csv", ["s", "u_bohr", "v_bohr", "theta_rad", "du_ds", "dv_ds", "dtheta_ds", "norm_residual"], rows, plot=("u_bohr", "v_bohr"))
        profile = internal_time_profile(traj)
        result.summary = {
            "outcome": traj.outcome.name,
            "terminated": traj.terminated,
            "samples": len(traj),
            "profile": profile.label,
            "turning_points": profile.turning_points,
            "s_total": profile.s_total,
            "phase_period_bohr": phase_period(self.surface, self.spec, E, t["n"], u_start, level=level),
            "level_energy_eV": UNITS.to_ev(level.energy),
        }
        if with_lyapunov:
            result.summary["lyapunov"] = lyapunov_max(self.surface, self.spec, init, E, controls, level=level)
        result.audit = {"norm_drift": traj.norm_drift}
        return self.finish(result, started)

    def chaos_map(self, with_lyapunov: bool = False) -> RunResult:
        started = time.time()
        result = RunResult("chaos-map")
        sw = self.config.values["sweep"]
        E_range = (self.energy("sweep", "E_min_eV"), self.energy("sweep", "E_max_eV"))
        controls = self.controls()
        cmap = chaos_map(
            self.surface,
            self.spec,
            E_range,
            sw["nE"],
            sw["nPhi"],
            sw["n"],
            self.config.get("integrator", "u_start"),
            controls,
            threads=self.threads,
            with_lyapunov=with_lyapunov,
        )
        columns = ["E_eV", "phi_rad", "outcome"] + (["lyapunov"] if with_lyapunov else [])
        rows = (
            (UNITS.to_ev(E), phi, out) + ((lyap,) if with_lyapunov else ())
            for E, phi, out, lyap in cmap.rows()
        )
        self._csv(result, "chaos_map.csv", columns, rows, plot=("phi_rad", "E_eV", "", "points", "outcome"))
        result.summary = {"shape": list(cmap.shape), "counts": cmap.counts()}
        result.audit = {"failed_cells": cmap.failures}
        return self.finish(result, started)

    def spectrum(self) -> RunResult:
        started = time.time()
        result = RunResult("spectrum")
        basis = self.basis()
        rows = ((u, n, UNITS.to_ev(basis.energies[k, n])) for k, u in enumerate(basis.u_grid) for n in range(basis.channels))
        self._csv(result, "spectrum.csv", ["u_bohr", "n", "epsilon_eV"], rows, plot=("u_bohr", "epsilon_eV", "", "points"))
        result.summary = {
            "channels": basis.channels,
            "reactant_thresholds_eV": UNITS.to_ev(basis.energies[0]).tolist(),
            "product_thresholds_eV": UNITS.to_ev(basis.energies[-1]).tolist(),
        }
        return self.finish(result, started)

    def _tube(self, E: float, phi: float, n: int, controls: IntegrationControls, level) -> ScatteringMatrix:
        """Tube S-matrix; resonant tubes fall back to the static S-matrix."""
        u_start = self.config.get("integrator", "u_start")
        init = initial_conditions(self.surface, self.spec, E, n, phi, u_start, controls.angular_momentum, level=level)
        traj = integrate(self.surface, self.spec, init, E, controls, phi=phi)
        q = self.config.values["quantum"]
        S = solve_coupled_tube(self.system(), E, traj, q["reorth_stride"], q["max_phase_step"])
        if S.resonant:
            logger.warning(f"tube at phi={phi:.8g} is resonant; using the static S-matrix")
            static = solve_coupled_static(self.system(), E, q["reorth_stride"], q["max_phase_step"])
            S = ScatteringMatrix(
                energy=static.energy,
                p_reactant=static.p_reactant,
                p_product=static.p_product,
                amplitudes=static.amplitudes,
                unitarity_residual=static.unitarity_residual,
                mode="tube",
                phi=phi,
                resonant=True,
                u_interval=static.u_interval,
            )
        return S

    def _phases(self, phis: Optional[Sequence[float]]) -> list[float]:
        """Explicit phases, or nPhi cell centres offset by scatter.phi_rad."""
        if phis:
            return [float(p) for p in phis]
        s = self.config.values["scatter"]
        return [s["phi_rad"] + TWO_PI * (k + 0.5) / s["nPhi"] for k in range(s["nPhi"])]

    def scatter(self, phis: Optional[Sequence[float]] = None) -> RunResult:
        started = time.time()
        result = RunResult("scatter")
        s = self.config.values["scatter"]
        q = self.config.values["quantum"]
        E0 = self.energy("scatter", "E_eV")
        E1 = UNITS.ev(s["E_max_eV"]) if s["E_max_eV"] is not None else E0
        energies = np.linspace(E0, E1, s["nE"]) if s["nE"] > 1 else np.array([E0])
        system = self.system()
        matrices: list[ScatteringMatrix] = []
        if q["mode"] == "static":
            for E in energies:
                matrices.append(solve_coupled_static(system, float(E), q["reorth_stride"], q["max_phase_step"]))
        else:
            controls = self.controls()
            n = self.config.get("trajectory", "n")
            level = asymptotic_level(self.surface, self.spec, n, self.config.get("integrator", "u_start"))
            for E in energies:
                for phi in self._phases(phis):
                    matrices.append(self._tube(float(E), phi, n, controls, level))

        def rows():
            for S in matrices:
                labels = S.labels()
                for ci, inc in enumerate(labels):
                    for ri, out in enumerate(labels):
                        amp = complex(S.amplitudes[ri, ci])
                        yield (UNITS.to_ev(S.energy), S.phi, S.mode, S.resonant, inc[0], inc[1], out[0], out[1], amp.real, amp.imag, abs(amp) ** 2)

        columns = ["E_eV", "phi_rad", "mode", "resonant", "arr_in", "n_in", "arr_out", "n_out", "S_re", "S_im", "prob"]
        self._csv(result, "scatter.csv", columns, rows(), plot=("E_eV", "prob", "", "points"))
        residuals = [S.unitarity_residual for S in matrices if not S.resonant]
        result.audit = {"unitarity_residual_max": max(residuals) if residuals else math.nan}
        result.summary = {
            "mode": q["mode"],
            "matrices": len(matrices),
            "resonant": sum(1 for S in matrices if S.resonant),
            "open_reactant": [S.n_reactant for S in matrices],
            "open_product": [S.n_product for S in matrices],
        }
        return self.finish(result, started)

    # -- phase average ----------------------------------------------------------

    def _measure_from_map(self, map_path: str | Path, E: float, delta_e: float) -> PhaseMeasure:
        rows = artifacts.read_csv(map_path, required=["E_eV", "phi_rad", "outcome"])
        energies = sorted({artifacts.parse_float(r["E_eV"]) for r in rows})
        phases = sorted({artifacts.parse_float(r["phi_rad"]) for r in rows})
        grid = np.full((len(energies), len(phases)), int(Outcome.Undecided), dtype=int)
        e_index = {e: i for i, e in enumerate(energies)}
        p_index = {p: k for k, p in enumerate(phases)}
        for r in rows:
            grid[e_index[artifacts.parse_float(r["E_eV"])], p_index[artifacts.parse_float(r["phi_rad"])]] = int(r["outcome"])
        av = self.config.values["average"]
        return measure_from_map(UNITS.ev(np.array(energies)), phases, grid, E, delta_e, av["rectangles"], av["undecided"], av["sigma_target"])

    def _measure_live(self, E: float, delta_e: float) -> PhaseMeasure:
        av = self.config.values["average"]
        n = self.config.get("sweep", "n")
        controls = self.controls()
        u_start = self.config.get("integrator", "u_start")
        level = asymptotic_level(self.surface, self.spec, n, u_start)

        def classify(e: float, phi: float) -> Outcome:
            try:
                init = initial_conditions(self.surface, self.spec, e, n, phi, u_start, controls.angular_momentum, level=level)
                return integrate(self.surface, self.spec, init, e, controls, phi=phi).outcome
            except ScatterError as exc:
                logger.debug(f"node (E={e:.8g}, phi={phi:.6g}) failed: {exc}")
                return Outcome.Undecided

        builder = MeasureBuilder(classify, E, delta_e, av["rectangles"], threads=self.threads)
        return refine_until_converged(builder, av["tol"], av["max_subdivision"], av["initial_nodes"], av["undecided"], av["sigma_target"])

    def _probabilities_from_csv(self, scatter_path: str | Path, E_eV: float, n: int, cells: dict[int, Rectangle]) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Per-rectangle (reaction row, reflection row) for incoming reactant n, read from a scatter CSV.

        Static rows serve every rectangle. Tube rows are assigned to the
        rectangle whose [phi_lo, phi_hi) holds their phase (mod 2 pi) and
        averaged there; a rectangle with no tube of its own takes the
        nearest one.
        """
        rows = artifacts.read_csv(scatter_path, required=["E_eV", "phi_rad", "arr_in", "n_in", "arr_out", "n_out", "prob"])
        rows = [r for r in rows if r["arr_in"] == "reactant" and int(r["n_in"]) == n]
        rows = [r for r in rows if abs(artifacts.parse_float(r["E_eV"]) - E_eV) <= ENERGY_MATCH_TOL * max(1.0, abs(E_eV))]
        if not rows:
            raise DomainError(f"{scatter_path} has no reactant channel {n} rows at E = {E_eV:.10g} eV")
        by_phi: dict[float, dict[tuple[str, int], float]] = {}
        for r in rows:
            by_phi.setdefault(artifacts.parse_float(r["phi_rad"]), {})[(r["arr_out"], int(r["n_out"]))] = float(r["prob"])

        def rows_of(table):
            react = [table[k] for k in sorted(k for k in table if k[0] == "product")]
            refl = [table[k] for k in sorted(k for k in table if k[0] == "reactant")]
            return np.array(react), np.array(refl)

        static = [p for p in by_phi if math.isnan(p)]
        if static:
            return {i: rows_of(by_phi[static[0]]) for i in cells}
        tubes = sorted(by_phi)
        out = {}
        for i, cell in cells.items():
            inside = [p for p in tubes if (p - cell.phi_lo) % TWO_PI < cell.phi_hi - cell.phi_lo]
            if not inside:
                nearest = min(tubes, key=lambda p: _circular_distance(p, cell.phi_center))
                logger.warning(f"rectangle {i} holds no tube phase; using the tube at phi = {nearest:.10g}")
                inside = [nearest]
            pairs = [rows_of(by_phi[p]) for p in inside]
            out[i] = (np.mean([a for a, _ in pairs], axis=0), np.mean([b for _, b in pairs], axis=0))
        return out

    def _probabilities_live(self, E: float, n: int, centers: dict[int, float]) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        q = self.config.values["quantum"]
        if q["mode"] == "static":
            S = solve_coupled_static(self.system(), E, q["reorth_stride"], q["max_phase_step"])
            if n >= S.n_reactant:
                raise DomainError(f"reactant channel {n} is closed at E = {E:.10g}")
            pair = (S.reaction_probabilities()[n], S.reflection_probabilities()[n])
            return {i: pair for i in centers}
        controls = self.controls()
        level = asymptotic_level(self.surface, self.spec, n, self.config.get("integrator", "u_start"))
        out = {}
        for i, phi in centers.items():
            S = self._tube(E, phi, n, controls, level)
            out[i] = (S.reaction_probabilities()[n], S.reflection_probabilities()[n])
        return out

    def average(self, map_path: Optional[str | Path] = None, scatter_path: Optional[str | Path] = None) -> RunResult:
        started = time.time()
        result = RunResult("average")
        av = self.config.values["average"]
        E = self.energy("average", "energy_eV")
        delta_e = UNITS.ev(av["delta_e_eV"])
        n = self.config.get("sweep", "n")
        measure = self._measure_from_map(map_path, E, delta_e) if map_path else self._measure_live(E, delta_e)
        cells = {r.index: r for r in measure.rectangles if r.sigma > 0.0}
        if not cells:
            # raises NoReactiveMeasureError
            average_probability(measure, {}, n, 0)
        if scatter_path:
            probs = self._probabilities_from_csv(scatter_path, av["energy_eV"], n, cells)
        else:
            probs = self._probabilities_live(E, n, {i: r.phi_center for i, r in cells.items()})

        averaged = []
        n_prod = min(len(p[0]) for p in probs.values())
        n_refl = min(len(p[1]) for p in probs.values())
        for m in range(n_prod):
            averaged.append(average_probability(measure, {i: p[0][m] for i, p in probs.items()}, n, m, "product"))
        for m in range(n_refl):
            averaged.append(average_probability(measure, {i: p[1][m] for i, p in probs.items()}, n, m, "reactant"))

        rect_rows = (
            (r.index, r.phi_center, r.phi_lo, r.phi_hi, UNITS.to_ev(r.E_lo), UNITS.to_ev(r.E_hi), r.l, r.k, r.reactive, r.counted, r.undecided, r.sigma, r.converged)
            for r in measure.rectangles
        )
        self._csv(
            result,
            "measure.csv",
            ["index", "phi_center_rad", "phi_lo_rad", "phi_hi_rad", "E_lo_eV", "E_hi_eV", "l", "k", "reactive", "counted", "undecided", "sigma", "converged"],
            rect_rows,
            plot=("phi_center_rad", "sigma", "", "steps"),
        )
        rows = ((UNITS.to_ev(a.E), a.n, a.arrangement, a.m, a.W, a.sigma_total, a.cells_unconverged) for a in averaged)
        self._csv(result, "average.csv", ["E_eV", "n", "arrangement", "m", "W", "sigma_total", "cells_unconverged"], rows, plot=("m", "W", "", "points"))
        result.summary = {
            "sigma_total": measure.sigma_total,
            "regular": measure.is_regular,
            "W_product": [a.W for a in averaged if a.arrangement == "product"],
            "W_reflected": [a.W for a in averaged if a.arrangement == "reactant"],
        }
        result.audit = {
            "flux_sum": float(sum(a.W for a in averaged)),
            "cells_unconverged": measure.cells_unconverged,
        }
        return self.finish(result, started)

    def find_saddle(self) -> RunResult:
        started = time.time()
        result = RunResult("find-saddle")
        try:
            sd = self.saddle
        except NoSaddleError as exc:
            if exc.scan is not None:
                self._csv(result, "saddle_scan.csv", ["q0_bohr", "q1_bohr", "V_eV", "grad_norm"], ((r[0], r[1], UNITS.to_ev(r[2]), r[3]) for r in exc.scan))
            raise
        row = (
            UNITS.to_angstrom(sd.r_ab),
            UNITS.to_angstrom(sd.r_bc),
            sd.q0,
            sd.q1,
            UNITS.to_ev(sd.energy),
            sd.gradient_norm,
            sd.hessian_eigenvalues[0],
            sd.hessian_eigenvalues[1],
        )
        self._csv(result, "saddle.csv", ["r_AB_A", "r_BC_A", "q0_bohr", "q1_bohr", "V_eV", "grad_norm", "hessian_min", "hessian_max"], [row])
        result.summary = {
            "r_AB_A": row[0],
            "r_BC_A": row[1],
            "V_eV": row[4],
            "path_a": path_constant_from_saddle(self.surface, sd),
        }
        result.audit = {"gradient_norm": sd.gradient_norm, "signature_ok": sd.hessian_eigenvalues[0] < 0.0 < sd.hessian_eigenvalues[1]}
        return self.finish(result, started)
