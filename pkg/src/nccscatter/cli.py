import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable

from nccscatter.lib.config import load_config
from nccscatter.lib.errors import ScatterError
from nccscatter.services import artifacts
from nccscatter.services.runner import RunResult, Runner

logger = logging.getLogger(__name__)


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(format="[%(module)-12s] %(message)s", level=level, force=True)


def _apply_overrides(config, args):
    """CLI flags override config values; flags that are absent leave them alone."""
    config = config.with_values(
        "quantum",
        channels=getattr(args, "channels", None),
        u_min=getattr(args, "u_min", None),
        u_max=getattr(args, "u_max", None),
        u_steps=getattr(args, "u_steps", None),
        v_steps=getattr(args, "v_steps", None),
        mode=getattr(args, "mode", None),
    )
    if args.cmd == "trajectory":
        config = config.with_values("trajectory", E_eV=args.energy_ev, phi_rad=args.phi, n=args.n)
    elif args.cmd == "chaos-map":
        config = config.with_values("sweep", E_min_eV=args.e_min_ev, E_max_eV=args.e_max_ev, nE=args.n_e, nPhi=args.n_phi, n=args.n)
    elif args.cmd == "scatter":
        config = config.with_values("scatter", E_eV=args.energy_ev, E_max_eV=args.energy_max_ev, nE=args.n_e, nPhi=args.n_phi)
    elif args.cmd == "average":
        config = config.with_values("average", energy_eV=args.energy_ev, delta_e_eV=args.delta_e_ev, rectangles=args.rectangles)
    return config


def _execute(args, action: Callable[[Runner], RunResult]) -> int:
    out = Path(args.out)
    started = time.time()
    try:
        config = load_config(args.config, strict=args.strict)
        config = _apply_overrides(config, args)
        runner = Runner(config, out, threads=args.threads, seed=args.seed, plot_script=args.plot_script)
        result = action(runner)
    except ScatterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        artifacts.write_error_record(out, args.cmd, exc)
        return exc.exit_code
    for path in result.artifacts:
        print(f"Wrote: {path}")
    for key, value in result.summary.items():
        print(f"  {key}: {value}")
    for key, value in result.audit.items():
        print(f"  audit {key}: {value}")
    print(f"{args.cmd} finished in {time.time() - started:.2f}s")
    return 0


def path_table(args) -> int:
    return _execute(args, lambda r: r.path_table())


def pes_slice(args) -> int:
    return _execute(args, lambda r: r.pes_slice())


def trajectory(args) -> int:
    return _execute(args, lambda r: r.trajectory(with_lyapunov=args.lyapunov))


def chaos_map(args) -> int:
    return _execute(args, lambda r: r.chaos_map(with_lyapunov=args.lyapunov))


def spectrum(args) -> int:
    return _execute(args, lambda r: r.spectrum())


def scatter(args) -> int:
    return _execute(args, lambda r: r.scatter(phis=args.phi))


def average(args) -> int:
    return _execute(args, lambda r: r.average(map_path=args.map, scatter_path=args.scatter))


def find_saddle(args) -> int:
    return _execute(args, lambda r: r.find_saddle())


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="config.ini", help="Path to INI config file (default: config.ini)")
    common.add_argument("--out", default="out", help="Output directory for CSV artifacts and the run manifest")
    common.add_argument("--threads", type=int, help="Override config: worker threads")
    common.add_argument("--seed", type=int, help="Override config: random seed recorded in the manifest")
    strict = common.add_mutually_exclusive_group()
    strict.add_argument("--strict", dest="strict", action="store_true", default=True, help="Reject unknown config keys (default)")
    strict.add_argument("--permissive", dest="strict", action="store_false", help="Warn about unknown config keys instead of failing")
    common.add_argument("--plot-script", action="store_true", help="Write a gnuplot script next to each CSV")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for numerical detail")
    return common


def _quantum_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--channels", type=int, help="Override config: number of channels N")
    p.add_argument("--u-min", type=float, help="Override config: lower end of the u grid (bohr)")
    p.add_argument("--u-max", type=float, help="Override config: upper end of the u grid (bohr)")
    p.add_argument("--u-steps", type=int, help="Override config: u grid size")
    p.add_argument("--v-steps", type=int, help="Override config: v grid size")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="nccscatter")
    sub = parser.add_subparsers(dest="cmd")
    common = _common_parser()

    p_path = sub.add_parser("path-table", parents=[common], help="Tabulate the reaction curve")
    _quantum_flags(p_path)
    p_path.set_defaults(func=path_table)

    p_pes = sub.add_parser("pes-slice", parents=[common], help="Tabulate U, U_eff and U_bar on the (u, v) grid")
    _quantum_flags(p_pes)
    p_pes.set_defaults(func=pes_slice)

    p_traj = sub.add_parser("trajectory", parents=[common], help="Integrate one generating trajectory")
    p_traj.add_argument("--energy-ev", type=float, help="Override config: total energy (eV)")
    p_traj.add_argument("--phi", type=float, help="Override config: initial vibrational phase (rad)")
    p_traj.add_argument("--n", type=int, help="Override config: vibrational level")
    p_traj.add_argument("--lyapunov", action="store_true", help="Also estimate the leading Lyapunov exponent")
    p_traj.set_defaults(func=trajectory)

    p_map = sub.add_parser("chaos-map", parents=[common], help="Outcome map over energy and phase")
    p_map.add_argument("--e-min-ev", type=float, help="Override config: lowest energy (eV)")
    p_map.add_argument("--e-max-ev", type=float, help="Override config: highest energy (eV)")
    p_map.add_argument("--n-e", type=int, help="Override config: number of energies")
    p_map.add_argument("--n-phi", type=int, help="Override config: number of phases")
    p_map.add_argument("--n", type=int, help="Override config: vibrational level")
    p_map.add_argument("--lyapunov", action="store_true", help="Add a Lyapunov exponent column")
    p_map.set_defaults(func=chaos_map)

    p_spec = sub.add_parser("spectrum", parents=[common], help="Transverse eigenvalues along u")
    _quantum_flags(p_spec)
    p_spec.set_defaults(func=spectrum)

    p_scat = sub.add_parser("scatter", parents=[common], help="S-matrix at one energy or over an energy scan")
    _quantum_flags(p_scat)
    p_scat.add_argument("--mode", choices=["static", "tube"], help="Override config: static or tube propagation")
    p_scat.add_argument("--energy-ev", type=float, help="Override config: energy (eV)")
    p_scat.add_argument("--energy-max-ev", type=float, help="Override config: end of the energy scan (eV)")
    p_scat.add_argument("--n-e", type=int, help="Override config: number of scan energies")
    p_scat.add_argument("--phi", type=float, action="append", help="Tube phase (rad); repeat for several tubes")
    p_scat.add_argument("--n-phi", type=int, help="Override config: evenly spaced tube phases")
    p_scat.set_defaults(func=scatter)

    p_avg = sub.add_parser("average", parents=[common], help="Phase-averaged transition probabilities")
    _quantum_flags(p_avg)
    p_avg.add_argument("--mode", choices=["static", "tube"], help="Override config: static or tube propagation")
    p_avg.add_argument("--energy-ev", type=float, help="Override config: window centre (eV)")
    p_avg.add_argument("--delta-e-ev", type=float, help="Override config: window width (eV)")
    p_avg.add_argument("--rectangles", type=int, help="Override config: number of phase rectangles")
    p_avg.add_argument("--map", help="Chaos-map CSV to take the phase measure from")
    p_avg.add_argument("--scatter", help="Scatter CSV to take the transition probabilities from")
    p_avg.set_defaults(func=average)

    p_saddle = sub.add_parser("find-saddle", parents=[common], help="Locate the collinear saddle point")
    p_saddle.set_defaults(func=find_saddle)

    args = parser.parse_args(argv)
    if hasattr(args, "func"):
        _setup_logging(args.verbose)
        return args.func(args)
    parser.print_help()
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
