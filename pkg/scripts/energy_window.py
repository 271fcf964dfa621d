#!/usr/bin/env python
"""Chaos map, scatter and phase average for one energy window in one output directory."""
import argparse
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from nccscatter.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description="Map, scatter and average around one energy")
    parser.add_argument("--config", default="config.ini", help="Path to config.ini")
    parser.add_argument("--out", default="out/window", help="Output directory")
    parser.add_argument("--energy-ev", type=float, required=True, help="Window centre (eV)")
    parser.add_argument("--delta-e-ev", type=float, default=0.02, help="Window width (eV)")
    parser.add_argument("--n-phi", type=int, default=16, help="Phases per map row")
    parser.add_argument("--mode", choices=["static", "tube"], default="static")
    parser.add_argument("--threads", type=int, default=4, help="Number of worker threads")
    args = parser.parse_args()

    out = Path(args.out)
    half = 0.5 * args.delta_e_ev
    common = ["--config", args.config, "--threads", str(args.threads)]
    steps = [
        ["chaos-map", *common, "--out", str(out / "map"), "--e-min-ev", str(args.energy_ev - half),
         "--e-max-ev", str(args.energy_ev + half), "--n-e", "3", "--n-phi", str(args.n_phi)],
        ["scatter", *common, "--out", str(out / "scatter"), "--mode", args.mode,
         "--energy-ev", str(args.energy_ev), "--n-phi", str(args.n_phi)],
        ["average", *common, "--out", str(out / "average"), "--mode", args.mode, "--energy-ev", str(args.energy_ev),
         "--delta-e-ev", str(args.delta_e_ev), "--map", str(out / "map" / "chaos_map.csv"),
         "--scatter", str(out / "scatter" / "scatter.csv")],
    ]
    for argv in steps:
        print(f"\n== nccscatter {argv[0]}")
        code = cli_main(argv)
        if code != 0:
            print(f"{argv[0]} failed with exit code {code}")
            return code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
