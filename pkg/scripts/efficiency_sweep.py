"""Energy per 2 km against speed: full simulator vs the closed-form oracle.

    python3 scripts/efficiency_sweep.py --out results/efficiency
"""
import argparse
import csv
from pathlib import Path

from ers_sim.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/efficiency")
    ap.add_argument("--values", default="20:70:5", help="speeds in km/h, start:stop:step or a,b,c")
    args = ap.parse_args()
    code = cli(["sweep", "--preset", "single-vehicle", "--param", "traffic.speed_kmh",
                "--values", args.values, "--out", args.out])
    if code:
        raise SystemExit(code)
    with open(Path(args.out) / "efficiency_curve.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'km/h':>5} {'sim kWh':>9} {'oracle kWh':>11} {'rel err':>8}")
    for r in rows:
        sim, ref = float(r["e_per_2km_kwh"]), float(r["oracle_e_per_2km_kwh"])
        print(f"{float(r['speed_kmh']):5.0f} {sim:9.4f} {ref:11.4f} {(sim - ref) / ref:8.2%}")


if __name__ == "__main__":
    main()
