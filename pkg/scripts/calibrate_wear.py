"""Fit the wear constants (f0, alpha) so the two reference duty profiles hit target lives.

    python3 scripts/calibrate_wear.py --static-years 6 --ers-years 9
"""
import argparse

import numpy as np
from scipy.optimize import fsolve

from ers_sim.battery import estimate_battery_life


def residual(params, targets):
    log_f0, alpha = params
    f0 = float(np.exp(log_f0))
    out = []
    for name, years in targets.items():
        est = estimate_battery_life(name, f0=f0, alpha=alpha)
        out.append(np.log(est.years / years))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--static-years", type=float, default=6.0)
    ap.add_argument("--ers-years", type=float, default=9.0)
    args = ap.parse_args()
    targets = {"static-fast-charge": args.static_years, "ers-dynamic": args.ers_years}
    sol = fsolve(residual, x0=[np.log(3e-5), 0.65], args=(targets,), epsfcn=1e-6)
    f0, alpha = float(np.exp(sol[0])), float(sol[1])
    print(f"f0    = {f0:.5g}")
    print(f"alpha = {alpha:.4f}")
    for name in targets:
        est = estimate_battery_life(name, f0=float(f"{f0:.5g}"), alpha=round(alpha, 4))
        print(f"{name:20s} life {est.years:6.3f} y  deep/yr {est.deep_per_year:6.1f}  EFC/yr {est.efc_per_year:6.1f}")


if __name__ == "__main__":
    main()
