"""Size the Delhi preset's supply side (PV area, buffer, peak import cap, V2G fleet).

Demand barely depends on supply as long as nothing is shed, so the corridor is
simulated once with PV switched off and the dispatch is then replayed offline
for candidate supply settings.

    python3 scripts/calibrate_delhi.py                  # simulate demand first (~2.5 min)
    python3 scripts/calibrate_delhi.py --demand d.npy   # reuse a saved per-step demand series
"""
import argparse
import warnings

import numpy as np
from scipy.optimize import brentq

from ers_sim import engine
from ers_sim.ems import BufferState, SolarModel, dispatch, is_offpeak, solar_available, v2g_available
from ers_sim.scenario import copy_scenario, load_preset


def demand_series(path):
    if path:
        return np.load(path)
    sc = load_preset("delhi-ring-road")
    sc = copy_scenario(sc, energy={"pv_area_m2": 0.0, "buffer_kwh": 0.0, "buffer_max_kw": 0.0,
                                   "grid_peak_kw": None, "v2g_buses": 0})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return engine.run(sc).timeseries["demand_kw"]


class Replay:
    def __init__(self, demand, sc, block_s=10):
        e = sc.energy
        dt = sc.sim.timestep_ms / 1000.0
        k = int(round(block_s / dt))
        n = len(demand) // k * k
        self.demand = demand[:n].reshape(-1, k).mean(axis=1)
        self.dt = k * dt
        clock = sc.sim.start_time_s + (np.arange(len(self.demand)) + 0.5) * self.dt
        tod = clock % 86400.0
        day = (sc.sim.start_day + (clock // 86400.0).astype(int) - 1) % 365 + 1
        self.unit_solar = solar_available(tod, day, 1.0, e.pv_efficiency,
                                          SolarModel(e.annual_insolation_kwh_m2, e.latitude_deg))
        self.off = is_offpeak(tod, e.offpeak_start_h, e.offpeak_end_h)
        self.tod = tod
        self.e = e

    def run(self, pv_area, buffer_kwh, buffer_kw, grid_peak_kw, buses, windows, init_frac):
        e = self.e
        solar = self.unit_solar * pv_area
        v2g = v2g_available(self.tod, buses, e.v2g_kw_per_bus, windows)
        buf = BufferState(buffer_kwh, buffer_kwh * init_frac, buffer_kw, e.buffer_rte)
        tot = dict(solar=0.0, buffer=0.0, grid_offpeak=0.0, grid_peak=0.0, v2g=0.0, deficit=0.0)
        for d, s, off, vg in zip(self.demand, solar, self.off, v2g):
            g_off = e.grid_capacity_kw if off else 0.0
            g_peak = 0.0 if off else grid_peak_kw
            mix, buf = dispatch(float(d), float(s), buf, g_off, g_peak, float(vg), self.dt)
            for key in tot:
                tot[key] += getattr(mix, key)
        supply = sum(v for k, v in tot.items() if k != "deficit")
        return {
            "solar_share": (tot["solar"] + tot["buffer"]) / supply,
            "v2g_share": tot["v2g"] / supply,
            "deficit_kwh": tot["deficit"] * self.dt / 3600.0,
            "end_frac": buf.stored_kwh / buffer_kwh if buffer_kwh else 0.0,
            "kwh": {k: v * self.dt / 3600.0 for k, v in tot.items()},
        }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--demand", help="saved per-step demand_kw series (.npy)")
    ap.add_argument("--solar-share", type=float, default=0.62)
    ap.add_argument("--v2g-share", type=float, default=0.04)
    ap.add_argument("--buffer-hours", type=float, default=3.0, help="buffer energy / buffer power")
    ap.add_argument("--window", type=float, nargs=2, action="append", help="V2G window in hours (repeatable)")
    ap.add_argument("--kw-per-bus", type=float, default=50.0)
    args = ap.parse_args()

    sc = load_preset("delhi-ring-road")
    demand = demand_series(args.demand)
    rp = Replay(demand, sc)
    windows = [list(w) for w in (args.window or [(7.0, 11.0), (17.0, 22.0)])]
    peak_demand = float(rp.demand.max())

    def settings(pv_area, cap_kw=None, buses=0, init=0.5):
        # buffer power sized to the largest midday PV surplus, energy for a few hours of it
        surplus = np.maximum(rp.unit_solar * pv_area - rp.demand, 0.0).max()
        bkw = round(float(surplus), -3)
        return dict(pv_area=pv_area, buffer_kwh=bkw * args.buffer_hours, buffer_kw=bkw,
                    grid_peak_kw=peak_demand if cap_kw is None else cap_kw, buses=buses,
                    windows=windows, init_frac=init)

    def cyclic(kw):
        # start the buffer where a day of operation leaves it
        for _ in range(6):
            out = rp.run(**kw)
            if abs(out["end_frac"] - kw["init_frac"]) < 1e-3:
                break
            kw = dict(kw, init_frac=out["end_frac"])
        return kw, out

    area = brentq(lambda a: cyclic(settings(a))[1]["solar_share"] - args.solar_share, 1e5, 5e6, xtol=1e3)
    area = round(area, -4)
    base, _ = cyclic(settings(area))

    # cap peak-tariff import so the V2G window closes the gap; fleet sized to the worst shortfall
    def v2g_share(cap):
        return cyclic(dict(base, grid_peak_kw=cap, buses=10 ** 6))[1]["v2g_share"] - args.v2g_share

    cap = brentq(v2g_share, 0.2 * peak_demand, peak_demand, xtol=100.0)
    cap = round(cap, -3)
    lo, hi = 0, 10 ** 5
    while hi - lo > 1:  # smallest fleet with no deficit
        mid = (lo + hi) // 2
        if cyclic(dict(base, grid_peak_kw=cap, buses=mid))[1]["deficit_kwh"] > 1e-6:
            lo = mid
        else:
            hi = mid
    buses = int(np.ceil(hi / 10.0) * 10)
    final, out = cyclic(dict(base, grid_peak_kw=cap, buses=buses))

    print("[energy]")
    print(f"pv_area_m2 = {final['pv_area']:.0f}")
    print(f"buffer_kwh = {final['buffer_kwh']:.0f}")
    print(f"buffer_max_kw = {final['buffer_kw']:.0f}")
    print(f"buffer_initial_frac = {final['init_frac']:.3f}")
    print(f"grid_peak_kw = {final['grid_peak_kw']:.0f}")
    print(f"v2g_buses = {final['buses']}")
    print("v2g_windows = [" + ", ".join(f"[{a:g}, {b:g}]" for a, b in windows) + "]")
    print(f"# solar share {out['solar_share']:.3f}  v2g share {out['v2g_share']:.3f}  "
          f"deficit {out['deficit_kwh']:.1f} kWh")


if __name__ == "__main__":
    main()
