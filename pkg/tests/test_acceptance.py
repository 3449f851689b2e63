"""Acceptance criteria 1-11.

Each test records one ``[PASS]``/``[FAIL]`` line; the lines are echoed in an
``acceptance criteria`` section at the end of the pytest run.  Run directly with
``python tests/test_acceptance.py`` to execute only this file.
"""
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ers_sim import engine
from ers_sim.cli import main as cli_main
from ers_sim.ems import dispatch, forecast_demand
from ers_sim.transfer import energy_per_distance
from ers_sim.v2i import AlertKind, verify_ledger

from conftest import ACCEPTANCE_LINES, quiet_preset, small_corridor

SPEEDS = list(range(20, 71, 5))


def record(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def oracle_e2km(speed_kmh):
    """Independent closed form: 100 kW x 0.72 coverage x eta(v) x duty(v) x hours on 2 km."""
    eta = float(np.interp(speed_kmh, [20, 45, 60, 70], [0.625, 0.90, 0.90, 0.875]))
    return 100.0 * 0.72 * eta * min(1.0, speed_kmh / 50.0) * (2.0 / speed_kmh)


def single_vehicle_kwh(speed):
    sc = quiet_preset("single-vehicle", traffic={"speed_kmh": float(speed)},
                      sim={"duration_s": 2000.0 / (speed / 3.6) + 30.0})
    return engine.run(sc).summary["transfer"]["kwh_delivered"]


@pytest.fixture(scope="module")
def delhi_pair(tmp_path_factory):
    """Two CLI runs of the Delhi preset with seed 7, timed separately."""
    root = tmp_path_factory.mktemp("delhi")
    out = {}
    for tag in ("a", "b"):
        t0 = time.perf_counter()
        code = cli_main(["run", "--preset", "delhi-ring-road", "--seed", "7", "--out", str(root / tag)])
        out[tag] = (code, time.perf_counter() - t0, root / tag)
    return out


def read_summary(directory):
    return json.loads((directory / "summary.json").read_text())


# ---------------------------------------------------------------- 1-3 energy transfer

def test_c1_energy_at_speed():
    got = {v: single_vehicle_kwh(v) for v in (20, 50, 70)}
    ok = (abs(got[50] - 2.60) <= 0.03 and abs(got[20] - 1.80) <= 0.03 and abs(got[70] - 1.80) <= 0.03)
    record(1, ok, "2 km at 20/50/70 km/h -> " + ", ".join(f"{got[v]:.3f}" for v in (20, 50, 70))
           + " kWh (targets 1.80/2.60/1.80 +/- 0.03)")
    assert ok


def test_c2_envelope_and_shape(tmp_path, capsys):
    t0 = time.perf_counter()
    code = cli_main(["sweep", "--preset", "single-vehicle", "--param", "traffic.speed_kmh",
                     "--values", "20:70:5", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    with open(tmp_path / "efficiency_curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    speeds = [int(r["speed_kmh"]) for r in rows]
    e = np.array([float(r["e_per_2km_kwh"]) for r in rows])
    d = np.diff(e)
    eps = 1e-3
    first_drop = next((i for i, x in enumerate(d) if x < -eps), len(d))
    unimodal = not np.any(d[first_drop:] > eps)
    peak = speeds[int(np.argmax(e))]
    ok = (code == 0 and speeds == SPEEDS and e.min() >= 1.79 and e.max() <= 2.60 and unimodal
          and 45 <= peak <= 50 and elapsed < 60.0)
    record(2, ok, f"sweep 20-70 km/h: range [{e.min():.3f}, {e.max():.3f}] kWh, unimodal={unimodal}, "
                  f"peak at {peak} km/h, {elapsed:.1f} s")
    assert ok


def test_c3_oracle_agreement():
    six = (20, 30, 40, 50, 60, 70)
    worst_closed, worst_indep = 0.0, 0.0
    for v in six:
        sim = single_vehicle_kwh(v)
        worst_closed = max(worst_closed, abs(sim / energy_per_distance(v, 2.0) - 1.0))
        worst_indep = max(worst_indep, abs(sim / oracle_e2km(v) - 1.0))
    ok = worst_closed <= 0.01 and worst_indep <= 0.01
    record(3, ok, f"six speeds vs closed form: worst {100 * worst_closed:.3f}%; "
                  f"vs independent oracle: worst {100 * worst_indep:.3f}% (limit 1%)")
    assert ok


# ---------------------------------------------------------------- 4 activation

def test_c4_activation_latency(baseline_hour):
    lat = baseline_hour.latencies_ms
    frac = baseline_hour.summary["corridor"]["activations_within_200ms"]
    direct = lat.size > 0 and bool(np.all(lat <= 200.0 + 1e-6))
    ok = direct and frac == 1.0
    record(4, ok, f"baseline hour: {lat.size} activations, max {lat.max():.1f} ms, "
                  f"summary fraction within 200 ms = {frac}")
    assert ok


# ---------------------------------------------------------------- 5 grid

def test_c5_grid_bound():
    from ers_sim.scenario import copy_scenario
    sc = quiet_preset("grid-stress")
    on = engine.run(copy_scenario(sc, energy={"shedding": True}))
    off = engine.run(copy_scenario(sc, energy={"shedding": False}))
    on_series = float(np.abs(on.timeseries["freq_dev_pct"]).max())
    on_summary = on.summary["ems"]["max_abs_freq_dev_pct"]
    off_max = float(np.abs(off.timeseries["freq_dev_pct"]).max())
    ok = (on_series <= 1.5 and on_summary <= 1.5 and on.summary["ems"]["shed_alarms"] == 0
          and on.summary["ems"]["shed_events"] > 0 and off_max > 1.5)
    record(5, ok, f"grid-stress: shedding on max |df| {on_series:.3f}% "
                  f"({on.summary['ems']['shed_events']} shed events); shedding off {off_max:.3f}%")
    assert ok


# ---------------------------------------------------------------- 6 battery

def test_c6_battery_calibration():
    out = {}
    for name in ("battery-static-ref", "battery-ers-ref"):
        t0 = time.perf_counter()
        b = engine.run(quiet_preset(name)).summary["battery"]
        out[name] = (b["deep_discharges_per_year"], b["life_years"], time.perf_counter() - t0)
    sd, sl, st = out["battery-static-ref"]
    ed, el, et = out["battery-ers-ref"]
    ok = (abs(sd - 310) <= 31 and abs(sl - 6) <= 0.5 and abs(ed - 125) <= 13 and abs(el - 9) <= 0.5
          and st < 60 and et < 60)
    record(6, ok, f"static {sd:.1f}/yr, {sl:.2f} y ({st:.2f} s); ERS {ed:.1f}/yr, {el:.2f} y ({et:.2f} s)")
    assert ok


# ---------------------------------------------------------------- 7 forecast

def test_c7_forecaster():
    acc = []
    for seed in range(30):
        rng = np.random.default_rng(seed)
        h = np.arange(24 * 15)
        y = (100.0 + 60.0 * np.sin(2 * np.pi * h / 24.0)) * (1.0 + 0.05 * rng.standard_normal(h.size))
        acc.append(forecast_demand(y[:-24], 24).evaluate(y[-24:]).accuracy)
    mean = float(np.mean(acc))
    ok = mean >= 90.0
    record(7, ok, f"30 seeds, 14-day history, 5% noise: mean accuracy {mean:.2f}% (min {min(acc):.2f}%)")
    assert ok


# ---------------------------------------------------------------- 8-9 Delhi mix and economics

def shares_from_timeseries(directory):
    cols = {"solar_kw": 0.0, "buffer_kw": 0.0, "grid_offpeak_kw": 0.0, "grid_peak_kw": 0.0, "v2g_kw": 0.0}
    with open(directory / "timeseries.csv") as fh:
        for row in csv.DictReader(fh):
            for c in cols:
                cols[c] += float(row[c])
    total = sum(cols.values())
    return (cols["solar_kw"] + cols["buffer_kw"]) / total, cols["v2g_kw"] / total


@pytest.mark.slow
def test_c8_source_mix(delhi_pair):
    mix, _ = dispatch(100.0, 61.0, None, grid_offpeak_kw=35.0, v2g_kw=4.0)
    exact = mix.shares() == {"solar": 0.61, "buffer": 0.0, "grid_offpeak": 0.35, "grid_peak": 0.0, "v2g": 0.04}
    code, _, d = delhi_pair["a"]
    s = read_summary(d)["ems"]
    solar_ts, v2g_ts = shares_from_timeseries(d)
    ok = (exact and code == 0 and 0.55 <= s["solar_share"] <= 0.70 and 0.02 <= s["v2g_share"] <= 0.06
          and abs(solar_ts - s["solar_share"]) < 1e-3 and abs(v2g_ts - s["v2g_share"]) < 1e-3)
    record(8, ok, f"dispatch 61/35/4 exact={exact}; Delhi solar share {100 * s['solar_share']:.1f}% "
                  f"(timeseries {100 * solar_ts:.1f}%), V2G {100 * s['v2g_share']:.2f}% "
                  f"(timeseries {100 * v2g_ts:.2f}%)")
    assert ok


@pytest.mark.slow
def test_c9_economics(baseline_hour, delhi_pair):
    be = baseline_hour.summary["financial"]["breakeven_years"]
    code, _, d = delhi_pair["a"]
    f = read_summary(d)["financial"]
    vkm = f["vehicle_km_per_year"]
    co2_oracle = vkm * 0.5023 / 1000.0
    savings_oracle = vkm * 0.1492 / 1e6
    ok = (be is not None and 6.0 <= be <= 8.0 and code == 0
          and f["cost_per_vehicle_km_inr"] < 1.7
          and abs(f["co2_tonnes"] / 33_000 - 1) <= 0.05 and abs(co2_oracle / 33_000 - 1) <= 0.05
          and abs(f["energy_savings_gwh"] / 9.8 - 1) <= 0.02 and abs(savings_oracle / 9.8 - 1) <= 0.02)
    record(9, ok, f"baseline break-even {be:.2f} y; Delhi {f['cost_per_vehicle_km_inr']:.3f} INR/km, "
                  f"CO2 {f['co2_tonnes']:,.0f} t (oracle {co2_oracle:,.0f}), "
                  f"savings {f['energy_savings_gwh']:.2f} GWh (oracle {savings_oracle:.2f})")
    assert ok


# ---------------------------------------------------------------- 10 integrity

def test_c10_integrity(baseline_hour):
    lines = [ln.encode() for ln in baseline_hour.ledger.lines()]
    assert verify_ledger(lines) is None
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(1000):
        i = int(rng.integers(len(lines)))
        j = int(rng.integers(len(lines[i])))
        tampered = bytearray(lines[i])
        tampered[j] = (tampered[j] + int(rng.integers(1, 256))) % 256
        copy = list(lines)
        copy[i] = bytes(tampered)
        hits += verify_ledger(copy) == i

    thefts = [{"segment": s, "t_s": t, "kwh": k}
              for s, t, k in ((12, 70.0, 0.05), (40, 150.0, 0.2), (77, 250.0, 0.5), (95, 400.0, 0.1))]
    injected = engine.run(small_corridor(duration_s=480.0, v2i={"thefts": thefts}))
    flagged = {(a.segment, int(a.window_start_s // 60)) for a in injected.alerts
               if a.kind is AlertKind.UNAUTHORIZED_DRAW}
    expected = {(th["segment"], int(th["t_s"] // 60)) for th in thefts}
    caught = len(expected & flagged)
    extra = len(injected.alerts) - caught
    clean = engine.run(small_corridor(duration_s=480.0))
    false_pos = len(clean.alerts) + len(baseline_hour.alerts)
    ok = hits == 1000 and caught == len(thefts) and extra == 0 and false_pos == 0
    record(10, ok, f"{hits}/1000 single-byte tampers located ({len(lines)}-entry ledger); "
                   f"{caught}/{len(thefts)} thefts flagged, {extra} extra alerts; "
                   f"{false_pos} alerts on clean runs")
    assert ok


# ---------------------------------------------------------------- 11 determinism

@pytest.mark.slow
def test_c11_determinism(delhi_pair):
    (ca, ta, da), (cb, tb, db) = delhi_pair["a"], delhi_pair["b"]
    names = sorted(p.name for p in da.iterdir())
    same = names == sorted(p.name for p in db.iterdir()) and all(
        (da / n).read_bytes() == (db / n).read_bytes() for n in names)
    ok = ca == 0 and cb == 0 and same and ta < 300 and tb < 300
    record(11, ok, f"Delhi seed 7 twice: {len(names)} files byte-identical={same}; runs {ta:.0f} s and {tb:.0f} s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-p", "no:cacheprovider"]))
