"""Command-line front end: ``ers-sim {run,sweep,report,preset}``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import scenario as scn
from .engine import dump_json, run, threads_from_env
from .errors import ErsError
from .transfer import TransferParams, coupling_efficiency, duty_factor, energy_per_distance

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_values(spec: str) -> list:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    def num(s):
        s = s.strip()
        try:
            return int(s)
        except ValueError:
            try:
                return float(s)
            except ValueError:
                return s
    if ":" in spec:
        parts = [num(p) for p in spec.split(":")]
        if len(parts) != 3 or not all(isinstance(p, (int, float)) for p in parts) or parts[2] <= 0:
            raise UsageError(f"bad range {spec!r}; expected start:stop:step with step > 0")
        start, stop, step = parts
        n = int((stop - start) / step + 1e-9) + 1
        vals = [start + i * step for i in range(n)]
        return [int(v) if all(isinstance(p, int) for p in parts) else round(v, 12) for v in vals]
    vals = [num(p) for p in spec.split(",") if p.strip()]
    if not vals:
        raise UsageError("no sweep values given")
    return vals


def _load_doc(args) -> dict:
    if args.scenario and args.preset:
        raise UsageError("give either --scenario or --preset, not both")
    if args.preset:
        if args.preset not in scn.preset_names():
            raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(scn.preset_names())}")
        return scn.parse_document(scn.preset_text(args.preset))
    if not args.scenario:
        raise UsageError("one of --scenario or --preset is required")
    try:
        text = Path(args.scenario).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read scenario file: {exc}") from exc
    return scn.parse_document(text)


def _scenario(doc, timestep_ms=None):
    if timestep_ms is not None:
        doc = scn.set_path(doc, "sim.timestep_ms", timestep_ms)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", scn.ScenarioWarning)
        sc = scn.scenario_from_dict(doc)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return sc


# --------------------------------------------------------------------------- commands

def cmd_run(args) -> int:
    doc = _load_doc(args)
    sc = _scenario(doc, args.timestep_ms)
    seed = args.seed if args.seed is not None else (sc.sim.seed if sc.sim is not None else 0)
    print(f"seed: {seed}")
    result = run(sc, seed)
    files = result.write(args.out)
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def _sweep_job(job):
    doc, out_dir, seed = job
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sc = scn.scenario_from_dict(doc)
    result = run(sc, seed)
    result.write(out_dir)
    return _sweep_metrics(result)


def _sweep_metrics(result) -> dict:
    s = result.summary
    if s["kind"] == "battery":
        b = s["battery"]
        return {"life_years": b["life_years"], "deep_discharges_per_year": b["deep_discharges_per_year"]}
    sc = result.scenario
    kwh = result.vehicles["kwh_received"]
    done = [x is not None for x in result.vehicles["exit_s"]]
    per_vehicle = float(sum(k for k, d in zip(kwh, done) if d) / max(sum(done), 1))
    return {
        "vehicles": s["engine"]["vehicles"],
        "kwh_received": s["transfer"]["kwh_received_by_vehicles"],
        "kwh_per_vehicle": per_vehicle,
        "e_per_2km": per_vehicle * 2000.0 / sc.corridor.length_m,
        "solar_share": s["ems"]["solar_share"],
        "max_abs_freq_dev_pct": s["ems"]["max_abs_freq_dev_pct"],
        "breakeven_years": s["financial"]["breakeven_years"],
    }


def cmd_sweep(args) -> int:
    doc = _load_doc(args)
    values = parse_values(args.values)
    if args.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    base_seed = args.seed_base if args.seed_base is not None else doc.get("sim", {}).get("seed", 0)
    # validate the path once so a typo fails before any run starts
    _scenario(scn.set_path(doc, args.param, values[0]))
    out = Path(args.out)
    jobs, keys = [], []
    for i, val in enumerate(values):
        for rep in range(args.replicates):
            d = scn.set_path(doc, args.param, val)
            jobs.append((d, str(out / f"run_{i:03d}_{rep:02d}"), base_seed + rep))
            keys.append((val, rep, base_seed + rep))
    workers = min(threads_from_env(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    fields = list(rows[0].keys())
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([args.param, "replicate", "seed"] + fields)
        for (val, rep, seed), row in zip(keys, rows):
            w.writerow([val, rep, seed] + [_cell(row[f]) for f in fields])
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
    if args.param == "traffic.speed_kmh" and "e_per_2km" in fields:
        sc = _scenario(scn.set_path(doc, args.param, values[0]))
        c = sc.corridor
        tp = TransferParams(peak_kw=c.peak_kw, coverage=c.coverage,
                            efficiency_nodes=tuple(tuple(n) for n in c.efficiency_nodes),
                            duty_ref_kmh=c.duty_ref_kmh)
        per_speed: dict = {}
        for (val, _, _), row in zip(keys, rows):
            per_speed.setdefault(val, []).append(row["e_per_2km"])
        with open(out / "efficiency_curve.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["speed_kmh", "eta", "duty", "e_per_2km_kwh", "oracle_e_per_2km_kwh", "rel_error"])
            for val, sims in per_speed.items():
                v = float(val)
                sim = sum(sims) / len(sims)
                oracle = energy_per_distance(v, 2.0, tp)
                w.writerow([val, _cell(float(coupling_efficiency(v, tp))), _cell(float(duty_factor(v, tp))),
                            _cell(sim), _cell(oracle), _cell(sim / oracle - 1.0)])
        print(f"wrote {out / 'efficiency_curve.csv'}")
    return EXIT_OK


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return x


def render_report(summary: dict) -> str:
    lines = [f"scenario: {summary.get('scenario') or '(unnamed)'}  seed: {summary.get('seed')}"]
    if summary.get("kind") == "battery":
        b = summary["battery"]
        lines += [f"profile: {b['profile']}",
                  f"battery life: {b['life_years']:.2f} years" + (" (calendar cap)" if b["calendar_capped"] else ""),
                  f"deep discharges: {b['deep_discharges_per_year']:.1f} per year",
                  f"equivalent full cycles: {b['efc_per_year']:.1f} per year"]
        return "\n".join(lines) + "\n"
    e, t, c, ems, v, f = (summary[k] for k in ("engine", "transfer", "corridor", "ems", "v2i", "financial"))

    def num(x, fmt):
        return "n/a" if x is None else format(x, fmt)
    be = "NEVER" if f["breakeven_years"] is None else f"{f['breakeven_years']:.2f} years"
    lines += [
        f"simulated: {e['duration_s']:.0f} s at {e['timestep_ms']:g} ms steps, {e['vehicles']} vehicles",
        f"energy: transmitted {t['kwh_transmitted']:.1f} kWh, delivered {t['kwh_delivered']:.1f} kWh"
        f" (efficiency {num(t['efficiency'], '.3f')})",
        f"segments: {c['segments']}, activations {c['activations']},"
        f" max activation latency {num(c['activation_latency_ms_max'], '.1f')} ms",
        f"supply shares: " + ", ".join(f"{k} {100 * x:.1f}%" for k, x in ems["source_share"].items()),
        f"solar share (incl. buffer): {100 * ems['solar_share']:.1f}%",
        f"grid: max |freq dev| {ems['max_abs_freq_dev_pct']:.3f}%, shed events {ems['shed_events']}",
        f"v2i: {v['sessions']} sessions, {v['ledger_entries']} ledger entries, alerts {v['alerts'] or 'none'}",
        f"finance ({f['currency']}): capex {f['capex']:,.0f}, break-even {be},"
        f" cost/vehicle-km {f['cost_per_vehicle_km_inr']:.3f} INR",
        f"environment: CO2 avoided {f['co2_tonnes']:,.0f} t/yr, energy savings {f['energy_savings_gwh']:.2f} GWh/yr",
    ]
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    path = Path(args.results) / "summary.json"
    try:
        summary = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    sys.stdout.write(render_report(summary))
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.list or not args.name:
        print("\n".join(scn.preset_names()))
        return EXIT_OK
    if args.name not in scn.preset_names():
        raise UsageError(f"unknown preset {args.name!r}; choose from {', '.join(scn.preset_names())}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{args.name}.toml"
    target.write_text(scn.preset_text(args.name), encoding="utf-8", newline="\n")
    print(f"wrote {target}")
    return EXIT_OK


# --------------------------------------------------------------------------- plumbing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ers-sim", description="Electric road system corridor simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--scenario", help="scenario TOML file")
        sp.add_argument("--preset", help="shipped preset name instead of a file")

    r = sub.add_parser("run", help="run one scenario")
    scenario_args(r)
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--timestep-ms", type=float, help="override the control timestep")
    r.add_argument("--out", required=True, help="results directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario over a range of one parameter")
    scenario_args(s)
    s.add_argument("--param", required=True, help="dotted key, e.g. traffic.speed_kmh")
    s.add_argument("--values", required=True, help="start:stop:step (inclusive) or a,b,c")
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--seed-base", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="print a text summary of a results directory")
    rep.add_argument("results")
    rep.set_defaults(func=cmd_report)

    pr = sub.add_parser("preset", help="write a shipped preset scenario file")
    pr.add_argument("name", nargs="?")
    pr.add_argument("--out", default=".")
    pr.add_argument("--list", action="store_true")
    pr.set_defaults(func=cmd_preset)
    return p


def _failing_module(exc: BaseException) -> str:
    mod = "cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        parts = Path(frame.filename).parts
        if "ers_sim" in parts:
            mod = Path(frame.filename).stem
    return mod


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ers-sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except scn.ScenarioError as exc:
        print(f"ers-sim: error in module engine (scenario): {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ErsError, Exception) as exc:  # noqa: BLE001 - report and exit non-zero
        print(f"ers-sim: error in module {_failing_module(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
