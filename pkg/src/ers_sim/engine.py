"""Simulation core: runs a scenario and collects results.

The loop advances a fixed control step. Within a step every vehicle moves at
constant speed, so the times at which it crosses a segment's sensor, enters
and leaves the energized span, and leaves the occupancy zone are computed in
closed form. Those sub-step times drive the segment state machine (activation
ramps) and the per-pair energy integrals; power dispatch, grid state and
shedding run once per step.

Vehicles are assigned to lanes round-robin and never overtake within a lane.
Each lane has its own row of coil segments; segment ``lane * n + k`` sits at
``k * pitch``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import battery as bat
from .corridor import S, SegmentBank, SegmentParams, road_condition
from .econ import YEAR_S, financial_block
from .ems import (BufferState, GridState, SHED_PRIORITY, SolarModel, dispatch, is_offpeak,
                  shed_required_kw, solar_available, update_grid, v2g_available)
from .scenario import CLASS_NAMES, Scenario
from .traffic import schedule_from_scenario
from .transfer import TransferParams, coupling_efficiency, duty_factor, misalignment_factor, thermal_derate
from .v2i import AnomalyDetector, RoadsideUnit, SessionGrant, SessionRequest, quantize_wh

KMH = 1 / 3.6

TIMESERIES_COLUMNS = (
    "t_s", "demand_kw", "solar_kw", "buffer_kw", "grid_offpeak_kw", "grid_peak_kw", "v2g_kw",
    "deficit_kw", "freq_dev_pct", "volt_dev_pct", "shed_kw", "curtailed_kw",
    # extras
    "solar_avail_kw", "buffer_charge_kw", "transmitted_kw", "delivered_kw", "standby_kw",
    "active_segments", "vehicles", "buffer_stored_kwh",
)
VEHICLE_COLUMNS = ("id", "class", "entry_s", "exit_s", "mean_speed_kmh", "tic_s", "kwh_received",
                   "soc_in", "soc_out", "deep_discharges", "lane")
SEGMENT_COLUMNS = ("index", "position_m", "activations", "kwh_tx", "kwh_delivered", "peak_temp_c", "fault_count",
                   "standby_kwh", "lane", "alerts", "state")
ALERT_COLUMNS = ("kind", "segment", "window_start_s", "magnitude")
CLASS_PRIORITY = np.array([SHED_PRIORITY[c] for c in CLASS_NAMES])
MAX_SHED_ROUNDS = 16


@dataclass
class SimulationResult:
    scenario: Scenario
    seed: int
    summary: dict
    timeseries: dict = field(default_factory=dict)
    vehicles: dict = field(default_factory=dict)
    segments: dict = field(default_factory=dict)
    alerts: list = field(default_factory=list)
    rsu: Optional[RoadsideUnit] = None
    latencies_ms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ledger(self):
        return self.rsu.ledger if self.rsu is not None else []

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "summary.json"]
        (out / "summary.json").write_text(dump_json(self.summary), encoding="utf-8", newline="\n")
        if self.scenario.kind != "corridor":
            return written
        _write_table(out / "timeseries.csv", TIMESERIES_COLUMNS, self.timeseries)
        _write_table(out / "vehicles.csv", VEHICLE_COLUMNS, self.vehicles)
        _write_table(out / "segments.csv", SEGMENT_COLUMNS, self.segments)
        self.rsu.ledger.write(out / "ledger.jsonl")
        with open(out / "alerts.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ALERT_COLUMNS)
            for a in self.alerts:
                w.writerow([a.kind.value, a.segment, _fmt(a.window_start_s), _fmt(a.magnitude)])
        written += [out / n for n in ("timeseries.csv", "vehicles.csv", "segments.csv", "ledger.jsonl",
                                      "alerts.csv")]
        return written


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return ""
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _write_table(path, columns, data):
    n = len(data[columns[0]]) if columns[0] in data else 0
    cols = [data[c] for c in columns]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(c[i]) for c in cols) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return round(x, 9) if math.isfinite(x) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def summary_digest(result: SimulationResult) -> str:
    return hashlib.sha256(dump_json(result.summary).encode()).hexdigest()


# --------------------------------------------------------------------------- entry point

def run(scenario: Scenario, seed: int | None = None, record_messages: bool | None = None) -> SimulationResult:
    """Run ``scenario``; ``seed`` overrides ``scenario.sim.seed`` when given."""
    if scenario.kind == "battery":
        return _run_battery(scenario, seed)
    return _CorridorRun(scenario, seed, record_messages).execute()


def _run_battery(sc: Scenario, seed) -> SimulationResult:
    est = bat.estimate_battery_life(sc.battery.profile, sc)
    summary = {"scenario": sc.name, "kind": "battery", "seed": seed,
               "battery": {"profile": sc.battery.profile, "life_years": est.years,
                           "deep_discharges_per_year": est.deep_per_year,
                           "efc_per_year": est.efc_per_year, "calendar_capped": est.capped}}
    return SimulationResult(scenario=sc, seed=seed if seed is not None else 0, summary=summary)


_FLEET_ROWS = ("gid", "segbase", "x", "v", "target", "soc", "cap", "rcap", "drain", "mis", "cf",
               "pri", "kwh", "tic", "dist")


class _Fleet:
    """Vehicles inside the corridor, one column each, in arrival order.

    Everything sits in a single float matrix so admitting or retiring vehicles
    is one column operation. The last ``2 * n_zone`` rows hold the telemetry
    carry (kWh not yet reported) and the reported Wh per RSU zone.
    """

    def __init__(self, n_zone: int):
        self.n_zone = n_zone
        self.a = np.zeros((len(_FLEET_ROWS) + 2 * n_zone, 0))
        self._bind()

    def _bind(self):
        for i, name in enumerate(_FLEET_ROWS):
            setattr(self, name, self.a[i])
        k = len(_FLEET_ROWS)
        self.carry = self.a[k:k + self.n_zone]
        self.reported = self.a[k + self.n_zone:]

    def __len__(self):
        return self.a.shape[1]

    def add(self, **cols):
        block = np.zeros((self.a.shape[0], len(cols["gid"])))
        for name, col in cols.items():
            block[_FLEET_ROWS.index(name)] = col
        self.a = np.concatenate([self.a, block], axis=1)
        self._bind()

    def keep(self, mask):
        self.a = self.a[:, mask]
        self._bind()


class _CorridorRun:
    def __init__(self, sc: Scenario, seed, record_messages):
        if seed is not None:
            sc = _with_seed(sc, seed)
        self.sc = sc
        self.seed = sc.sim.seed
        c, t, e = sc.corridor, sc.traffic, sc.energy
        self.dt = sc.sim.timestep_ms / 1000.0
        self.duration = float(sc.sim.duration_s)
        self.n_steps = int(math.ceil(self.duration / self.dt - 1e-9)) if self.duration > 0 else 0
        self.tp = TransferParams(peak_kw=c.peak_kw, coverage=c.coverage,
                                 efficiency_nodes=tuple(tuple(n) for n in c.efficiency_nodes),
                                 duty_ref_kmh=c.duty_ref_kmh, misalignment_cutoff_m=c.misalignment_cutoff_m,
                                 derate_start_c=c.derate_c, cutoff_c=c.cutoff_c)
        self.pitch = c.pitch_m
        self.span = c.coverage * c.pitch_m
        self.lead = c.sensor_lead_m
        self.L = float(c.length_m)
        self.lanes = t.lanes
        self.n_lane_seg = int(c.length_m // c.pitch_m)
        self.n_seg = self.n_lane_seg * self.lanes
        k = np.tile(np.arange(self.n_lane_seg), self.lanes)
        self.seg_start = k * self.pitch
        self.seg_lane = np.repeat(np.arange(self.lanes), self.n_lane_seg)
        self.zone_lane = np.arange(self.n_lane_seg) // max(c.rsu_span_segments, 1)
        self.n_zone = int(self.zone_lane.max()) + 1 if self.n_seg else 1
        amb0 = road_condition(sc.sim.start_time_s, sc.sim.start_day, sc.climate).ambient_c
        self.bank = SegmentBank(self.n_seg, self.pitch, self.span, SegmentParams.from_config(c), ambient_c=amb0)

        self.sched = schedule_from_scenario(sc)
        n = len(self.sched)
        self.n = n
        cls = self.sched.cls
        cfg = [t.classes[name] for name in CLASS_NAMES]
        self.cls = cls
        self.lane = np.arange(n) % t.lanes
        self.cap = np.array([cfg[k].capacity_kwh for k in cls], dtype=float)
        self.recv = np.array([cfg[k].receiver_kw for k in cls], dtype=float)
        self.cons_per_m = np.array([cfg[k].consumption_kwh_per_km for k in cls], dtype=float) / 1000.0
        self.target = self.sched.target_kmh * KMH
        self.offset = self.sched.offset_m
        self.t_in = self.sched.t_s
        self.pri = CLASS_PRIORITY[cls].astype(float)
        # per-vehicle results, written when a vehicle leaves (or at the end)
        self.soc = self.sched.soc_in.copy()
        self.exit_t = np.full(n, np.nan)
        self.kwh_rx = np.zeros(n)
        self.tic = np.zeros(n)
        self.dist = np.zeros(n)
        self.deep = np.zeros(n, dtype=np.int64)
        self.session = [None] * n
        self.granted_at = np.full(n, np.inf)
        self.fleet = _Fleet(self.n_zone)
        self.wear = bat.WearTracker(0)
        self.pack_temp = t.pack_temp_c
        self.degraded = False

        keep = record_messages if record_messages is not None else n <= 5000
        self.rsu = RoadsideUnit(latency_ms=sc.v2i.latency_ms, keep_messages=keep)
        v = sc.v2i
        self.detector = AnomalyDetector(self.n_seg, v.mismatch_abs_kwh, v.mismatch_rel, v.maintenance_drop,
                                        v.maintenance_windows, baseline=1.0)
        self.window = v.window_s
        self.win_metered = np.zeros(self.n_seg)
        self.win_telem = np.zeros(self.n_seg)
        self.win_expected = np.zeros(self.n_seg)
        self.win_start = 0.0
        self.alerts = []
        self.theft_kwh_total = 0.0

        self.solar_model = SolarModel(e.annual_insolation_kwh_m2, e.latitude_deg)
        self.buffer = BufferState(e.buffer_kwh, e.buffer_kwh * e.buffer_initial_frac, e.buffer_max_kw, e.buffer_rte)
        self.grid = GridState(capacity_kw=e.grid_capacity_kw, nominal_hz=e.nominal_hz,
                              freq_droop=e.freq_droop, volt_droop=e.volt_droop)
        self.events = sorted(
            [(f.t_s, 0, "fault", f.segment) for f in c.faults]
            + [(f.clear_s, 1, "clear", f.segment) for f in c.faults if f.clear_s is not None]
            + [(d.t_s, 2, "degrade", (d.segment, d.factor)) for d in v.degradations]
            + [(th.t_s, 3, "theft", (th.segment, th.kwh)) for th in v.thefts],
            key=lambda ev: (ev[0], ev[1]))
        self.ts = {c: np.zeros(self.n_steps) for c in TIMESERIES_COLUMNS}
        # per-step exogenous inputs, evaluated at step midpoints
        edges = np.minimum(np.arange(self.n_steps + 1) * self.dt, self.duration)
        self.clock = sc.sim.start_time_s + 0.5 * (edges[:-1] + edges[1:])
        tod = self.clock % 86400.0
        self.day = (sc.sim.start_day + (self.clock // 86400.0).astype(np.int64) - 1) % 365 + 1
        self.solar_kw = solar_available(tod, self.day, e.pv_area_m2, e.pv_efficiency, self.solar_model)
        off = is_offpeak(tod, e.offpeak_start_h, e.offpeak_end_h)
        self.g_off = np.where(off, e.grid_capacity_kw, 0.0)
        self.g_peak = np.where(off, 0.0, e.grid_peak_kw if e.grid_peak_kw is not None else e.grid_capacity_kw)
        self.v2g_kw = v2g_available(tod, e.v2g_buses, e.v2g_kw_per_bus, e.v2g_windows)
        self.tail = 0
        self.shed_events = 0
        self.shed_alarms = 0
        self.max_balance_residual = 0.0

    # ------------------------------------------------------------------ loop

    def execute(self) -> SimulationResult:
        for step in range(self.n_steps):
            t0 = step * self.dt
            t1 = min((step + 1) * self.dt, self.duration)
            self._step(step, t0, t1)
            if t1 >= self.win_start + self.window - 1e-9 or step == self.n_steps - 1:
                self._flush_window(t1)
        f = self.fleet
        for j in range(len(f)):
            self._close(j, self.duration, aborted=True)
        self._retire(np.zeros(len(f), dtype=bool))
        return self._result()

    def _admit(self, t1: float) -> int:
        """Open sessions for vehicles arriving before ``t1``; returns how many joined."""
        j = self.tail
        while j < self.n and self.t_in[j] < t1:
            j += 1
        new = np.arange(self.tail, j)
        for i in new:
            req = SessionRequest(vehicle_id=int(i), soc=float(self.soc[i]),
                                 requested_kwh=float(max(0.0, bat.SOC_CEILING - self.soc[i]) * self.cap[i]),
                                 t_ms=self.t_in[i] * 1000.0)
            reply = self.rsu.open_session(req)
            if isinstance(reply, SessionGrant):
                self.session[i] = reply.session_id
                self.granted_at[i] = reply.t_ms / 1000.0
        if len(new):
            soc = self.soc[new]
            self.fleet.add(gid=new, segbase=self.lane[new] * self.n_lane_seg, v=self.target[new],
                           target=self.target[new], soc=soc, cap=self.cap[new],
                           rcap=np.minimum(self.tp.peak_kw, self.recv[new]),
                           drain=self.cons_per_m[new] / self.cap[new],
                           mis=misalignment_factor(self.offset[new], self.tp),
                           cf=self.granted_at[new], pri=self.pri[new])
            self.wear.extend(soc)
        self.tail = j
        return len(new)

    def _apply_events(self, t0, t1):
        theft = None
        while self.events and self.events[0][0] < t1:
            t, _, kind, arg = self.events.pop(0)
            if kind == "fault":
                self.bank.inject_fault(arg)
            elif kind == "clear":
                self.bank.maintenance_reset(arg)
            elif kind == "degrade":
                self.bank.efficiency_factor[arg[0]] = arg[1]
                self.degraded = True
            else:
                if theft is None:
                    theft = np.zeros(self.n_seg)
                theft[arg[0]] += arg[1]
        return theft

    def _gaps(self, x0, lane):
        m = len(x0)
        gap = np.full(m, np.inf)
        if m < 2:
            return gap
        if self.lanes == 1:
            gap[1:] = x0[:-1] - x0[1:]
            return gap
        order = np.argsort(lane.astype(np.int8 if self.lanes < 128 else np.int32), kind="stable")
        xs = x0[order]
        same = lane[order[1:]] == lane[order[:-1]]
        gs = np.full(m, np.inf)
        gs[1:] = np.where(same, xs[:-1] - xs[1:], np.inf)
        gap[order] = gs
        return gap

    def _step(self, step, t0, t1):
        sc, tr = self.sc, self.sc.traffic
        dt = t1 - t0
        theft = self._apply_events(t0, t1)
        m_old = len(self.fleet)
        self._admit(t1)
        f = self.fleet
        m = len(f)
        pitch, span, lead, L = self.pitch, self.span, self.lead, self.L
        bank = self.bank

        # ---- motion: new vehicles start at x = 0 at their arrival time
        start = np.full(m, t0)
        if m > m_old:
            start[m_old:] = np.maximum(self.t_in[f.gid[m_old:].astype(np.int64)], t0)
        x0 = f.x
        gap = self._gaps(x0, f.segbase // max(self.n_lane_seg, 1))
        desired = np.minimum(f.target, np.maximum(gap, 0.0) / tr.headway_s)
        v = np.minimum(desired, f.v + tr.max_accel_mps2 * dt)
        v[m_old:] = desired[m_old:]
        run_t = t1 - start
        x1 = x0 + v * run_t
        inv = 1.0 / np.maximum(v, 1e-9)
        exiting = x1 >= L
        if exiting.any():
            t_exit = start + (L - x0) * inv
            end_t = np.where(exiting, t_exit, t1)
            x1 = np.minimum(x1, L)
        else:
            end_t = np.full(m, t1)
        dx = x1 - x0
        kmh = v / KMH
        base_v = f.rcap * duty_factor(kmh, self.tp)
        etamis_v = coupling_efficiency(kmh, self.tp) * f.mis

        # ---- vehicle-segment pairs whose occupancy zone [kp - lead, kp + span] meets [x0, x1]
        if m and self.n_lane_seg:
            k_lo = np.maximum(np.ceil((x0 - span) / pitch - 1e-12), 0).astype(np.int64)
            k_hi = np.minimum(np.floor((x1 + lead) / pitch + 1e-12), self.n_lane_seg - 1).astype(np.int64)
            cnt = np.maximum(k_hi - k_lo + 1, 0)
            pv = np.repeat(np.arange(m), cnt)
            pkl = np.arange(len(pv)) - np.repeat(np.cumsum(cnt) - cnt - k_lo, cnt)
            pk = pkl + f.segbase.astype(np.int64)[pv]
        else:
            pv = pkl = pk = np.zeros(0, dtype=np.int64)
        rel = pkl * pitch - x0[pv]  # span start relative to the vehicle
        pinv, pst, pend = inv[pv], start[pv], end_t[pv]
        srel = rel - lead
        # absolute positions, so a sensor exactly on a step boundary belongs to exactly one step
        sensor = pkl * pitch - lead
        crossed = (sensor > x0[pv]) & (sensor <= x1[pv])
        det = np.where(crossed, pst + srel * pinv, np.inf)
        if m > m_old:
            # arrivals were detected upstream of the corridor, at most one second earlier
            ent = (pv >= m_old) & (srel <= 0)
            det[ent] = pst[ent] - np.minimum(-srel[ent] * pinv[ent], 1.0)
        leave = pst + (rel + span) * pinv
        occ = np.minimum(pend, leave)
        span_in = pst + np.maximum(rel, 0.0) * pinv
        span_out = occ
        det_time = np.full(self.n_seg, np.inf)
        occ_end = np.full(self.n_seg, -np.inf)
        if len(pk):
            hit = np.isfinite(det)
            np.minimum.at(det_time, pk[hit], det[hit])
            np.maximum.at(occ_end, pk, occ)
        on_from = bank.begin_step(t0, t1, det_time)

        # ---- power per pair
        gain = thermal_derate(bank.temperature_c, self.tp)
        gain[bank.lockout] = 0.0
        base = base_v[pv] * gain[pk]
        p_model = base * etamis_v[pv]
        p_del = p_model * bank.efficiency_factor[pk] if self.degraded else p_model
        energized_lo = np.maximum(span_in, on_from[pk])
        tic_pair = np.maximum(0.0, span_out - energized_lo)
        on = np.maximum(0.0, span_out - np.maximum(energized_lo, f.cf[pv]))

        soc_mid = np.maximum(f.soc - f.drain * dx, 0.0)
        e = sc.energy
        solar_kw = float(self.solar_kw[step])
        g_off, g_peak = float(self.g_off[step]), float(self.g_peak[step])
        v2g_kw = float(self.v2g_kw[step])

        shed = None
        for _ in range(MAX_SHED_ROUNDS):
            pon = on if shed is None else on * ~shed[pk]
            offered = np.bincount(pv, p_del * pon, minlength=m) / 3600.0
            accepted = bat.charge_accepted(soc_mid, f.cap, offered)
            frac = np.divide(accepted, offered, out=np.zeros(m), where=offered > 0)
            w = pon * frac[pv] / 3600.0
            pair_del = p_del * w
            seg_del_v = np.bincount(pk, pair_del, minlength=self.n_seg)
            seg_tx = np.bincount(pk, base * w, minlength=self.n_seg)
            if theft is not None:
                seg_tx += theft / 0.9
            idle = bank.idle_seconds(occ_end, shed)
            standby = idle * (bank.params.standby_w / 3.6e6)
            demand_kw = (seg_tx.sum() + standby.sum()) * 3600.0 / dt
            mix, buf = dispatch(demand_kw, solar_kw, self.buffer, g_off, g_peak, v2g_kw, dt)
            grid = update_grid(self.grid, mix.supply, demand_kw, dt)
            if not e.shedding or abs(grid.freq_dev) <= e.shed_trigger:
                break
            if shed is None:
                shed = np.zeros(self.n_seg, dtype=bool)
            need = shed_required_kw(mix.deficit, e.grid_capacity_kw, e.shed_trigger, e.freq_droop)
            load = seg_tx * 3600.0 / dt
            cand = np.flatnonzero((load > 0) & ~shed)
            if not len(cand):
                self.shed_alarms += 1
                break
            served = np.full(self.n_seg, -1.0)
            np.maximum.at(served, pk, np.where(pon > 0, f.pri[pv], -1.0))
            order = cand[np.lexsort((cand, -load[cand], served[cand]))]
            acc = np.cumsum(load[order])
            take = int(np.searchsorted(acc, need - 1e-9)) + 1
            shed[order[:take]] = True
            self.shed_events += 1
            if take >= len(order) and acc[-1] < need:
                self.shed_alarms += 1
        shed_kw_now = 0.0
        if shed is not None and shed.any():
            shed_kw_now = float(np.bincount(pk, base * on, minlength=self.n_seg)[shed].sum() / dt)
        grid = update_grid(self.grid, mix.supply, demand_kw, dt, shed_kw=shed_kw_now)

        # ---- commit
        amb = road_condition(self.clock[step], int(self.day[step]), sc.climate).ambient_c
        seg_del = seg_del_v if theft is None else seg_del_v + theft
        bank.end_step(occ_end, seg_tx, seg_del, amb, shed, idle=idle)
        self.buffer = buf
        self.grid = grid
        recv = np.bincount(pv, pair_del, minlength=m)
        f.soc[:] = np.minimum(soc_mid + recv / f.cap, np.maximum(soc_mid, bat.SOC_CEILING))
        f.kwh += recv
        f.tic += np.bincount(pv, tic_pair if shed is None else tic_pair * ~shed[pk], minlength=m)
        f.dist += dx
        f.x[:] = x1
        f.v[:] = v
        if m:
            self.wear.update(None, f.soc, self.pack_temp)
        if self.n_zone == 1:
            f.carry[0] += recv
        elif len(pk):
            got = pair_del > 0
            np.add.at(f.carry, (self.zone_lane[pkl[got]], pv[got]), pair_del[got])
        self.win_telem += seg_del_v
        self.win_metered += seg_del
        self.win_expected += np.bincount(pk, p_model * w, minlength=self.n_seg)
        if theft is not None:
            self.theft_kwh_total += float(theft.sum())

        residual = (solar_kw + mix.grid_offpeak + mix.grid_peak + mix.v2g + mix.buffer + mix.deficit
                    - demand_kw - mix.buffer_charge - mix.curtailed)
        self.max_balance_residual = max(self.max_balance_residual, abs(residual) / max(demand_kw, solar_kw, 1e-9))
        row = self.ts
        row["t_s"][step] = t1
        row["demand_kw"][step] = demand_kw
        row["solar_kw"][step] = mix.solar
        row["buffer_kw"][step] = mix.buffer
        row["grid_offpeak_kw"][step] = mix.grid_offpeak
        row["grid_peak_kw"][step] = mix.grid_peak
        row["v2g_kw"][step] = mix.v2g
        row["deficit_kw"][step] = mix.deficit
        row["freq_dev_pct"][step] = grid.freq_dev * 100.0
        row["volt_dev_pct"][step] = grid.volt_dev * 100.0
        row["shed_kw"][step] = shed_kw_now
        row["curtailed_kw"][step] = mix.curtailed
        row["solar_avail_kw"][step] = solar_kw
        row["buffer_charge_kw"][step] = mix.buffer_charge
        row["transmitted_kw"][step] = seg_tx.sum() * 3600.0 / dt
        row["delivered_kw"][step] = seg_del.sum() * 3600.0 / dt
        row["standby_kw"][step] = standby.sum() * 3600.0 / dt
        row["active_segments"][step] = bank.energized_count()
        row["vehicles"][step] = m
        row["buffer_stored_kwh"][step] = buf.stored_kwh

        # ---- exits, in order of exit time
        if exiting.any():
            ex = np.flatnonzero(exiting)
            for j in ex[np.argsort(end_t[ex], kind="stable")]:
                self.exit_t[int(f.gid[j])] = end_t[j]
                self._close(int(j), float(end_t[j]))
            self._retire(~exiting)

    def _retire(self, keep):
        """Store results for the vehicles not in ``keep`` and drop them from the fleet."""
        f = self.fleet
        gone = ~keep
        gid = f.gid[gone].astype(np.int64)
        self.soc[gid] = f.soc[gone]
        self.kwh_rx[gid] = f.kwh[gone]
        self.tic[gid] = f.tic[gone]
        self.dist[gid] = f.dist[gone]
        self.deep[gid] = self.wear.keep(keep)["deep"]
        f.keep(keep)

    def _close(self, j: int, t: float, aborted: bool = False):
        f = self.fleet
        i = int(f.gid[j])
        sid = self.session[i]
        if sid is None:
            return
        wh, rest = quantize_wh(f.carry[:, j], final=True)
        f.carry[:, j] = rest
        self._report(j, wh, t)
        head_seg = lambda z: int(z) * self.sc.corridor.rsu_span_segments  # noqa: E731
        self.rsu.close_session(sid, t * 1000.0, zone_segment=head_seg, aborted=aborted,
                               zone_wh={z: int(w) for z, w in enumerate(f.reported[:, j]) if w > 0})

    def _report(self, j, wh, t):
        """Send telemetry for fleet column ``j`` (Wh per zone)."""
        nz = np.flatnonzero(wh)
        if not len(nz):
            return
        f = self.fleet
        i = int(f.gid[j])
        f.reported[nz, j] += wh[nz]
        if self.granted_at[i] > t + 1e-9:
            self.rsu.causality_violations += 1
        if self.rsu.keep_messages:
            for z in nz:
                self.rsu.record_telemetry(self.session[i], int(z) * self.sc.corridor.rsu_span_segments,
                                          int(wh[z]), t * 1000.0, zone=int(z))
        else:
            self.rsu.n_telemetry += len(nz)

    def _flush_window(self, t):
        f = self.fleet
        if len(f):
            wh, rest = quantize_wh(f.carry)
            f.carry[:] = rest
            cols = np.flatnonzero(wh.any(axis=0))
            if self.rsu.keep_messages:
                for j in cols:
                    self._report(int(j), wh[:, j], t)
            elif len(cols):
                # energy only accrues after a grant, so each of these vehicles has a session
                f.reported[:, cols] += wh[:, cols]
                self.rsu.n_telemetry += int(np.count_nonzero(wh[:, cols]))
                late = self.granted_at[f.gid[cols].astype(np.int64)] > t + 1e-9
                self.rsu.causality_violations += int(np.count_nonzero(late))
        eff = np.divide(self.win_telem, self.win_expected, out=np.full(self.n_seg, np.nan),
                        where=self.win_expected > 1e-9)
        self.alerts += self.detector.observe(self.win_start, self.win_metered, self.win_telem, eff)
        self.win_metered[:] = 0.0
        self.win_telem[:] = 0.0
        self.win_expected[:] = 0.0
        self.win_start = t

    # ------------------------------------------------------------------ results

    def _result(self) -> SimulationResult:
        sc = self.sc
        dt_h = np.diff(np.concatenate([[0.0], self.ts["t_s"]])) / 3600.0
        kwh = {c: float((self.ts[c] * dt_h).sum()) for c in TIMESERIES_COLUMNS if c.endswith("_kw")}
        bank = self.bank
        n = self.n
        done = ~np.isnan(self.exit_t)
        in_corr = np.where(done, self.exit_t, self.duration) - self.t_in
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_speed = np.where(in_corr > 0, self.dist / in_corr / KMH, 0.0)
        vehicles = {
            "id": np.arange(n), "class": [CLASS_NAMES[k] for k in self.cls], "entry_s": self.t_in,
            "exit_s": [None if not d else float(x) for d, x in zip(done, self.exit_t)],
            "mean_speed_kmh": mean_speed, "tic_s": self.tic, "kwh_received": self.kwh_rx,
            "soc_in": self.sched.soc_in, "soc_out": self.soc, "deep_discharges": self.deep,
            "lane": self.lane,
        }
        alert_count = np.zeros(self.n_seg, dtype=np.int64)
        for a in self.alerts:
            alert_count[a.segment] += 1
        segments = {
            "index": np.arange(self.n_seg), "position_m": self.seg_start, "activations": bank.activations,
            "kwh_tx": bank.kwh_tx, "kwh_delivered": bank.kwh_delivered, "peak_temp_c": bank.peak_temp_c,
            "fault_count": bank.fault_count, "standby_kwh": bank.standby_kwh, "lane": self.seg_lane,
            "alerts": alert_count, "state": [S(int(s)).name for s in bank.state],
        }
        lat = bank.all_latencies_ms()
        ann = YEAR_S / self.duration if self.duration > 0 else 0.0
        supply_kwh = {"solar": kwh["solar_kw"], "buffer": kwh["buffer_kw"], "grid_offpeak": kwh["grid_offpeak_kw"],
                      "grid_peak": kwh["grid_peak_kw"], "v2g": kwh["v2g_kw"]}
        supply_total = sum(supply_kwh.values())
        share = {k: (v / supply_total if supply_total > 0 else 0.0) for k, v in supply_kwh.items()}
        sold = float(self.kwh_rx.sum())
        vkm = float(self.dist.sum()) / 1000.0
        fin = financial_block(sc.econ, self.L, sold * ann, {k: v * ann for k, v in supply_kwh.items()},
                              sc.energy.source_cost, vkm * ann)
        alerts_by_kind = {}
        for a in self.alerts:
            alerts_by_kind[a.kind.value] = alerts_by_kind.get(a.kind.value, 0) + 1
        sessions = self.rsu.sessions.values()
        transmitted = float(bank.kwh_tx.sum())
        delivered = float(bank.kwh_delivered.sum())
        summary = {
            "scenario": sc.name, "kind": "corridor", "seed": self.seed,
            "engine": {
                "duration_s": self.duration, "timestep_ms": sc.sim.timestep_ms, "steps": self.n_steps,
                "vehicles": n, "vehicles_exited": int(done.sum()),
                "energy_balance_max_rel_residual": self.max_balance_residual,
                "annualization_factor": ann,
            },
            "corridor": {
                "segments": self.n_seg, "lanes": self.lanes, "activations": int(bank.activations.sum()),
                "activation_latency_ms_max": float(lat.max()) if lat.size else None,
                "activation_latency_ms_mean": float(lat.mean()) if lat.size else None,
                "activations_within_200ms": float(np.mean(lat <= 200.0 + 1e-6)) if lat.size else None,
                "aborted_activations": bank.aborted,
                "peak_temp_c": float(bank.peak_temp_c.max()) if self.n_seg else None,
                "standby_kwh": float(bank.standby_kwh.sum()),
            },
            "transfer": {
                "kwh_transmitted": transmitted, "kwh_delivered": delivered,
                "kwh_received_by_vehicles": sold,
                "efficiency": delivered / transmitted if transmitted > 0 else None,
            },
            "traffic": {
                "vehicle_km": vkm,
                "mean_tic_s": float(self.tic[done].mean()) if done.any() else None,
                "mean_kwh_per_vehicle": float(self.kwh_rx[done].mean()) if done.any() else None,
                "deep_discharges": int(self.deep.sum()),
                "by_class": {name: int((self.cls == k).sum()) for k, name in enumerate(CLASS_NAMES)},
            },
            "ems": {
                "kwh": {k.removesuffix("_kw"): v for k, v in kwh.items()},
                "source_share": share,
                "solar_share": share["solar"] + share["buffer"],
                "v2g_share": share["v2g"],
                "max_abs_freq_dev_pct": float(np.abs(self.ts["freq_dev_pct"]).max()) if self.n_steps else 0.0,
                "max_abs_volt_dev_pct": float(np.abs(self.ts["volt_dev_pct"]).max()) if self.n_steps else 0.0,
                "shed_events": self.shed_events, "shed_alarms": self.shed_alarms,
                "control_latency_ms": sc.sim.timestep_ms,
            },
            "v2i": {
                "sessions": len(self.rsu.sessions),
                "denied": int(n - len(self.rsu.sessions)),
                "telemetry_messages": self.rsu.n_telemetry,
                "ledger_entries": len(self.rsu.ledger),
                "ledger_head": self.rsu.ledger.head,
                "billed_kwh": sum(s.kwh for s in sessions),
                "causality_violations": self.rsu.causality_violations,
                "alerts": alerts_by_kind,
                "injected_theft_kwh": self.theft_kwh_total,
            },
            "financial": fin,
        }
        return SimulationResult(scenario=sc, seed=self.seed, summary=summary, timeseries=self.ts,
                                vehicles=vehicles, segments=segments, alerts=self.alerts, rsu=self.rsu,
                                latencies_ms=lat)


def _with_seed(sc: Scenario, seed: int) -> Scenario:
    import dataclasses
    return dataclasses.replace(sc, sim=dataclasses.replace(sc.sim, seed=int(seed)))


def run_file(path, seed=None) -> SimulationResult:
    from .scenario import load_scenario_file
    return run(load_scenario_file(path), seed)


def threads_from_env(default: int | None = None) -> int:
    raw = os.environ.get("ERS_SIM_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return default or (os.cpu_count() or 1)
