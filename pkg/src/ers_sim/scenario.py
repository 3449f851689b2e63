"""Scenario configuration: dataclasses, TOML loading, validation and JSON Schema.

A scenario document is TOML with one table per section::

    [corridor]
    length_m = 5000

    [traffic]
    arrival_rate_vph = 650

    [sim]
    duration_s = 3600

Every key not listed in the dataclasses below is rejected. Physical
impossibilities raise :class:`~ers_sim.errors.ScenarioError`; values outside
the ranges the corridor was studied at only produce warnings.
"""
from __future__ import annotations

import copy
import dataclasses
import math
import types
import typing
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ScenarioError

CLASS_NAMES = ("bus", "taxi", "delivery_van", "private_car")
STUDIED_RATE_VPH = (500.0, 800.0)


class ScenarioWarning(UserWarning):
    pass


@dataclass
class VehicleClassCfg:
    capacity_kwh: float
    receiver_kw: float
    consumption_kwh_per_km: float
    speed_mean_kmh: float
    speed_sd_kmh: float


DEFAULT_CLASSES = {
    "bus": VehicleClassCfg(250.0, 150.0, 1.2, 40.0, 5.0),
    "taxi": VehicleClassCfg(50.0, 100.0, 0.15, 50.0, 6.0),
    "delivery_van": VehicleClassCfg(80.0, 120.0, 0.30, 45.0, 6.0),
    "private_car": VehicleClassCfg(40.0, 80.0, 0.15, 50.0, 7.0),
}


@dataclass
class FaultCfg:
    segment: int
    t_s: float
    clear_s: Optional[float] = None


@dataclass
class CorridorCfg:
    length_m: float
    pitch_m: float = 10.0
    coil_length_m: float = 5.0
    rows: int = 2
    row_power_kw: float = 50.0
    overlap_factor: float = 0.72
    efficiency_nodes: list = field(
        default_factory=lambda: [[20.0, 0.625], [45.0, 0.90], [60.0, 0.90], [70.0, 0.875]])
    duty_ref_kmh: float = 50.0
    misalignment_cutoff_m: float = 0.3
    sensor_lead_m: float = 5.0
    ramp_ms: float = 200.0
    hold_ms: float = 50.0
    standby_w: float = 50.0
    derate_c: float = 80.0
    cutoff_c: float = 100.0
    resume_c: float = 70.0
    r_th_c_per_kw: float = 2.0
    tau_s: float = 120.0
    rsu_span_segments: int = 100
    faults: list = field(default_factory=list)

    @property
    def peak_kw(self) -> float:
        return self.rows * self.row_power_kw

    @property
    def coverage(self) -> float:
        return min(1.0, self.rows * self.coil_length_m / self.pitch_m) * self.overlap_factor


@dataclass
class ScriptedVehicleCfg:
    t_s: float
    vehicle_class: str = "taxi"
    speed_kmh: Optional[float] = None
    offset_m: float = 0.0
    soc: float = 0.5


@dataclass
class TrafficCfg:
    arrival_rate_vph: float
    hourly_profile: Optional[list] = None
    mix: dict = field(default_factory=lambda: {
        "bus": 0.10, "taxi": 0.30, "delivery_van": 0.20, "private_car": 0.40})
    classes: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CLASSES))
    speed_kmh: Optional[float] = None
    speed_min_kmh: float = 20.0
    speed_max_kmh: float = 70.0
    offset_sd_m: float = 0.08
    offset_max_m: float = 0.3
    soc_in_min: float = 0.30
    soc_in_max: float = 0.90
    headway_s: float = 1.5
    lanes: int = 1
    max_accel_mps2: float = 2.0
    pack_temp_c: float = 30.0
    scripted: list = field(default_factory=list)


@dataclass
class EnergyCfg:
    pv_area_m2: float = 0.0
    pv_efficiency: float = 0.20
    annual_insolation_kwh_m2: float = 2200.0
    latitude_deg: float = 28.6
    grid_capacity_kw: float = 10000.0
    grid_peak_kw: Optional[float] = None
    offpeak_start_h: float = 22.0
    offpeak_end_h: float = 6.0
    v2g_buses: int = 0
    v2g_kw_per_bus: float = 50.0
    v2g_windows: list = field(default_factory=lambda: [[10.0, 16.0]])
    buffer_kwh: float = 0.0
    buffer_max_kw: float = 0.0
    buffer_rte: float = 0.90
    buffer_initial_frac: float = 0.5
    source_cost: dict = field(default_factory=lambda: {
        "solar": 0.04, "buffer": 0.05, "grid_offpeak": 0.08, "grid_peak": 0.12, "v2g": 0.15})
    nominal_hz: float = 50.0
    freq_droop: float = 0.04
    volt_droop: float = 0.03
    shed_trigger: float = 0.012
    shedding: bool = True


@dataclass
class EconCfg:
    currency: str = "USD"
    capex_per_km: float = 1.8e6
    opex_frac: float = 0.02
    tariff: float = 0.20
    horizon_years: int = 10
    emission_factor_kg_per_km: float = 0.5023
    savings_kwh_per_km: float = 0.1492
    reference_consumption_kwh_per_km: float = 0.15
    served_vehicle_km_per_day: Optional[float] = None
    usd_inr: float = 83.0


@dataclass
class SimCfg:
    duration_s: float
    timestep_ms: float = 100.0
    seed: int = 0
    start_day: int = 80
    start_time_s: float = 0.0
    rng_policy: str = "per-entity"


@dataclass
class TheftCfg:
    segment: int
    t_s: float
    kwh: float


@dataclass
class DegradationCfg:
    segment: int
    t_s: float
    factor: float


@dataclass
class V2ICfg:
    latency_ms: float = 20.0
    window_s: float = 60.0
    mismatch_abs_kwh: float = 0.01
    mismatch_rel: float = 0.01
    maintenance_drop: float = 0.05
    maintenance_windows: int = 3
    thefts: list = field(default_factory=list)
    degradations: list = field(default_factory=list)


@dataclass
class ClimateCfg:
    ambient_mean_c: float = 25.0
    seasonal_amplitude_c: float = 8.0
    diurnal_amplitude_c: float = 6.0
    friction_dry: float = 0.8
    friction_wet: float = 0.55
    wet_days: list = field(default_factory=lambda: [182, 273])


@dataclass
class BatteryCfg:
    profile: str = "ers-dynamic"
    capacity_kwh: float = 50.0
    km_per_day: float = 198.0
    consumption_kwh_per_km: float = 0.15
    f0: Optional[float] = None
    alpha: Optional[float] = None


@dataclass
class Scenario:
    kind: str = "corridor"
    name: str = ""
    description: str = ""
    corridor: Optional[CorridorCfg] = None
    traffic: Optional[TrafficCfg] = None
    sim: Optional[SimCfg] = None
    energy: EnergyCfg = field(default_factory=EnergyCfg)
    econ: EconCfg = field(default_factory=EconCfg)
    v2i: V2ICfg = field(default_factory=V2ICfg)
    climate: ClimateCfg = field(default_factory=ClimateCfg)
    battery: Optional[BatteryCfg] = None
    warnings: list = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("warnings")
        return {k: v for k, v in d.items() if v is not None}


SECTIONS = {
    "corridor": CorridorCfg, "traffic": TrafficCfg, "sim": SimCfg, "energy": EnergyCfg,
    "econ": EconCfg, "v2i": V2ICfg, "climate": ClimateCfg, "battery": BatteryCfg,
}
LIST_ITEM_TYPES = {
    ("corridor", "faults"): FaultCfg,
    ("traffic", "scripted"): ScriptedVehicleCfg,
    ("v2i", "thefts"): TheftCfg,
    ("v2i", "degradations"): DegradationCfg,
}
REQUIRED_SECTIONS = {"corridor": ("corridor", "traffic", "sim"), "battery": ("battery",)}


# --------------------------------------------------------------------------- parsing

def _hints(cls):
    return typing.get_type_hints(cls)


def _unwrap_optional(tp):
    args = typing.get_args(tp)
    if typing.get_origin(tp) in (typing.Union, types.UnionType) and type(None) in args:
        return next(a for a in args if a is not type(None)), True
    return tp, False


def _coerce(value, tp, key):
    tp, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        raise ScenarioError("INVALID_VALUE", f"{key} may not be null", key)
    if tp is bool:
        if not isinstance(value, bool):
            raise ScenarioError("INVALID_VALUE", f"{key} must be a boolean", key)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError("INVALID_VALUE", f"{key} must be an integer", key)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError("INVALID_VALUE", f"{key} must be a number", key)
        value = float(value)
        if not math.isfinite(value):
            raise ScenarioError("INVALID_VALUE", f"{key} must be finite", key)
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ScenarioError("INVALID_VALUE", f"{key} must be a string", key)
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ScenarioError("INVALID_VALUE", f"{key} must be an array", key)
        return value
    if tp is dict:
        if not isinstance(value, dict):
            raise ScenarioError("INVALID_VALUE", f"{key} must be a table", key)
        return value
    raise TypeError(tp)


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ScenarioError("INVALID_VALUE", f"{prefix} must be a table", prefix)
    hints = _hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ScenarioError("INVALID_VALUE", f"unknown key {prefix}.{unknown[0]}", f"{prefix}.{unknown[0]}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{prefix}.{f.name}"
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ScenarioError("MISSING_FIELD", f"required key {key} is absent", key)
            continue
        kwargs[f.name] = _coerce(data[f.name], hints[f.name], key)
    return cls(**kwargs)


def _build_list(cls, items, prefix):
    return [_build(cls, item, f"{prefix}[{i}]") for i, item in enumerate(items)]


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a Scenario from a parsed document."""
    if not isinstance(doc, dict):
        raise ScenarioError("PARSE_ERROR", "document root must be a table")
    top = {"kind", "name", "description"} | set(SECTIONS)
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ScenarioError("INVALID_VALUE", f"unknown key {unknown[0]}", unknown[0])
    kind = doc.get("kind", "corridor")
    if kind not in REQUIRED_SECTIONS:
        raise ScenarioError("INVALID_VALUE", f"kind must be one of {sorted(REQUIRED_SECTIONS)}", "kind")

    required = REQUIRED_SECTIONS[kind]
    for name in required:
        if name not in doc:
            required_keys = [f.name for f in dataclasses.fields(SECTIONS[name])
                             if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
            key = f"{name}.{required_keys[0]}" if required_keys else name
            raise ScenarioError("MISSING_FIELD", f"required key {key} is absent", key)

    sc = Scenario(kind=kind, name=_coerce(doc.get("name", ""), str, "name"),
                  description=_coerce(doc.get("description", ""), str, "description"))
    for name, cls in SECTIONS.items():
        if name in doc:
            setattr(sc, name, _build(cls, doc[name], name))
    for (section, attr), cls in LIST_ITEM_TYPES.items():
        sec = getattr(sc, section)
        if sec is not None:
            setattr(sec, attr, _build_list(cls, getattr(sec, attr), f"{section}.{attr}"))
    if sc.traffic is not None:
        classes = copy.deepcopy(DEFAULT_CLASSES)
        for cname, cdata in sc.traffic.classes.items():
            if isinstance(cdata, VehicleClassCfg):
                classes[cname] = cdata
                continue
            if cname not in CLASS_NAMES:
                raise ScenarioError("INVALID_VALUE", f"unknown vehicle class {cname}",
                                    f"traffic.classes.{cname}")
            merged = dataclasses.asdict(classes[cname])
            extra = sorted(set(cdata) - set(merged)) if isinstance(cdata, dict) else []
            if extra:
                raise ScenarioError("INVALID_VALUE", f"unknown key traffic.classes.{cname}.{extra[0]}",
                                    f"traffic.classes.{cname}.{extra[0]}")
            merged.update(cdata)
            classes[cname] = _build(VehicleClassCfg, merged, f"traffic.classes.{cname}")
        sc.traffic.classes = classes
    validate(sc)
    return sc


def load_scenario(text: str | bytes) -> Scenario:
    """Parse a TOML scenario document and return a validated :class:`Scenario`."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ScenarioError("PARSE_ERROR", f"document is not UTF-8: {exc}") from exc
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError("PARSE_ERROR", str(exc)) from exc
    return scenario_from_dict(doc)


def load_scenario_file(path) -> Scenario:
    return load_scenario(Path(path).read_bytes())


def parse_document(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError("PARSE_ERROR", str(exc)) from exc


def set_path(doc: dict, dotted: str, value) -> dict:
    """Return a deep copy of ``doc`` with ``dotted`` (e.g. ``traffic.speed_kmh``) set."""
    out = copy.deepcopy(doc)
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ScenarioError("INVALID_VALUE", f"{dotted} does not name a table key", dotted)
    node[parts[-1]] = value
    return out


# --------------------------------------------------------------------------- validation

def _check(cond: bool, key: str, msg: str):
    if not cond:
        raise ScenarioError("INVALID_VALUE", f"{key}: {msg}", key)


def _nonneg(obj, prefix, names):
    for n in names:
        v = getattr(obj, n)
        if v is not None:
            _check(v >= 0, f"{prefix}.{n}", "must be >= 0")


def _warn(sc: Scenario, msg: str):
    sc.warnings.append(msg)
    warnings.warn(msg, ScenarioWarning, stacklevel=3)


def validate(sc: Scenario) -> None:
    if sc.kind == "battery":
        b = sc.battery
        _nonneg(b, "battery", ["km_per_day", "consumption_kwh_per_km"])
        _check(b.capacity_kwh > 0, "battery.capacity_kwh", "must be > 0")
        return

    c, t, s = sc.corridor, sc.traffic, sc.sim
    _nonneg(c, "corridor", ["length_m", "coil_length_m", "row_power_kw", "sensor_lead_m",
                            "ramp_ms", "hold_ms", "standby_w", "r_th_c_per_kw"])
    _check(c.pitch_m > 0, "corridor.pitch_m", "must be > 0")
    _check(c.coil_length_m <= c.pitch_m, "corridor.coil_length_m", "coil length exceeds pitch")
    _check(c.rows in (1, 2), "corridor.rows", "must be 1 or 2")
    _check(0 < c.overlap_factor <= 1, "corridor.overlap_factor", "must lie in (0, 1]")
    _check(c.coverage > 0, "corridor.coil_length_m", "energized coverage must be > 0")
    _check(c.ramp_ms <= 200, "corridor.ramp_ms", "activation ramp is limited to 200 ms")
    _check(c.tau_s > 0, "corridor.tau_s", "must be > 0")
    _check(c.resume_c < c.derate_c < c.cutoff_c, "corridor.derate_c",
           "thresholds must satisfy resume < derate < cutoff")
    _check(c.rsu_span_segments >= 1, "corridor.rsu_span_segments", "must be >= 1")
    try:
        nodes = [(float(a), float(b)) for a, b in c.efficiency_nodes]
    except (TypeError, ValueError):
        raise ScenarioError("INVALID_VALUE", "corridor.efficiency_nodes: expected [[speed, eta], ...]",
                            "corridor.efficiency_nodes") from None
    _check(len(nodes) >= 1 and all(b > a for (a, _), (b, _) in zip(nodes, nodes[1:])),
           "corridor.efficiency_nodes", "speeds must be strictly increasing")
    _check(all(0 < e < 1 for _, e in nodes), "corridor.efficiency_nodes", "efficiency must lie in (0, 1)")
    n_seg = int(c.length_m // c.pitch_m)
    for i, f in enumerate(c.faults):
        _check(0 <= f.segment < max(n_seg, 1), f"corridor.faults[{i}].segment", "out of range")

    _nonneg(t, "traffic", ["arrival_rate_vph", "offset_sd_m", "offset_max_m", "max_accel_mps2"])
    _check(t.headway_s > 0, "traffic.headway_s", "must be > 0")
    _check(t.lanes >= 1, "traffic.lanes", "must be >= 1")
    unknown = sorted(set(t.mix) - set(CLASS_NAMES))
    _check(not unknown, f"traffic.mix.{unknown[0] if unknown else ''}", "unknown vehicle class")
    _check(all(isinstance(v, (int, float)) and v >= 0 for v in t.mix.values()), "traffic.mix",
           "fractions must be numbers >= 0")
    _check(abs(sum(t.mix.values()) - 1.0) <= 1e-9, "traffic.mix", "fractions must sum to 1")
    for name, vc in t.classes.items():
        for attr in ("capacity_kwh", "receiver_kw", "consumption_kwh_per_km"):
            _check(getattr(vc, attr) > 0, f"traffic.classes.{name}.{attr}", "must be > 0")
        _check(vc.speed_sd_kmh >= 0, f"traffic.classes.{name}.speed_sd_kmh", "must be >= 0")
    _check(0 < t.speed_min_kmh <= t.speed_max_kmh, "traffic.speed_min_kmh", "need 0 < min <= max")
    if t.speed_kmh is not None:
        _check(t.speed_kmh > 0, "traffic.speed_kmh", "must be > 0")
    _check(t.offset_max_m <= 0.5, "traffic.offset_max_m", "lateral offset is limited to 0.5 m")
    _check(0 <= t.soc_in_min <= t.soc_in_max <= 1, "traffic.soc_in_min", "need 0 <= min <= max <= 1")
    if t.hourly_profile is not None:
        _check(len(t.hourly_profile) == 24 and all(isinstance(x, (int, float)) and x >= 0
                                                   for x in t.hourly_profile),
               "traffic.hourly_profile", "need 24 non-negative multipliers")
    for i, v in enumerate(t.scripted):
        _check(v.vehicle_class in CLASS_NAMES, f"traffic.scripted[{i}].vehicle_class", "unknown class")
        _check(v.t_s >= 0, f"traffic.scripted[{i}].t_s", "must be >= 0")
        _check(0 <= v.soc <= 1, f"traffic.scripted[{i}].soc", "must lie in [0, 1]")
        _check(abs(v.offset_m) <= 0.5, f"traffic.scripted[{i}].offset_m", "limited to 0.5 m")
        if v.speed_kmh is not None:
            _check(v.speed_kmh > 0, f"traffic.scripted[{i}].speed_kmh", "must be > 0")

    e = sc.energy
    _nonneg(e, "energy", ["pv_area_m2", "annual_insolation_kwh_m2", "grid_peak_kw", "v2g_buses",
                          "v2g_kw_per_bus", "buffer_kwh", "buffer_max_kw"])
    _check(e.grid_capacity_kw > 0, "energy.grid_capacity_kw", "must be > 0")
    _check(0 <= e.pv_efficiency <= 1, "energy.pv_efficiency", "must lie in [0, 1]")
    _check(0 < e.buffer_rte <= 1, "energy.buffer_rte", "must lie in (0, 1]")
    _check(0 <= e.buffer_initial_frac <= 1, "energy.buffer_initial_frac", "must lie in [0, 1]")
    _check(-90 < e.latitude_deg < 90, "energy.latitude_deg", "must lie in (-90, 90)")
    _check(0 <= e.shed_trigger, "energy.shed_trigger", "must be >= 0")
    missing = sorted({"solar", "buffer", "grid_offpeak", "grid_peak", "v2g"} - set(e.source_cost))
    _check(not missing, "energy.source_cost", f"missing cost for {missing[0] if missing else ''}")

    k = sc.econ
    _nonneg(k, "econ", ["capex_per_km", "tariff", "emission_factor_kg_per_km", "savings_kwh_per_km",
                        "reference_consumption_kwh_per_km", "served_vehicle_km_per_day"])
    _check(k.horizon_years >= 1, "econ.horizon_years", "must be >= 1")
    _check(0 <= k.opex_frac <= 0.2, "econ.opex_frac", "must lie in [0, 0.2]")
    _check(k.currency in ("USD", "INR"), "econ.currency", "must be USD or INR")
    _check(k.usd_inr > 0, "econ.usd_inr", "must be > 0")

    _check(s.duration_s >= 0, "sim.duration_s", "must be >= 0")
    _check(1 <= s.timestep_ms <= 1000, "sim.timestep_ms", "must lie in [1, 1000] ms")
    _check(0 <= s.seed < 2 ** 64, "sim.seed", "must be a 64-bit unsigned integer")
    _check(1 <= s.start_day <= 365, "sim.start_day", "must lie in [1, 365]")
    _check(s.rng_policy in ("per-entity", "shared"), "sim.rng_policy", "must be per-entity or shared")
    _check(s.timestep_ms / 1000 < t.headway_s, "sim.timestep_ms", "must be shorter than the headway")

    v = sc.v2i
    _check(1 <= v.latency_ms <= 100, "v2i.latency_ms", "must lie in [1, 100] ms")
    _check(v.window_s > 0, "v2i.window_s", "must be > 0")
    _check(v.maintenance_windows >= 1, "v2i.maintenance_windows", "must be >= 1")
    for i, th in enumerate(v.thefts):
        _check(0 <= th.segment < max(n_seg, 1), f"v2i.thefts[{i}].segment", "out of range")
        _check(th.kwh >= 0, f"v2i.thefts[{i}].kwh", "must be >= 0")
    for i, dg in enumerate(v.degradations):
        _check(0 <= dg.segment < max(n_seg, 1), f"v2i.degradations[{i}].segment", "out of range")
        _check(0 <= dg.factor <= 1, f"v2i.degradations[{i}].factor", "must lie in [0, 1]")

    cl = sc.climate
    _check(0 < cl.friction_wet <= 1.2 and 0 < cl.friction_dry <= 1.2, "climate.friction_dry",
           "friction must lie in (0, 1.2]")

    mean_rate = t.arrival_rate_vph
    if t.hourly_profile is not None:
        mean_rate = t.arrival_rate_vph * sum(t.hourly_profile) / 24.0
    lo, hi = STUDIED_RATE_VPH
    if not lo <= mean_rate <= hi:
        _warn(sc, f"traffic.arrival_rate_vph: mean rate {mean_rate:g} veh/h lies outside the "
                  f"studied range [{lo:g}, {hi:g}]")
    if not t.speed_min_kmh >= 20 or not t.speed_max_kmh <= 70:
        _warn(sc, "traffic speed bounds extend beyond the studied 20-70 km/h range")


# --------------------------------------------------------------------------- JSON Schema

def _schema_for(tp) -> dict:
    # TOML has no null, so optional keys are simply omitted from documents
    tp, _ = _unwrap_optional(tp)
    return dict({bool: {"type": "boolean"}, int: {"type": "integer"}, float: {"type": "number"},
                 str: {"type": "string"}, list: {"type": "array"}, dict: {"type": "object"}}[tp])


def _dataclass_schema(cls) -> dict:
    hints = _hints(cls)
    props, required = {}, []
    for f in dataclasses.fields(cls):
        props[f.name] = _schema_for(hints[f.name])
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            required.append(f.name)
    out = {"type": "object", "additionalProperties": False, "properties": props}
    if required:
        out["required"] = required
    return out


def scenario_json_schema() -> dict:
    """JSON Schema (draft 2020-12) describing a scenario document."""
    sections = {}
    for name, cls in SECTIONS.items():
        sch = _dataclass_schema(cls)
        for (sec, attr), item_cls in LIST_ITEM_TYPES.items():
            if sec == name:
                sch["properties"][attr] = {"type": "array", "items": _dataclass_schema(item_cls)}
        sections[name] = sch
    cls_schema = _dataclass_schema(VehicleClassCfg)
    cls_schema.pop("required", None)
    sections["traffic"]["properties"]["classes"] = {
        "type": "object", "additionalProperties": False,
        "properties": {n: cls_schema for n in CLASS_NAMES}}
    sections["traffic"]["properties"]["mix"] = {
        "type": "object", "additionalProperties": False,
        "properties": {n: {"type": "number", "minimum": 0} for n in CLASS_NAMES}}
    sections["traffic"]["properties"]["hourly_profile"] = {
        "type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 24, "maxItems": 24}
    sections["sim"]["properties"]["timestep_ms"].update(minimum=1, maximum=1000)
    sections["sim"]["properties"]["rng_policy"]["enum"] = ["per-entity", "shared"]
    sections["corridor"]["properties"]["rows"]["enum"] = [1, 2]
    sections["econ"]["properties"]["currency"]["enum"] = ["USD", "INR"]
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "ERS corridor scenario",
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "kind": {"enum": ["corridor", "battery"]},
            "name": {"type": "string"},
            "description": {"type": "string"},
            **sections,
        },
        "if": {"properties": {"kind": {"const": "battery"}}, "required": ["kind"]},
        "then": {"required": ["battery"]},
        "else": {"required": ["corridor", "traffic", "sim"]},
    }


def preset_names() -> list[str]:
    from importlib import resources
    files = resources.files("ers_sim") / "presets"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    from importlib import resources
    path = resources.files("ers_sim") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ScenarioError("INVALID_VALUE", f"unknown preset {name!r}; choose from {preset_names()}")
    return path.read_text(encoding="utf-8")


def load_preset(name: str) -> Scenario:
    return load_scenario(preset_text(name))


def copy_scenario(sc: Scenario, **section_updates: Any) -> Scenario:
    """Deep copy with shallow per-section overrides, e.g. ``sim={"duration_s": 10}``."""
    out = copy.deepcopy(sc)
    for section, updates in section_updates.items():
        obj = getattr(out, section)
        for k, v in updates.items():
            if not hasattr(obj, k):
                raise AttributeError(f"{section}.{k}")
            item_cls = LIST_ITEM_TYPES.get((section, k))
            if item_cls is not None:
                v = [x if isinstance(x, item_cls) else _build(item_cls, x, f"{section}.{k}[{i}]")
                     for i, x in enumerate(v)]
            setattr(obj, k, v)
    out.warnings = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScenarioWarning)
        validate(out)
    return out
