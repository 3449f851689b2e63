"""Vehicle arrivals and longitudinal motion.

Arrivals are a Poisson process, homogeneous or with hourly rate multipliers,
generated by time-changing one stream of unit exponentials. Raising the rate
with the same seed therefore moves every arrival earlier and never removes a
vehicle. Per-vehicle attributes (class, target speed, lateral offset, entry
SoC) come from a substream keyed by the vehicle index.

Motion is intentionally minimal: each vehicle approaches its target speed with
bounded acceleration, never exceeding ``gap / headway`` behind its leader.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .battery import BatteryState
from .errors import InvalidMix
from .rng import StreamFactory
from .scenario import CLASS_NAMES, DEFAULT_CLASSES

KMH = 1 / 3.6


@dataclass(frozen=True)
class ArrivalSchedule:
    t_s: np.ndarray
    cls: np.ndarray  # index into CLASS_NAMES
    target_kmh: np.ndarray
    offset_m: np.ndarray
    soc_in: np.ndarray
    scripted: np.ndarray

    def __post_init__(self):
        for name in ("t_s", "cls", "target_kmh", "offset_m", "soc_in", "scripted"):
            getattr(self, name).setflags(write=False)

    def __len__(self):
        return len(self.t_s)

    def class_names(self) -> list[str]:
        return [CLASS_NAMES[i] for i in self.cls]


def _check_mix(mix: dict) -> np.ndarray:
    if any(k not in CLASS_NAMES for k in mix):
        raise InvalidMix(f"unknown class in mix: {sorted(set(mix) - set(CLASS_NAMES))}")
    w = np.array([float(mix.get(name, 0.0)) for name in CLASS_NAMES])
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidMix(f"mix fractions must be >= 0 and sum to 1 (got {w.sum()!r})")
    return np.cumsum(w)


def arrival_times(rate_vph: float, duration_s: float, rng: np.random.Generator,
                  hourly_profile=None, start_time_s: float = 0.0) -> np.ndarray:
    """Arrival times in ``[0, duration_s)`` by inverting the cumulative intensity."""
    if rate_vph < 0:
        raise ValueError("rate must be >= 0")
    if rate_vph == 0 or duration_s <= 0:
        return np.zeros(0)
    if hourly_profile is None:
        bounds = np.array([0.0, duration_s])
        rates = np.array([rate_vph / 3600.0])
    else:
        prof = np.asarray(hourly_profile, dtype=float)
        first = (np.floor(start_time_s / 3600.0) + 1) * 3600.0 - start_time_s
        edges = np.arange(first, duration_s, 3600.0)
        bounds = np.concatenate([[0.0], edges, [duration_s]])
        hours = (np.floor((start_time_s + bounds[:-1]) / 3600.0 + 1e-9) % 24).astype(int)
        rates = rate_vph * prof[hours] / 3600.0
    cum = np.concatenate([[0.0], np.cumsum(rates * np.diff(bounds))])
    total = cum[-1]
    if total <= 0:
        return np.zeros(0)
    chunks, acc = [], 0.0
    while acc <= total:
        e = rng.standard_exponential(1024)
        c = acc + np.cumsum(e)
        chunks.append(c)
        acc = c[-1]
    s = np.concatenate(chunks)
    s = s[s < total]
    idx = np.searchsorted(cum, s, side="left")
    return bounds[idx - 1] + (s - cum[idx - 1]) / rates[idx - 1]


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float, lo: float, hi: float) -> float:
    if sd <= 0:
        return float(min(max(mean, lo), hi))
    for _ in range(32):
        x = rng.normal(mean, sd)
        if lo <= x <= hi:
            return float(x)
    return float(min(max(mean, lo), hi))


def generate_arrivals(rate_veh_per_h: float, mix: dict, duration_s: float, seed: int,
                      classes: dict = DEFAULT_CLASSES, *, hourly_profile=None, start_time_s=0.0,
                      speed_kmh: Optional[float] = None, speed_bounds=(20.0, 70.0),
                      offset_sd_m=0.08, offset_max_m=0.3, soc_range=(0.30, 0.90),
                      rng_policy="per-entity", scripted=()) -> ArrivalSchedule:
    """Arrival schedule for one run, sorted by time (scripted vehicles merged in)."""
    cum_mix = _check_mix(mix)
    streams = StreamFactory(seed, rng_policy)
    times = arrival_times(rate_veh_per_h, duration_s, streams.get("arrivals"), hourly_profile,
                          start_time_s)
    n = len(times)
    cls = np.zeros(n, dtype=np.int64)
    target = np.zeros(n)
    offset = np.zeros(n)
    soc = np.zeros(n)
    lo, hi = speed_bounds
    for i in range(n):
        g = streams.get("vehicle", i)
        c = int(np.searchsorted(cum_mix, g.random(), side="right"))
        c = min(c, len(CLASS_NAMES) - 1)
        vc = classes[CLASS_NAMES[c]]
        cls[i] = c
        target[i] = _truncated_normal(g, vc.speed_mean_kmh, vc.speed_sd_kmh, lo, hi)
        offset[i] = _truncated_normal(g, 0.0, offset_sd_m, -offset_max_m, offset_max_m)
        soc[i] = g.uniform(*soc_range)
    if speed_kmh is not None:
        target[:] = speed_kmh
    flag = np.zeros(n, dtype=bool)

    if scripted:
        st = np.array([v.t_s for v in scripted], dtype=float)
        keep = st < duration_s
        sv = [v for v, k in zip(scripted, keep) if k]
        times = np.concatenate([times, st[keep]])
        cls = np.concatenate([cls, [CLASS_NAMES.index(v.vehicle_class) for v in sv]]).astype(np.int64)
        target = np.concatenate([target, [
            v.speed_kmh if v.speed_kmh is not None else
            (speed_kmh if speed_kmh is not None else classes[v.vehicle_class].speed_mean_kmh)
            for v in sv]])
        offset = np.concatenate([offset, [v.offset_m for v in sv]])
        soc = np.concatenate([soc, [v.soc for v in sv]])
        flag = np.concatenate([flag, np.ones(len(sv), dtype=bool)])
        order = np.argsort(times, kind="stable")
        times, cls, target, offset, soc, flag = (a[order] for a in (times, cls, target, offset, soc, flag))
    return ArrivalSchedule(t_s=np.asarray(times, dtype=float), cls=cls, target_kmh=target,
                           offset_m=offset, soc_in=soc, scripted=flag)


def schedule_from_scenario(sc) -> ArrivalSchedule:
    t = sc.traffic
    return generate_arrivals(
        t.arrival_rate_vph, t.mix, sc.sim.duration_s, sc.sim.seed, t.classes,
        hourly_profile=t.hourly_profile, start_time_s=sc.sim.start_time_s, speed_kmh=t.speed_kmh,
        speed_bounds=(t.speed_min_kmh, t.speed_max_kmh), offset_sd_m=t.offset_sd_m,
        offset_max_m=t.offset_max_m, soc_range=(t.soc_in_min, t.soc_in_max),
        rng_policy=sc.sim.rng_policy, scripted=t.scripted)


# --------------------------------------------------------------------------- motion

def next_speed(v_mps, target_mps, gap_m, dt_s, headway_s=1.5, max_accel=2.0):
    """Speed for the coming step: brake at once to the headway limit, accelerate at most ``max_accel``."""
    limit = np.maximum(0.0, np.asarray(gap_m, dtype=float) / headway_s)
    desired = np.minimum(target_mps, limit)
    return np.where(desired < v_mps, desired, np.minimum(desired, v_mps + max_accel * dt_s))


@dataclass
class Vehicle:
    id: int
    vehicle_class: str
    position_m: float
    speed_kmh: float
    target_kmh: float
    lateral_offset_m: float
    battery: BatteryState
    session: Optional[str] = None
    entry_s: float = 0.0
    exit_s: Optional[float] = None
    clock_s: float = 0.0
    distance_m: float = 0.0
    history: list = field(default_factory=list, repr=False)

    @property
    def present(self) -> bool:
        return self.exit_s is None


def advance_vehicle(vehicle: Vehicle, dt_s: float, leader_gap_m: float = float("inf"),
                    leader_speed_kmh: float | None = None, corridor_length_m: float = float("inf"),
                    headway_s: float = 1.5, max_accel: float = 2.0) -> Vehicle:
    """Move one vehicle forward by ``dt_s`` and mark its exit past the corridor end.

    ``leader_speed_kmh`` is accepted for interface symmetry; the headway rule
    only uses the gap.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    if not vehicle.present:
        return vehicle
    v = float(next_speed(vehicle.speed_kmh * KMH, vehicle.target_kmh * KMH, leader_gap_m, dt_s,
                         headway_s, max_accel))
    x0 = vehicle.position_m
    x1 = x0 + v * dt_s
    if x1 >= corridor_length_m:
        vehicle.exit_s = vehicle.clock_s + ((corridor_length_m - x0) / v if v > 0 else dt_s)
        x1 = corridor_length_m
    vehicle.distance_m += x1 - x0
    vehicle.position_m = x1
    vehicle.speed_kmh = v / KMH
    vehicle.clock_s += dt_s
    return vehicle
