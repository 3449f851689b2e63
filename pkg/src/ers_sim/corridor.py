"""Physical layer: coil segment layout, activation state machine, thermal model.

Each segment is switched independently. An upstream sensor ``sensor_lead_m``
before the segment start reports an approaching vehicle; the segment then
ramps for ``ramp_ms`` and stays energized while its occupancy zone (sensor to
end of energized span) holds a vehicle, plus a short hold window.

Two implementations of the state machine live here. :func:`step_segment`
advances a single :class:`CoilSegment` with per-segment timers and is the
reference behavior. :class:`SegmentBank` advances all segments of a corridor
at once using absolute event times within a control step; the engine uses it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import InvalidGeometry


class SegmentState(IntEnum):
    IDLE = 0
    ARMED = 1
    ACTIVE = 2
    DERATED = 3
    FAULT = 4


S = SegmentState
TRANSITIONS = frozenset({
    (S.IDLE, S.ARMED),
    (S.ARMED, S.ACTIVE),
    (S.ARMED, S.IDLE),        # shed before the ramp completed
    (S.ACTIVE, S.IDLE),
    (S.ACTIVE, S.DERATED),
    (S.DERATED, S.ACTIVE),
    (S.DERATED, S.IDLE),
    (S.IDLE, S.FAULT), (S.ARMED, S.FAULT), (S.ACTIVE, S.FAULT), (S.DERATED, S.FAULT),
    (S.FAULT, S.IDLE),        # maintenance reset only
}) | frozenset((s, s) for s in S)

ENERGIZED = (S.ACTIVE, S.DERATED)
# plain ints for array comparisons in the bank
_IDLE, _ARMED, _ACTIVE, _DERATED, _FAULT = (int(s) for s in S)


@dataclass
class SegmentParams:
    ramp_ms: float = 200.0
    hold_ms: float = 50.0
    standby_w: float = 50.0
    derate_c: float = 80.0
    cutoff_c: float = 100.0
    resume_c: float = 70.0
    r_th_c_per_kw: float = 2.0
    tau_s: float = 120.0
    sensor_lead_m: float = 5.0

    @classmethod
    def from_config(cls, c) -> "SegmentParams":
        return cls(ramp_ms=c.ramp_ms, hold_ms=c.hold_ms, standby_w=c.standby_w, derate_c=c.derate_c,
                   cutoff_c=c.cutoff_c, resume_c=c.resume_c, r_th_c_per_kw=c.r_th_c_per_kw,
                   tau_s=c.tau_s, sensor_lead_m=c.sensor_lead_m)


@dataclass
class CoilSegment:
    index: int
    start_m: float
    span_m: float
    rows: int
    coverage: float
    p_tx_kw: float
    state: SegmentState = SegmentState.IDLE
    temperature_c: float = 25.0
    ramp_elapsed_ms: float = 0.0
    hold_remaining_ms: float = 0.0
    kwh_tx: float = 0.0
    kwh_delivered: float = 0.0
    activations: int = 0
    standby_kwh: float = 0.0
    idle_s: float = 0.0
    baseline_efficiency: float = 0.90
    thermal_lockout: bool = False
    ignored_signals: int = 0


def build_corridor(length_m: float, pitch_m: float, coil_len_m: float, rows: int, p_tx_kw: float,
                   overlap_factor: float = 0.72) -> list[CoilSegment]:
    """Lay out ``floor(length / pitch)`` segments at ``k * pitch``.

    ``p_tx_kw`` is the per-row transmit power. Coverage is the fraction of each
    pitch over which a receiver couples to an energized coil: the geometric
    fill ``rows * coil_len / pitch`` (capped at 1) times the staggered-row
    overlap factor.
    """
    if pitch_m <= 0 or coil_len_m < 0 or coil_len_m > pitch_m or rows not in (1, 2) or length_m < 0:
        raise InvalidGeometry(f"invalid geometry: pitch={pitch_m}, coil={coil_len_m}, rows={rows}")
    coverage = min(1.0, rows * coil_len_m / pitch_m) * overlap_factor
    n = int(length_m // pitch_m)
    return [CoilSegment(index=k, start_m=k * pitch_m, span_m=coverage * pitch_m, rows=rows,
                        coverage=coverage, p_tx_kw=rows * p_tx_kw) for k in range(n)]


def update_thermal(temperature_c: float, p_dissipated_kw, ambient_c, dt_s: float,
                   r_th_c_per_kw: float = 2.0, tau_s: float = 120.0):
    """Exact step of ``dT/dt = (p * R_th + ambient - T) / tau`` with constant inputs."""
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    steady = np.asarray(ambient_c) + np.asarray(p_dissipated_kw) * r_th_c_per_kw
    out = steady + (np.asarray(temperature_c) - steady) * math.exp(-dt_s / tau_s)
    return float(out) if np.ndim(out) == 0 else out


def _thermal_flags(state, temp, lockout, p: SegmentParams):
    """Apply derate and lockout thresholds after a temperature update."""
    lockout = np.where(temp > p.cutoff_c, True, np.where(temp < p.resume_c, False, lockout))
    state = np.where((state == _ACTIVE) & (temp > p.derate_c), _DERATED, state)
    state = np.where((state == _DERATED) & (temp <= p.derate_c), _ACTIVE, state)
    return state, lockout


def step_segment(seg: CoilSegment, detection, dt_ms: float, occupied: bool | None = None,
                 p_dissipated_kw: float = 0.0, ambient_c: float | None = None,
                 params: SegmentParams = SegmentParams()) -> CoilSegment:
    """Advance one segment by ``dt_ms``.

    ``detection`` is the upstream sensor signal at the start of the step: a
    bool (or None for no signal). Any other payload is ignored and counted.
    ``occupied`` says whether a vehicle is inside the occupancy zone during the
    step; it defaults to ``bool(detection)``. The segment is mutated and
    returned.
    """
    if dt_ms <= 0:
        raise ValueError("dt_ms must be positive")
    if detection is not None and not isinstance(detection, (bool, np.bool_)):
        seg.ignored_signals += 1
        detection = False
    detection = bool(detection)
    if occupied is None:
        occupied = detection
    idle_ms = 0.0

    if seg.state == S.IDLE:
        if detection:
            seg.state = S.ARMED
            seg.ramp_elapsed_ms = 0.0
            seg.activations += 1
        else:
            idle_ms = dt_ms
    remaining = dt_ms
    if seg.state == S.ARMED:
        need = params.ramp_ms - seg.ramp_elapsed_ms
        if need <= remaining:
            seg.state = S.ACTIVE
            seg.ramp_elapsed_ms = params.ramp_ms
            remaining -= need
            seg.hold_remaining_ms = params.hold_ms
        else:
            seg.ramp_elapsed_ms += remaining
            remaining = 0.0
    if seg.state in ENERGIZED:
        if occupied:
            seg.hold_remaining_ms = params.hold_ms
        else:
            seg.hold_remaining_ms -= remaining
            if seg.hold_remaining_ms <= 0:
                idle_ms = -seg.hold_remaining_ms
                seg.state = S.IDLE
                seg.hold_remaining_ms = 0.0

    seg.idle_s += idle_ms / 1000.0
    seg.standby_kwh += params.standby_w * idle_ms / 3.6e9
    if ambient_c is not None:
        seg.temperature_c = update_thermal(seg.temperature_c, p_dissipated_kw, ambient_c,
                                           dt_ms / 1000.0, params.r_th_c_per_kw, params.tau_s)
    state, lockout = _thermal_flags(np.array(int(seg.state)), np.array(seg.temperature_c),
                                    np.array(seg.thermal_lockout), params)
    seg.state = S(int(state))
    seg.thermal_lockout = bool(lockout)
    return seg


def inject_fault(seg: CoilSegment) -> CoilSegment:
    if seg.state != S.FAULT:
        seg.state = S.FAULT
    return seg


def maintenance_reset(seg: CoilSegment) -> CoilSegment:
    if seg.state == S.FAULT:
        seg.state = S.IDLE
        seg.ramp_elapsed_ms = seg.hold_remaining_ms = 0.0
    return seg


# --------------------------------------------------------------------------- weather

@dataclass(frozen=True)
class RoadCondition:
    ambient_c: float
    friction: float
    precipitation: bool


def road_condition(clock_s: float, day_of_year: int, climate) -> RoadCondition:
    """Ambient road temperature with seasonal and diurnal terms; wet-season friction.

    The seasonal peak is placed in mid-June and the diurnal peak at 15:00.
    """
    seasonal = climate.seasonal_amplitude_c * math.cos(2 * math.pi * (day_of_year - 166) / 365.0)
    hour = (clock_s / 3600.0) % 24.0
    diurnal = climate.diurnal_amplitude_c * math.sin(2 * math.pi * (hour - 9.0) / 24.0)
    wet_lo, wet_hi = climate.wet_days
    wet = wet_lo <= day_of_year <= wet_hi
    return RoadCondition(ambient_c=climate.ambient_mean_c + seasonal + diurnal,
                         friction=climate.friction_wet if wet else climate.friction_dry,
                         precipitation=wet)


def climate_band(climate) -> tuple[float, float]:
    amp = climate.seasonal_amplitude_c + climate.diurnal_amplitude_c
    return climate.ambient_mean_c - amp, climate.ambient_mean_c + amp


# --------------------------------------------------------------------------- vectorized bank

@dataclass
class SegmentBank:
    """All segments of a corridor as parallel arrays, advanced one control step at a time.

    Per step the engine calls :meth:`begin_step` with the earliest detection
    time of each segment, computes energy using the returned energized-from
    times, then calls :meth:`end_step` with the latest occupancy time.
    """

    n: int
    pitch_m: float
    span_m: float
    params: SegmentParams
    ambient_c: float = 25.0
    state: np.ndarray = field(init=False)
    active_at: np.ndarray = field(init=False)
    armed_det: np.ndarray = field(init=False)
    last_occ: np.ndarray = field(init=False)
    temperature_c: np.ndarray = field(init=False)
    lockout: np.ndarray = field(init=False)
    efficiency_factor: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.n
        self.state = np.zeros(n, dtype=np.int8)
        self.active_at = np.full(n, -np.inf)
        self.armed_det = np.full(n, np.nan)
        self.last_occ = np.full(n, -np.inf)
        self.temperature_c = np.full(n, float(self.ambient_c))
        self.lockout = np.zeros(n, dtype=bool)
        self.efficiency_factor = np.ones(n)
        self.kwh_tx = np.zeros(n)
        self.kwh_delivered = np.zeros(n)
        self.activations = np.zeros(n, dtype=np.int64)
        self.fault_count = np.zeros(n, dtype=np.int64)
        self.idle_s = np.zeros(n)
        self.peak_temp_c = self.temperature_c.copy()
        self.latencies_ms: list[np.ndarray] = []
        self.aborted = 0
        self._idle_pre = np.zeros(n)
        self._t0 = self._t1 = 0.0

    @property
    def standby_kwh(self) -> np.ndarray:
        return self.idle_s * self.params.standby_w / 3.6e6

    def inject_fault(self, k: int):
        if self.state[k] != _FAULT:
            self.state[k] = _FAULT
            self.fault_count[k] += 1

    def maintenance_reset(self, k: int):
        if self.state[k] == _FAULT:
            self.state[k] = _IDLE
            self.last_occ[k] = -np.inf

    def begin_step(self, t0: float, t1: float, det_time: np.ndarray) -> np.ndarray:
        """Process detections and ramp completions in ``[t0, t1]``.

        Returns, per segment, the time from which it is energized in this step
        (``inf`` when it is not energized at all).
        """
        p = self.params
        self._t0, self._t1 = t0, t1
        idle = self.state == _IDLE
        arm = np.flatnonzero(idle & (det_time < np.inf))
        self._idle_pre = np.where(idle, t1 - t0, 0.0)
        if len(arm):
            det = det_time[arm]
            self._idle_pre[arm] = np.maximum(det - t0, 0.0)
            self.state[arm] = _ARMED
            self.armed_det[arm] = det
            self.active_at[arm] = det + p.ramp_ms / 1000.0
            self.activations[arm] += 1

        goes = np.flatnonzero((self.state == _ARMED) & (self.active_at <= t1))
        if len(goes):
            self.state[goes] = _ACTIVE
            self.latencies_ms.append((self.active_at[goes] - self.armed_det[goes]) * 1000.0)

        energized = (self.state == _ACTIVE) | (self.state == _DERATED)
        return np.where(energized, np.maximum(t0, self.active_at), np.inf)

    def idle_seconds(self, occ_end: np.ndarray, shed: np.ndarray | None = None) -> np.ndarray:
        """Idle time within the current step given occupancy, without committing."""
        t0, t1 = self._t0, self._t1
        hold = self.params.hold_ms / 1000.0
        last = np.maximum(self.last_occ, occ_end)
        energized = (self.state == _ACTIVE) | (self.state == _DERATED)
        t_idle = np.maximum(last, self.active_at) + hold
        post = np.where(energized & (t_idle <= t1), t1 - np.maximum(t_idle, t0), 0.0)
        idle = self._idle_pre + post
        if shed is not None:
            idle = np.where(shed & (self.state != _FAULT), t1 - t0, idle)
        return idle

    def end_step(self, occ_end: np.ndarray, kwh_tx: np.ndarray, kwh_delivered: np.ndarray,
                 ambient_c: float, shed: np.ndarray | None = None, idle: np.ndarray | None = None):
        """Commit the step; ``idle`` may pass in an :meth:`idle_seconds` result computed for the same inputs."""
        p = self.params
        t0, t1 = self._t0, self._t1
        dt = t1 - t0
        hold = p.hold_ms / 1000.0
        if idle is None:
            idle = self.idle_seconds(occ_end, shed)
        self.last_occ = np.maximum(self.last_occ, occ_end)
        energized = (self.state == _ACTIVE) | (self.state == _DERATED)
        t_idle = np.maximum(self.last_occ, self.active_at) + hold
        self.state[energized & (t_idle <= t1)] = _IDLE
        if shed is not None and shed.any():
            hit = shed & (self.state != _FAULT) & (self.state != _IDLE)
            self.aborted += int(np.count_nonzero(hit & (self.state == _ARMED)))
            self.state[hit] = _IDLE
            self.last_occ[hit] = -np.inf
        self.idle_s += idle
        self.kwh_tx += kwh_tx
        self.kwh_delivered += kwh_delivered
        p_diss = np.maximum(kwh_tx - kwh_delivered, 0.0) * 3600.0 / dt
        self.temperature_c = update_thermal(self.temperature_c, p_diss, ambient_c, dt,
                                            p.r_th_c_per_kw, p.tau_s)
        self.state, self.lockout = _thermal_flags(self.state, self.temperature_c, self.lockout, p)
        self.state = self.state.astype(np.int8)
        np.maximum(self.peak_temp_c, self.temperature_c, out=self.peak_temp_c)

    def energized_count(self) -> int:
        return int(np.count_nonzero((self.state == _ACTIVE) | (self.state == _DERATED)))

    def all_latencies_ms(self) -> np.ndarray:
        return np.concatenate(self.latencies_ms) if self.latencies_ms else np.zeros(0)
