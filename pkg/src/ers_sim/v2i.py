"""Vehicle-to-infrastructure layer: charging sessions, billing hash chain, anomaly alerts."""
from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from .errors import DuplicateSession, NegativeKwh, SessionClosed

GENESIS_HASH = "0" * 64
LEDGER_FIELDS = ("index", "timestamp_ms", "session_id", "segment_id", "kwh", "tariff_id", "prev_hash")
CEILING_SOC = 0.90
_KWH_RE = re.compile(r"^[0-9]+\.[0-9]{3}$")


# --------------------------------------------------------------------------- messages

def _nonneg(name, value):
    if value < 0:
        raise NegativeKwh(f"{name} must be >= 0, got {value}")


@dataclass(frozen=True)
class SessionRequest:
    vehicle_id: int
    soc: float
    requested_kwh: float
    auth_token: str = ""
    t_ms: float = 0.0

    def __post_init__(self):
        _nonneg("requested_kwh", self.requested_kwh)


@dataclass(frozen=True)
class SessionGrant:
    session_id: str
    vehicle_id: int
    tariff_id: str
    t_ms: float  # delivery time at the vehicle


@dataclass(frozen=True)
class SessionDeny:
    vehicle_id: int
    reason: str
    t_ms: float


@dataclass(frozen=True)
class Telemetry:
    session_id: str
    segment_id: int
    kwh: float
    t_ms: float

    def __post_init__(self):
        _nonneg("kwh", self.kwh)


@dataclass(frozen=True)
class SessionEnd:
    session_id: str
    total_kwh: float
    t_ms: float

    def __post_init__(self):
        _nonneg("total_kwh", self.total_kwh)


V2IMessage = Union[SessionRequest, SessionGrant, SessionDeny, Telemetry, SessionEnd]


class SessionState(enum.Enum):
    OPEN = "Open"
    CLOSED = "Closed"
    ABORTED = "Aborted"


@dataclass
class ChargingSession:
    session_id: str
    vehicle_id: int
    tariff_id: str
    opened_ms: float
    granted_ms: float
    closed_ms: Optional[float] = None
    wh: int = 0  # accumulated telemetry in integer Wh
    state: SessionState = SessionState.OPEN
    zone_wh: dict = field(default_factory=dict)

    @property
    def kwh(self) -> float:
        return self.wh / 1000.0


# --------------------------------------------------------------------------- ledger

def format_kwh(kwh) -> str:
    """Fixed three-decimal string. Integers are read as Wh."""
    if isinstance(kwh, (int, np.integer)) and not isinstance(kwh, bool):
        wh = int(kwh)
    else:
        wh = int(round(float(kwh) * 1000))
    sign = "-" if wh < 0 else ""
    wh = abs(wh)
    return f"{sign}{wh // 1000}.{wh % 1000:03d}"


def canonical_bytes(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def entry_hash(payload: dict) -> str:
    return hashlib.sha256(canonical_bytes({k: payload[k] for k in LEDGER_FIELDS})).hexdigest()


@dataclass(frozen=True)
class LedgerEntry:
    index: int
    timestamp_ms: int
    session_id: str
    segment_id: int
    kwh: str
    tariff_id: str
    prev_hash: str
    hash: str

    def payload(self) -> dict:
        return {k: getattr(self, k) for k in LEDGER_FIELDS}

    def to_dict(self) -> dict:
        d = self.payload()
        d["hash"] = self.hash
        return d

    def to_line(self) -> str:
        return canonical_bytes(self.to_dict()).decode("utf-8")


class Ledger:
    """Append-only hash chain. Single writer."""

    def __init__(self, entries: Iterable[LedgerEntry] = ()):
        self.entries: list[LedgerEntry] = list(entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def head(self) -> str:
        return self.entries[-1].hash if self.entries else GENESIS_HASH

    def append(self, session_id: str, segment_id: int, kwh, timestamp_ms: int, tariff_id: str) -> LedgerEntry:
        kwh_s = kwh.strip() if isinstance(kwh, str) else format_kwh(kwh)
        if kwh_s.startswith(("-", "\u2212")):
            raise NegativeKwh(f"kwh must be >= 0, got {kwh_s}")
        if not _KWH_RE.match(kwh_s):
            raise ValueError(f"kwh must be a fixed three-decimal string, got {kwh_s!r}")
        payload = dict(index=len(self.entries), timestamp_ms=int(timestamp_ms), session_id=str(session_id),
                       segment_id=int(segment_id), kwh=kwh_s, tariff_id=str(tariff_id), prev_hash=self.head)
        entry = LedgerEntry(hash=entry_hash(payload), **payload)
        self.entries.append(entry)
        return entry

    def lines(self) -> list[str]:
        return [e.to_line() for e in self.entries]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.lines():
                fh.write(line + "\n")

    @classmethod
    def read(cls, path) -> list[bytes]:
        with open(path, "rb") as fh:
            return [ln.rstrip(b"\n") for ln in fh]


def append_billing_entry(ledger: Ledger, session: ChargingSession, segment_id: int, kwh,
                         timestamp_ms: int) -> LedgerEntry:
    if session.state is not SessionState.OPEN:
        raise SessionClosed(f"session {session.session_id} is {session.state.value}")
    return ledger.append(session.session_id, segment_id, kwh, timestamp_ms, session.tariff_id)


def _as_record(item):
    """Return ``(dict, raw bytes or None)`` for an entry given in any supported form."""
    if isinstance(item, LedgerEntry):
        return item.to_dict(), None
    if isinstance(item, dict):
        return item, None
    raw = item.encode("utf-8") if isinstance(item, str) else bytes(item)
    return json.loads(raw.decode("utf-8")), raw


def verify_ledger(ledger) -> Optional[int]:
    """``None`` when the chain is intact, else the first failing index.

    Accepts a :class:`Ledger`, entries, dicts, or serialized lines. Lines must
    also be byte-identical to their canonical form.
    """
    prev = GENESIS_HASH
    for i, item in enumerate(ledger):
        try:
            rec, raw = _as_record(item)
            if set(rec) != set(LEDGER_FIELDS) | {"hash"}:
                return i
            if raw is not None and raw != canonical_bytes(rec):
                return i
            if rec["index"] != i or rec["prev_hash"] != prev or rec["hash"] != entry_hash(rec):
                return i
        except (ValueError, TypeError, UnicodeDecodeError):
            return i
        prev = rec["hash"]
    return None


# --------------------------------------------------------------------------- sessions

class RoadsideUnit:
    """Grants sessions, collects telemetry, and closes sessions into the ledger."""

    def __init__(self, latency_ms: float = 20.0, tariff_id: str = "t1", ledger: Ledger | None = None,
                 keep_messages: bool = True):
        self.latency_ms = float(latency_ms)
        self.tariff_id = tariff_id
        self.ledger = ledger if ledger is not None else Ledger()
        self.sessions: dict[str, ChargingSession] = {}
        self.open_by_vehicle: dict[int, str] = {}
        self.keep_messages = keep_messages
        self.messages: list = []
        self.n_telemetry = 0
        self.causality_violations = 0
        self._next = 0

    def _log(self, msg):
        if self.keep_messages:
            self.messages.append(msg)

    def open_session(self, request: SessionRequest) -> SessionGrant | SessionDeny:
        if request.vehicle_id in self.open_by_vehicle:
            raise DuplicateSession(f"vehicle {request.vehicle_id} already has session "
                                   f"{self.open_by_vehicle[request.vehicle_id]}")
        self._log(request)
        # request travels to the RSU, the answer travels back
        reply_ms = request.t_ms + 2 * self.latency_ms
        if request.soc >= CEILING_SOC:
            deny = SessionDeny(request.vehicle_id, "NOT_NEEDED", reply_ms)
            self._log(deny)
            return deny
        sid = f"s{self._next}"
        self._next += 1
        self.sessions[sid] = ChargingSession(sid, request.vehicle_id, self.tariff_id, request.t_ms, reply_ms)
        self.open_by_vehicle[request.vehicle_id] = sid
        grant = SessionGrant(sid, request.vehicle_id, self.tariff_id, reply_ms)
        self._log(grant)
        return grant

    def record_telemetry(self, session_id: str, segment_id: int, wh: int, t_ms: float,
                         zone: int | None = None) -> Telemetry:
        """Record ``wh`` whole watt-hours delivered in a session."""
        s = self.sessions[session_id]
        if s.state is not SessionState.OPEN:
            raise SessionClosed(f"session {session_id} is {s.state.value}")
        if wh < 0:
            raise NegativeKwh(f"telemetry must be >= 0, got {wh} Wh")
        if t_ms < s.granted_ms:
            self.causality_violations += 1
        key = segment_id if zone is None else zone
        s.wh += int(wh)
        s.zone_wh[key] = s.zone_wh.get(key, 0) + int(wh)
        self.n_telemetry += 1
        msg = Telemetry(session_id, segment_id, wh / 1000.0, t_ms)
        self._log(msg)
        return msg

    def close_session(self, session_id: str, t_ms: float, zone_segment=None, aborted: bool = False,
                      zone_wh: dict | None = None) -> SessionEnd:
        """Write one ledger entry per zone the session drew energy in, then close.

        ``zone_segment`` maps a zone key to the segment id stored in the ledger
        (identity when omitted). ``zone_wh`` supplies per-zone totals when the
        caller tracked telemetry itself; if telemetry was also recorded here the
        two must agree.
        """
        s = self.sessions[session_id]
        if s.state is not SessionState.OPEN:
            raise SessionClosed(f"session {session_id} is {s.state.value}")
        if zone_wh is not None:
            zone_wh = {k: int(v) for k, v in zone_wh.items() if v}
            if s.zone_wh and s.zone_wh != zone_wh:
                raise ValueError(f"session {session_id}: telemetry totals disagree")
            s.zone_wh = zone_wh
            s.wh = sum(zone_wh.values())
        for key in sorted(s.zone_wh):
            wh = s.zone_wh[key]
            if wh > 0:
                seg = key if zone_segment is None else zone_segment(key)
                append_billing_entry(self.ledger, s, seg, wh, int(round(t_ms)))
        s.state = SessionState.ABORTED if aborted else SessionState.CLOSED
        s.closed_ms = t_ms
        del self.open_by_vehicle[s.vehicle_id]
        end = SessionEnd(session_id, s.kwh, t_ms)
        self._log(end)
        return end


def quantize_wh(carry_kwh, final: bool = False):
    """Split accumulated kWh into whole Wh to report now and the carry left over."""
    carry = np.asarray(carry_kwh, dtype=float)
    scaled = carry * 1000.0
    wh = np.rint(scaled) if final else np.floor(scaled + 1e-9)
    wh = np.maximum(wh, 0).astype(np.int64)
    return wh, carry - wh / 1000.0


# --------------------------------------------------------------------------- anomalies

class AlertKind(str, enum.Enum):
    UNAUTHORIZED_DRAW = "UNAUTHORIZED_DRAW"
    ENERGY_MISMATCH = "ENERGY_MISMATCH"
    MAINTENANCE = "MAINTENANCE"


@dataclass(frozen=True)
class Alert:
    kind: AlertKind
    segment: int
    window_start_s: float
    magnitude: float


class AnomalyDetector:
    """Per-segment, per-window checks of metered energy against vehicle telemetry.

    Metered energy above telemetry by more than the tolerance is an
    unauthorized draw (nobody is being billed for it); telemetry above the
    meter is a mismatch. A segment whose efficiency sits more than
    ``maintenance_drop`` below baseline for ``maintenance_windows`` windows in a
    row raises one MAINTENANCE alert per streak.
    """

    def __init__(self, n_segments: int, abs_tol_kwh: float = 0.01, rel_tol: float = 0.01,
                 maintenance_drop: float = 0.05, maintenance_windows: int = 3, baseline=None):
        self.n = n_segments
        self.abs_tol = abs_tol_kwh
        self.rel_tol = rel_tol
        self.drop = maintenance_drop
        self.windows = maintenance_windows
        self.baseline = (np.full(n_segments, np.nan) if baseline is None
                         else np.broadcast_to(np.asarray(baseline, dtype=float), (n_segments,)).copy())
        self.streak = np.zeros(n_segments, dtype=np.int64)

    def observe(self, window_start_s: float, metered_kwh, telemetry_kwh, efficiency=None) -> list[Alert]:
        metered = np.broadcast_to(np.asarray(metered_kwh, dtype=float), (self.n,))
        telem = np.broadcast_to(np.asarray(telemetry_kwh, dtype=float), (self.n,))
        tol = np.maximum(self.abs_tol, self.rel_tol * np.abs(metered))
        diff = metered - telem
        alerts = []
        for k in np.flatnonzero(np.abs(diff) > tol):
            kind = AlertKind.UNAUTHORIZED_DRAW if diff[k] > 0 else AlertKind.ENERGY_MISMATCH
            alerts.append(Alert(kind, int(k), float(window_start_s), float(abs(diff[k]))))
        if efficiency is not None:
            eff = np.broadcast_to(np.asarray(efficiency, dtype=float), (self.n,))
            seen = ~np.isnan(eff)
            fresh = seen & np.isnan(self.baseline)
            self.baseline[fresh] = eff[fresh]
            with np.errstate(invalid="ignore", divide="ignore"):
                rel_drop = 1.0 - eff / self.baseline
            low = seen & (rel_drop > self.drop)
            self.streak[seen & ~low] = 0
            self.streak[low] += 1
            for k in np.flatnonzero(low & (self.streak == self.windows)):
                alerts.append(Alert(AlertKind.MAINTENANCE, int(k), float(window_start_s), float(rel_drop[k])))
        return alerts


def detect_anomalies(metered_kwh, telemetry_kwh, efficiency=None, window_start_s: float = 0.0,
                     detector: AnomalyDetector | None = None, **kwargs) -> list[Alert]:
    """One-window convenience wrapper; pass ``detector`` to keep maintenance streaks across windows."""
    if detector is None:
        detector = AnomalyDetector(int(np.size(metered_kwh)), **kwargs)
    return detector.observe(window_start_s, metered_kwh, telemetry_kwh, efficiency)
