"""MAC/PHY layer: beacon traffic, channel access, and decode decisions.

Two broadcast MAC families are modeled: a slimmed CSMA/CA (listen, AIFS,
uniform backoff with freezing, no ACKs) and sidelink random resource
selection (one random slot per reservation period).  Reception is
threshold-based: a packet decodes iff RSSI clears the radio sensitivity
and the aggregate SINR clears the decode threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig

CAM_POS_TRIGGER = 4.0  # m
CAM_HEADING_TRIGGER = math.radians(4.0)
CAM_SPEED_TRIGGER = 0.5  # m/s
CAM_MIN_INTERVAL = 0.1  # s
CAM_MAX_INTERVAL = 1.0  # s


@dataclass(frozen=True)
class RadioProfile:
    rat_id: str
    tx_power_dbm: float = 30.0
    sensitivity_dbm: float = -93.0
    sinr_threshold_db: float = 10.0
    data_rate: float = 3e6  # bps, CSMA payload rate
    mcs: int | None = None  # sidelink MCS descriptor (informational)
    mac: str = "csma_ca"  # or "sidelink_random"
    # CSMA/CA constants (non-normative defaults)
    slot_time: float = 13e-6
    sifs: float = 32e-6
    cw_min: int = 15
    cs_threshold_dbm: float = -93.0
    preamble: float = 40e-6  # PHY preamble + SIGNAL field
    header_bytes: int = 36
    # sidelink constants
    reservation_period: float = 0.02
    slot_duration: float = 0.25e-3  # numerology 2, 60 kHz SCS
    pssch_blocks: int = 10
    blind_retx: int = 0  # blind retransmissions, off pending use
    rsrp_threshold_db: float | None = None  # parsed but unused (random selection)

    def __post_init__(self):
        if self.sensitivity_dbm >= self.tx_power_dbm:
            raise InvalidConfig("sensitivity must be below tx power")
        if self.mac not in ("csma_ca", "sidelink_random"):
            raise InvalidConfig(f"unknown mac {self.mac!r}")

    @property
    def aifs(self) -> float:
        return self.sifs + 2.0 * self.slot_time

    def airtime(self, payload_bytes: int) -> float:
        """Frame duration: preamble plus (headers + payload) at the data rate."""
        return self.preamble + (self.header_bytes + payload_bytes) * 8.0 / self.data_rate


@dataclass(frozen=True)
class Packet:
    packet_id: int
    src: int
    kind: str  # "cam" | "cpm"
    size_bytes: int
    created_at: float

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise InvalidConfig("size_bytes must be > 0")


@dataclass(frozen=True)
class ReceptionRecord:
    packet_id: int
    src: int
    rx: int
    t: float
    rssi_dbm: float
    sinr_db: float
    decoded: bool
    channel_model_tag: str  # "ray" | "stochastic"
    los_flag: int
    interferer_count: int
    kind: str = "cam"
    rat_id: str = ""
    reason: str = ""  # "half_duplex" when dropped without evaluation
    interferer_ids: tuple = ()  # considered interferers, from the SinrReport
    discarded_ids: tuple = ()  # interferers dropped by the gain floor


# ---------------------------------------------------------------------------
# CAM triggering (ETSI-style checks: 4 m / 4 deg / 0.5 m/s in [0.1 s, 1 s])
# ---------------------------------------------------------------------------

def cam_due(state, last_state, last_time: float | None, now: float) -> bool:
    """Single CAM check against the last transmitted state."""
    if last_time is None:
        return True
    dt = now - last_time
    if dt < CAM_MIN_INTERVAL - 1e-12:
        return False
    if dt >= CAM_MAX_INTERVAL - 1e-12:
        return True
    dpos = float(np.linalg.norm(np.asarray(state.position) - np.asarray(last_state.position)))
    dheading = abs(_wrap_angle(state.heading - last_state.heading))
    dspeed = abs(state.speed - last_state.speed)
    return dpos > CAM_POS_TRIGGER or dheading > CAM_HEADING_TRIGGER or dspeed > CAM_SPEED_TRIGGER


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


class CamScheduler:
    """Stateful wrapper: poll at tick granularity, remember the last CAM."""

    def __init__(self):
        self._last_state = None
        self._last_time = None

    def poll(self, state, now: float) -> bool:
        if cam_due(state, self._last_state, self._last_time, now):
            self._last_state = state
            self._last_time = now
            return True
        return False


# ---------------------------------------------------------------------------
# Channel access
# ---------------------------------------------------------------------------

def merge_intervals(intervals) -> list:
    """Disjoint, sorted union of (start, end) pairs."""
    spans = sorted((s, e) for s, e in intervals if e > s)
    merged = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return merged


def csma_transmit(request_time: float, duration: float, busy_intervals,
                  profile: RadioProfile, rng: np.random.Generator) -> tuple:
    """Schedule one broadcast frame; returns the (start, end) airtime.

    Waits AIFS after the channel goes idle, then counts down a uniform
    [0, CW] backoff, freezing while any sensed interval is busy.  Busy
    intervals are (start, end) pairs where sensed power exceeds the
    carrier-sense threshold; broadcast frames never retry.
    """
    intervals = merge_intervals(busy_intervals)
    backoff = int(rng.integers(0, profile.cw_min + 1)) * profile.slot_time

    def skip_busy(t):
        for s, e in intervals:
            if s <= t < e:
                return e
        return t

    def next_busy(t):
        for s, e in intervals:
            if s >= t:
                return s, e
        return None, None

    t = skip_busy(request_time)
    remaining = backoff
    while True:
        # AIFS must elapse uninterrupted before the countdown (re)starts.
        s, e = next_busy(t)
        if s is not None and s < t + profile.aifs:
            t = skip_busy(e)
            continue
        t += profile.aifs
        s, e = next_busy(t)
        if s is None or t + remaining <= s:
            t += remaining
            return (t, t + duration)
        # Freeze: count down to the busy edge, resume after it clears.
        remaining -= s - t
        t = skip_busy(e)


def sidelink_transmit(request_time: float, profile: RadioProfile,
                      rng: np.random.Generator) -> tuple:
    """Random-selection sidelink grant: one slot inside the next period."""
    n_slots = int(round(profile.reservation_period / profile.slot_duration))
    if n_slots < 1:
        raise InvalidConfig("reservation period shorter than one slot")
    first = math.floor(request_time / profile.slot_duration) + 1
    k = first + int(rng.integers(0, n_slots))
    start = k * profile.slot_duration
    return (start, start + profile.slot_duration)


# ---------------------------------------------------------------------------
# Reception
# ---------------------------------------------------------------------------

def rssi_dbm(tx_power_dbm: float, total_gain: float) -> float:
    if total_gain <= 0.0:
        return -math.inf
    return tx_power_dbm + 10.0 * math.log10(total_gain)


def receive(packet: Packet, tracking_obj, rx_vehicle: int, t: float,
            summary, report, rx_profile: RadioProfile, tx_profile: RadioProfile,
            channel_tag: str, half_duplex: bool = False) -> ReceptionRecord:
    """Decode decision for one (packet, receiver) pair.

    ``summary`` is the desired-link ChannelSummary, ``report`` the
    SinrReport for this reception (may be None when half_duplex).
    """
    if half_duplex:
        return ReceptionRecord(packet.packet_id, packet.src, rx_vehicle, t,
                               rssi_dbm=-math.inf, sinr_db=-math.inf, decoded=False,
                               channel_model_tag=channel_tag, los_flag=0,
                               interferer_count=0, kind=packet.kind,
                               rat_id=tracking_obj.rat_id, reason="half_duplex")
    rssi = rssi_dbm(tx_profile.tx_power_dbm, summary.total_gain)
    sinr_db = report.aggregate_db
    decoded = (rssi >= rx_profile.sensitivity_dbm) and (sinr_db >= rx_profile.sinr_threshold_db)
    return ReceptionRecord(packet.packet_id, packet.src, rx_vehicle, t,
                           rssi_dbm=rssi, sinr_db=sinr_db, decoded=decoded,
                           channel_model_tag=channel_tag, los_flag=summary.los,
                           interferer_count=len(report.considered_interferers),
                           kind=packet.kind, rat_id=tracking_obj.rat_id,
                           interferer_ids=tuple(v for v, _ in report.considered_interferers),
                           discarded_ids=tuple(v for v, _ in report.discarded_interferers))
