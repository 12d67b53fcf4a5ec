"""Cross-technology interference over a unified time-frequency grid.

Every radio technology sharing the band contributes its subcarrier
boundaries and slot boundaries to one overall resource grid.  In-flight
transmissions are tracked as spectral footprints (flat PSD over the
occupied band) and fold into per-block SINR; interferers whose total path
gain falls below a floor are discarded.  The per-packet figure is the
bandwidth-weighted average of the per-block SINRs over the blocks the
desired transmission occupies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HalfDuplexError, InactiveVehicle, InvalidSpec, NoDesiredOverlap

G_THR_DEFAULT_DB = -140.0  # keeps a -110 dBm interferer at 30 dBm tx power
NOISE_DENSITY_DEFAULT_DBM_HZ = -174.0 + 9.0  # thermal + 9 dB noise figure
MAX_PROP_DELAY = 1e-5  # s, generous bound for tracking-object expiry

RAT_IDS = ("dsrc", "nr_v2x", "lte_v2x")


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


@dataclass(frozen=True)
class RatSpec:
    rat_id: str
    fc: float  # Hz
    bandwidth: float  # Hz
    subcarrier_spacing: float  # Hz
    slot_duration: float  # s

    def __post_init__(self):
        if self.rat_id not in RAT_IDS:
            raise InvalidSpec(f"unknown rat_id {self.rat_id!r}")
        if self.bandwidth <= 0 or self.subcarrier_spacing <= 0:
            raise InvalidSpec("bandwidth and subcarrier spacing must be > 0")
        if int(self.bandwidth // self.subcarrier_spacing) < 1:
            raise InvalidSpec("band must hold at least one subcarrier")
        if self.slot_duration <= 0:
            raise InvalidSpec("slot duration must be > 0")

    @property
    def band(self) -> tuple:
        return (self.fc - self.bandwidth / 2.0, self.fc + self.bandwidth / 2.0)


class ResourceGrid:
    """Union grid over all RATs: frequency blocks x time slots."""

    def __init__(self, rats, horizon: float = 1.0):
        if not rats:
            raise InvalidSpec("need at least one RatSpec")
        ids = [r.rat_id for r in rats]
        if len(set(ids)) != len(ids):
            raise InvalidSpec("duplicate rat_id")
        self.rats = {r.rat_id: r for r in rats}
        self.horizon = float(horizon)

        edges = set()
        for r in rats:
            lo, hi = r.band
            k = 0
            while True:
                e = lo + k * r.subcarrier_spacing
                if e >= hi - 1e-6:
                    break
                edges.add(round(e, 6))
                k += 1
            edges.add(round(hi, 6))
        self.freq_edges = np.array(sorted(edges))
        self.block_widths = np.diff(self.freq_edges)
        self.coverage = {}
        mids = 0.5 * (self.freq_edges[:-1] + self.freq_edges[1:])
        for r in rats:
            lo, hi = r.band
            self.coverage[r.rat_id] = (mids > lo - 1e-6) & (mids < hi + 1e-6)
            covered = self.block_widths[self.coverage[r.rat_id]].sum()
            if abs(covered - r.bandwidth) > 1.0:
                raise InvalidSpec(
                    f"grid does not tile the {r.rat_id} band: {covered} vs {r.bandwidth} Hz")

    @property
    def slot_edges(self) -> np.ndarray:
        """Union of every RAT's slot boundaries over the horizon."""
        return self.slot_edges_in(0.0, self.horizon)

    def slot_edges_in(self, t0: float, t1: float) -> np.ndarray:
        """Union slot boundaries covering the window [t0, t1]."""
        edges = set()
        for r in self.rats.values():
            k0 = math.floor(t0 / r.slot_duration)
            k1 = math.ceil(t1 / r.slot_duration)
            for k in range(k0, k1 + 1):
                edges.add(round(k * r.slot_duration, 12))
        return np.array(sorted(edges))

    def rats_of_block(self, f_idx: int) -> set:
        return {rid for rid, cov in self.coverage.items() if cov[f_idx]}

    def blocks_in_band(self, lo: float, hi: float) -> np.ndarray:
        mids = 0.5 * (self.freq_edges[:-1] + self.freq_edges[1:])
        return np.nonzero((mids > lo - 1e-6) & (mids < hi + 1e-6))[0]


def build_grid(rats, horizon: float = 1.0) -> ResourceGrid:
    """Sorted union of subcarrier/band edges and slot boundaries."""
    return ResourceGrid(list(rats), horizon)


@dataclass(frozen=True)
class TrackingObject:
    """Spectral/temporal footprint of one in-flight transmission."""

    vehicle_id: int
    rat_id: str
    fc: float
    bandwidth: float
    start: float
    duration: float  # s
    psd: float  # W/Hz, flat over the occupied band
    tx_power: float  # W

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def expiry(self) -> float:
        return self.end + MAX_PROP_DELAY

    @property
    def band(self) -> tuple:
        return (self.fc - self.bandwidth / 2.0, self.fc + self.bandwidth / 2.0)

    def overlaps(self, t0: float, t1: float) -> bool:
        return self.start < t1 and self.end > t0


class TransmissionTracker:
    """Registry of in-flight transmissions, auto-pruned at expiry."""

    def __init__(self, is_active=None):
        self._objects: list[TrackingObject] = []
        self._is_active = is_active or (lambda vid, t: True)

    def register_tx(self, vehicle_id: int, rat: RatSpec, start: float, duration: float,
                    tx_power: float) -> TrackingObject:
        if duration <= 0:
            raise InvalidSpec("duration must be > 0")
        if not self._is_active(vehicle_id, start):
            raise InactiveVehicle(f"vehicle {vehicle_id} inactive at t={start}")
        self.prune(start)
        for obj in self._objects:
            if obj.vehicle_id == vehicle_id and obj.overlaps(start, start + duration):
                raise HalfDuplexError(
                    f"vehicle {vehicle_id} already transmitting at t={start}")
        obj = TrackingObject(vehicle_id, rat.rat_id, rat.fc, rat.bandwidth,
                             start, duration, tx_power / rat.bandwidth, tx_power)
        self._objects.append(obj)
        return obj

    def prune(self, now: float) -> None:
        self._objects = [o for o in self._objects if o.expiry > now]

    def concurrent(self, t0: float, t1: float, exclude=()):
        return [o for o in self._objects
                if o.vehicle_id not in exclude and o.overlaps(t0, t1)]

    def objects_at(self, t: float):
        return [o for o in self._objects if o.start <= t < o.expiry]

    def __len__(self):
        return len(self._objects)


class SinrReport:
    """Per-block SINRs plus their bandwidth-weighted aggregate.

    The block map is materialized lazily; the hot path only reads the
    aggregate and the interferer lists.
    """

    def __init__(self, f_idx, t_idx, sinr, omega, aggregate,
                 considered_interferers, discarded_interferers):
        self._f_idx = f_idx  # (F,) grid freq-block indexes
        self._t_idx = t_idx  # (T,) slot indexes within the evaluation window
        self._sinr = sinr  # (F, T) linear
        self._omega = omega  # (F,) bandwidth weights, mean 1
        self.aggregate = aggregate
        self.considered_interferers = considered_interferers
        self.discarded_interferers = discarded_interferers

    @property
    def per_block(self) -> dict:
        return {(int(f), int(t)): float(self._sinr[a, b])
                for a, f in enumerate(self._f_idx)
                for b, t in enumerate(self._t_idx)}

    @property
    def block_weights(self) -> dict:
        return {(int(f), int(t)): float(self._omega[a])
                for a, f in enumerate(self._f_idx)
                for b, t in enumerate(self._t_idx)}

    @property
    def aggregate_db(self) -> float:
        return 10.0 * math.log10(self.aggregate) if self.aggregate > 0 else -math.inf

    def recompute_aggregate(self) -> float:
        """Plain omega-weighted mean over per_block; must match .aggregate."""
        per_block = self.per_block
        if not per_block:
            return 0.0
        weights = self.block_weights
        return sum(weights[z] * s for z, s in per_block.items()) / len(per_block)


def evaluate_sinr(rx_vehicle: int, desired_tx: TrackingObject, grid: ResourceGrid,
                  tracker: TransmissionTracker, channel_fn,
                  g_thr: float = 10.0 ** (G_THR_DEFAULT_DB / 10.0),
                  noise_density: float = dbm_to_watt(NOISE_DENSITY_DEFAULT_DBM_HZ),
                  coexistence_enabled: bool = True,
                  eval_time: float | None = None) -> SinrReport:
    """Per-block and aggregate SINR for one desired transmission.

    channel_fn(tx_id, rx_id, t) must return an object with a .total_gain
    linear power ratio (either channel family satisfies this).  With
    coexistence disabled, other-RAT transmissions are invisible: they are
    neither summed nor reported.
    """
    t_eval = desired_tx.start if eval_time is None else eval_time
    f_idx = grid.blocks_in_band(*desired_tx.band)
    slot_edges = grid.slot_edges_in(desired_tx.start, desired_tx.end)
    widths = grid.block_widths[f_idx]
    if len(f_idx) == 0 or len(slot_edges) < 2:
        raise NoDesiredOverlap("desired transmission occupies no grid block")

    t0s, t1s = slot_edges[:-1], slot_edges[1:]
    slot_w = t1s - t0s

    def frac_overlap(start, end):
        ov = np.minimum(t1s, end) - np.maximum(t0s, start)
        return np.clip(ov, 0.0, None) / slot_w

    frac_des = frac_overlap(desired_tx.start, desired_tx.end)
    keep = frac_des > 1e-12
    if not keep.any():
        raise NoDesiredOverlap("desired transmission occupies no grid block")
    t_keep = np.nonzero(keep)[0]
    frac_des = frac_des[keep]
    mids = 0.5 * (grid.freq_edges[f_idx] + grid.freq_edges[f_idx + 1])

    g_des = channel_fn(desired_tx.vehicle_id, rx_vehicle, t_eval).total_gain
    # (F, T) power arrays over the occupied blocks.
    p_des = desired_tx.psd * g_des * np.outer(widths, frac_des)
    interference = noise_density * widths[:, None] * np.ones_like(frac_des)[None, :]

    considered, discarded = [], []
    for obj in tracker.concurrent(desired_tx.start, desired_tx.end,
                                  exclude=(desired_tx.vehicle_id, rx_vehicle)):
        if obj is desired_tx:
            continue
        cross = obj.rat_id != desired_tx.rat_id
        if cross and not coexistence_enabled:
            continue
        gain = channel_fn(obj.vehicle_id, rx_vehicle, t_eval).total_gain
        if gain < g_thr:
            discarded.append((obj.vehicle_id, gain))
            continue
        lo, hi = obj.band
        in_band = (mids > lo - 1e-6) & (mids < hi + 1e-6)
        frac_int = frac_overlap(obj.start, obj.end)[keep]
        p_obj = obj.psd * gain * np.outer(widths * in_band, frac_int)
        interference += p_obj
        considered.append((obj.vehicle_id, float(p_obj.sum())))

    sinr = p_des / interference
    w_total = widths.sum() * len(frac_des)
    n_blocks = len(widths) * len(frac_des)
    omega = widths * n_blocks / w_total  # bandwidth-proportional weight
    aggregate = float((sinr * widths[:, None]).sum() / w_total)
    return SinrReport(f_idx, t_keep, sinr, omega, aggregate, considered, discarded)


class SinrEvaluator:
    """evaluate_sinr bound to one grid/tracker plus the coexistence mode."""

    def __init__(self, grid: ResourceGrid, tracker: TransmissionTracker, channel_fn,
                 g_thr_db: float = G_THR_DEFAULT_DB,
                 noise_density_dbm_hz: float = NOISE_DENSITY_DEFAULT_DBM_HZ,
                 coexistence_enabled: bool = True):
        self.grid = grid
        self.tracker = tracker
        self.channel_fn = channel_fn
        self.g_thr = 10.0 ** (g_thr_db / 10.0)
        self.noise_density = dbm_to_watt(noise_density_dbm_hz)
        self.coexistence_enabled = coexistence_enabled

    def coexistence_toggle(self, enabled: bool) -> str:
        self.coexistence_enabled = bool(enabled)
        return "cross-rat" if self.coexistence_enabled else "intra-rat-only"

    def evaluate(self, rx_vehicle: int, desired_tx: TrackingObject,
                 eval_time: float | None = None) -> SinrReport:
        return evaluate_sinr(rx_vehicle, desired_tx, self.grid, self.tracker,
                             self.channel_fn, self.g_thr, self.noise_density,
                             self.coexistence_enabled, eval_time)
