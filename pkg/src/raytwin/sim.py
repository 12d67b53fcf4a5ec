"""Discrete-event run loop binding mobility, channel, MAC, and coexistence.

One logical event loop owns all state; every stochastic draw is keyed by
(seed, domain, ids), so a run is reproducible and two runs differing only
in the channel family share the exact same packet population.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .coexistence import (TransmissionTracker, build_grid, dbm_to_watt,
                          evaluate_sinr)
from .errors import InactiveVehicle
from .linksim import (CamScheduler, Packet, ReceptionRecord, csma_transmit,
                      receive, sidelink_transmit)
from .mobility import TraceStore, ingest_trace
from .raychannel import ChannelEngine, ChannelSummary
from .scenario import ScenarioConfig, load_scenario
from .scene import MeshRegistry
from .stochastic3gpp import packet_stream, sample_channel
from .streams import DOM_MAC, DOM_SIDELINK, DOM_TRAFFIC, stream

_SENSE_RETENTION = 1.0  # s of committed airtimes kept for carrier sensing


class RayChannelService:
    """In-process deterministic channel behind the unified interface."""

    tag = "ray"

    def __init__(self, engine: ChannelEngine):
        self.engine = engine

    def location_update(self, state) -> None:
        self.engine.location_update(state)

    def summary(self, tx: int, rx: int, t: float, packet_index: int) -> ChannelSummary:
        return self.engine.query_channel((tx, rx), t)[0]

    @property
    def query_log(self):
        return self.engine.query_log

    def close(self) -> None:
        pass


class StochasticChannelService:
    """Per-packet stochastic draws; optionally with injected LoS flags."""

    tag = "stochastic"

    def __init__(self, trace: TraceStore, params, seed: int, los_engine=None):
        self.trace = trace
        self.params = params
        self.seed = seed
        self.los_engine = los_engine  # ChannelEngine supplying lambda when injected
        self.query_log = []

    def location_update(self, state) -> None:
        if self.los_engine is not None:
            self.los_engine.location_update(state)

    def summary(self, tx: int, rx: int, t: float, packet_index: int) -> ChannelSummary:
        a = self.trace.state_at(tx, t)
        b = self.trace.state_at(rx, t)
        d = float(np.linalg.norm(np.asarray(a.position) - np.asarray(b.position)))
        injected = None
        if self.los_engine is not None:
            injected = self.los_engine.query_channel((tx, rx), t)[0].los
        lo, hi = (tx, rx) if tx < rx else (rx, tx)
        rng = packet_stream(self.seed, lo, hi, packet_index)
        return sample_channel(d, self.params, rng, injected)

    def close(self) -> None:
        pass


@dataclass
class SimResult:
    channel_tag: str
    coexistence: bool
    seed: int
    records: list
    packets: list
    query_log: list = field(default_factory=list)
    cache_hits: int = 0
    cache_misses: int = 0
    cache_invalidations: int = 0

    @property
    def prr(self) -> float:
        return metrics.prr(self.records)

    def decode_set(self) -> metrics.DecisionSet:
        return metrics.DecisionSet.of(
            self.channel_tag,
            ((r.packet_id, r.rx) for r in self.records if r.decoded))

    def interferer_set(self) -> metrics.DecisionSet:
        return metrics.DecisionSet.of(
            self.channel_tag + "-interferers",
            ((r.packet_id, r.rx, i) for r in self.records for i in r.interferer_ids))

    def run_stats(self) -> metrics.RunStats:
        return metrics.run_stats(self.query_log)


def build_ray_engine(cfg: ScenarioConfig, cache_enabled: bool = True) -> ChannelEngine:
    registry = MeshRegistry(cfg.scene.vehicle_classes)
    engine = ChannelEngine(cfg.scene, registry, cfg.tracer, cfg.gating,
                           cache_enabled=cache_enabled)
    for vid in sorted(cfg.fleet):
        engine.register_vehicle(vid, cfg.fleet[vid].vehicle_class)
    return engine


def make_channel_service(cfg: ScenarioConfig, trace: TraceStore, seed: int,
                         channel: str, cache_enabled: bool = True):
    if channel == "ray":
        return RayChannelService(build_ray_engine(cfg, cache_enabled))
    if channel == "stochastic":
        los_engine = build_ray_engine(cfg, cache_enabled) if cfg.injected_los else None
        params = cfg.stochastic
        return StochasticChannelService(trace, params, seed, los_engine)
    raise ValueError(f"unknown channel model {channel!r}")


def run_simulation(scenario, trace, seed: int = 1, channel: str = "ray",
                   coexistence: bool = True, duration: float | None = None,
                   cache_enabled: bool = True, channel_service=None) -> SimResult:
    """Run one scenario end to end and return all reception records.

    ``scenario`` and ``trace`` may be paths or already-loaded objects;
    ``channel_service`` overrides the channel backend (e.g. a twinlink
    remote client) and must satisfy the service interface above.
    """
    cfg = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
    if not isinstance(trace, TraceStore):
        trace = ingest_trace(trace)
    service = channel_service or make_channel_service(cfg, trace, seed, channel, cache_enabled)

    fleet_ids = sorted(set(cfg.fleet) & set(trace.vehicle_ids))
    if not fleet_ids:
        raise InactiveVehicle("no fleet vehicle appears in the trace")
    used_rats = sorted({cfg.fleet[v].rat_id for v in fleet_ids})
    t_start, t_last = trace.horizon()
    t_end = min(t_last, t_start + duration) if duration is not None else t_last
    grid = build_grid([cfg.rats[r] for r in used_rats], horizon=max(t_end, 1e-3))
    tracker = TransmissionTracker(is_active=trace.is_active)
    g_thr = 10.0 ** (cfg.g_thr_db / 10.0)
    noise_density = dbm_to_watt(cfg.noise_density_dbm_hz)

    # Event kinds, tie-broken by (priority, insertion sequence):
    # 0 location update, 1 traffic tick, 2 reception evaluation.
    heap = []
    seq = 0

    def push(t, prio, item):
        nonlocal seq
        heapq.heappush(heap, (t, prio, seq, item))
        seq += 1

    for t, vid in trace.sample_events():
        if vid in cfg.fleet and t <= t_end:
            push(t, 0, ("loc", vid))

    cam_tick = cfg.traffic.cam_tick
    schedulers = {vid: CamScheduler() for vid in fleet_ids}
    pkt_seq = {vid: 0 for vid in fleet_ids}
    radio_free = {vid: -math.inf for vid in fleet_ids}
    commitments = []  # (packet, tracking object), retained for sensing
    tx_intervals = {vid: [] for vid in fleet_ids}  # per-vehicle airtimes
    records = []
    packets = []

    for vid in fleet_ids:
        v0, v1 = trace.span(vid)
        jitter = stream(seed, DOM_TRAFFIC, vid)
        push(v0 + float(jitter.random()) * cam_tick, 1, ("cam", vid))
        if cfg.traffic.enable_cpm and cfg.traffic.cpm_rate_hz > 0:
            period = 1.0 / cfg.traffic.cpm_rate_hz
            push(v0 + float(jitter.random()) * period, 1, ("cpm", vid))

    def sensed_busy(listener: int, t_req: float):
        """Committed airtimes whose received power clears carrier sense."""
        profile = cfg.radio_of(listener)
        busy = []
        for pkt, obj in commitments:
            if obj.end <= t_req or obj.vehicle_id == listener:
                continue
            s = service.summary(obj.vehicle_id, listener, t_req, pkt.packet_id)
            if s.total_gain <= 0:
                continue
            p_dbm = cfg.radio_of(obj.vehicle_id).tx_power_dbm + 10.0 * math.log10(s.total_gain)
            if p_dbm >= profile.cs_threshold_dbm:
                busy.append((obj.start, obj.end))
        return busy

    def schedule_tx(packet: Packet, t_now: float):
        vid = packet.src
        profile = cfg.radio_of(vid)
        rat = cfg.rat_of(vid)
        request = max(t_now, radio_free[vid])
        if profile.mac == "csma_ca":
            dur = profile.airtime(packet.size_bytes)
            rng = stream(seed, DOM_MAC, vid, packet.packet_id)
            airtime = csma_transmit(request, dur, sensed_busy(vid, request), profile, rng)
        else:
            rng = stream(seed, DOM_SIDELINK, vid, packet.packet_id)
            airtime = sidelink_transmit(request, profile, rng)
        start, end = airtime
        if end > t_end or not trace.is_active(vid, start) or not trace.is_active(vid, end):
            return
        obj = tracker.register_tx(vid, rat, start, end - start,
                                  dbm_to_watt(profile.tx_power_dbm))
        commitments.append((packet, obj))
        radio_free[vid] = end
        packets.append(packet)
        push(end, 2, ("rxeval", packet, obj))

    def next_packet(vid: int, kind: str, size: int, t_now: float) -> Packet:
        pkt_seq[vid] += 1
        return Packet(vid * 1_000_000 + pkt_seq[vid], vid, kind, size, t_now)

    def evaluate_receptions(packet: Packet, obj):
        if not (trace.is_active(packet.src, obj.start) and trace.is_active(packet.src, obj.end)):
            return
        receivers = [r for r in trace.active(obj.start)
                     if r != packet.src and r in cfg.fleet and trace.is_active(r, obj.end)]
        for rx in receivers:
            rx_txing = any(o.vehicle_id == rx and o.overlaps(obj.start, obj.end)
                           for _, o in commitments)
            if rx_txing:
                rec = receive(packet, obj, rx, obj.end, None, None,
                              cfg.radio_of(rx), cfg.radio_of(packet.src),
                              service.tag, half_duplex=True)
            else:
                def ch_fn(a, b, tt, _pkt=packet.packet_id):
                    return service.summary(a, b, tt, _pkt)

                summary = ch_fn(packet.src, rx, obj.start)
                report = evaluate_sinr(rx, obj, grid, tracker, ch_fn,
                                       g_thr=g_thr, noise_density=noise_density,
                                       coexistence_enabled=coexistence)
                rec = receive(packet, obj, rx, obj.end, summary, report,
                              cfg.radio_of(rx), cfg.radio_of(packet.src), service.tag)
            records.append(rec)

    while heap:
        t, prio, _, item = heapq.heappop(heap)
        if t > t_end + 1e-9:
            break
        kind = item[0]
        if kind == "loc":
            service.location_update(trace.state_at(item[1], t))
        elif kind == "cam":
            vid = item[1]
            if trace.is_active(vid, t):
                if schedulers[vid].poll(trace.state_at(vid, t), t):
                    schedule_tx(next_packet(vid, "cam", cfg.traffic.cam_bytes, t), t)
                nxt = t + cam_tick
                if nxt <= min(trace.span(vid)[1], t_end):
                    push(nxt, 1, ("cam", vid))
        elif kind == "cpm":
            vid = item[1]
            if trace.is_active(vid, t):
                schedule_tx(next_packet(vid, "cpm", cfg.traffic.cpm_bytes, t), t)
            nxt = t + 1.0 / cfg.traffic.cpm_rate_hz
            if nxt <= min(trace.span(vid)[1], t_end):
                push(nxt, 1, ("cpm", vid))
        elif kind == "rxeval":
            evaluate_receptions(item[1], item[2])
            # Drop commitments too old to matter for sensing or evaluation.
            commitments[:] = [(p, o) for p, o in commitments
                              if o.end > t - _SENSE_RETENTION]

    engine = getattr(service, "engine", None) or getattr(service, "los_engine", None)
    result = SimResult(channel_tag=service.tag, coexistence=coexistence, seed=seed,
                       records=records, packets=packets,
                       query_log=list(getattr(service, "query_log", [])))
    if engine is not None:
        result.cache_hits = engine.cache.hits
        result.cache_misses = engine.cache.misses
        result.cache_invalidations = engine.cache.invalidations
    return result
