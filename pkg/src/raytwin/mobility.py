"""Vehicle trace ingestion, the active set, and update gating.

Traces are CSV with header ``t,vehicle_id,x,y,z,vx,vy,vz,heading``.  The
velocity and heading columns may be omitted: velocity is then estimated
by forward difference and heading from the velocity azimuth.  Positions
between samples are linearly interpolated on query.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .constants import C_LIGHT, COHERENCE_COEFF
from .errors import InactiveVehicle, NonMonotonicTime, ParseError

MAX_SPEED = 100.0  # m/s sanity bound on trace velocities


@dataclass(frozen=True)
class VehicleState:
    vehicle_id: int
    t: float
    position: tuple  # (x, y, z) m
    velocity: tuple  # (vx, vy, vz) m/s
    heading: float  # rad CCW from +x

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))


@dataclass(frozen=True)
class GatingConfig:
    """Base distance threshold plus the carrier used for coherence time."""

    delta_d0: float = 1.0  # m
    fc: float = 5.89e9  # Hz

    def __post_init__(self):
        if self.delta_d0 < 0:
            raise ParseError("delta_d0 must be >= 0")
        if self.fc <= 0:
            raise ParseError("fc must be > 0")


def coherence_time(speed: float, fc: float) -> float:
    """Clarke's rule of thumb, 0.423 * (c / fc) / speed; +inf when stationary."""
    if fc <= 0:
        raise ValueError("fc must be > 0")
    if speed <= 0:
        return math.inf
    return COHERENCE_COEFF * (C_LIGHT / fc) / speed


def gate_update(last_synced_pos, state: VehicleState, cfg: GatingConfig) -> bool:
    """True iff the vehicle moved beyond max(delta_d0, speed * t_coh) since
    the last applied update; always true when no update was ever applied."""
    if last_synced_pos is None:
        return True
    speed = state.speed
    doppler_term = 0.0 if speed == 0 else speed * coherence_time(speed, cfg.fc)
    threshold = max(cfg.delta_d0, doppler_term)
    displacement = float(np.linalg.norm(np.asarray(state.position) - np.asarray(last_synced_pos)))
    return displacement > threshold


class TraceStore:
    """Immutable per-vehicle time series with linear interpolation."""

    def __init__(self, series: dict):
        # series: vehicle_id -> dict(t=(n,), pos=(n,3), vel=(n,3), heading=(n,))
        self._series = series

    @property
    def vehicle_ids(self) -> list:
        return sorted(self._series)

    def span(self, vehicle_id: int) -> tuple:
        s = self._series[vehicle_id]
        return float(s["t"][0]), float(s["t"][-1])

    def active(self, t: float) -> list:
        """Vehicles whose trace covers time t, sorted by id."""
        return [v for v in self.vehicle_ids
                if self._series[v]["t"][0] <= t <= self._series[v]["t"][-1]]

    def is_active(self, vehicle_id: int, t: float) -> bool:
        s = self._series.get(vehicle_id)
        return s is not None and s["t"][0] <= t <= s["t"][-1]

    def state_at(self, vehicle_id: int, t: float) -> VehicleState:
        s = self._series.get(vehicle_id)
        if s is None or not (s["t"][0] <= t <= s["t"][-1]):
            raise InactiveVehicle(f"vehicle {vehicle_id} is not active at t={t}")
        ts = s["t"]
        i = int(np.searchsorted(ts, t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 1)
        if i == len(ts) - 1 or ts[i] == t:
            pos = s["pos"][i]
            vel = s["vel"][i]
            heading = s["heading"][i]
        else:
            w = (t - ts[i]) / (ts[i + 1] - ts[i])
            pos = (1 - w) * s["pos"][i] + w * s["pos"][i + 1]
            vel = (1 - w) * s["vel"][i] + w * s["vel"][i + 1]
            heading = s["heading"][i]  # held over the segment
        return VehicleState(vehicle_id, float(t), tuple(pos), tuple(vel), float(heading))

    def sample_events(self):
        """All raw samples as (t, vehicle_id) in global time order."""
        events = [(float(t), v) for v, s in self._series.items() for t in s["t"]]
        events.sort()
        return events

    def horizon(self) -> tuple:
        t0 = min(s["t"][0] for s in self._series.values())
        t1 = max(s["t"][-1] for s in self._series.values())
        return float(t0), float(t1)


def _finalize_vehicle(vehicle_id, rows, have_vel, have_heading):
    t = np.array([r[0] for r in rows])
    pos = np.array([r[1] for r in rows])
    if have_vel:
        vel = np.array([r[2] for r in rows])
    else:
        vel = np.zeros_like(pos)
        if len(rows) > 1:
            dt = np.diff(t)
            if (dt <= 0).any():
                dt = np.where(dt <= 0, 1.0, dt)
            vel[:-1] = np.diff(pos, axis=0) / dt[:, None]
            vel[-1] = vel[-2]
    speeds = np.linalg.norm(vel, axis=1)
    if (speeds >= MAX_SPEED).any():
        bad = int(np.argmax(speeds >= MAX_SPEED))
        raise ParseError(f"vehicle {vehicle_id}: speed {speeds[bad]:.1f} m/s at row {bad} "
                         f"exceeds the {MAX_SPEED} m/s sanity bound")
    if have_heading:
        heading = np.array([r[3] for r in rows])
    else:
        heading = np.zeros(len(rows))
        prev = 0.0
        for i, v in enumerate(vel):
            if np.hypot(v[0], v[1]) > 1e-9:
                prev = math.atan2(v[1], v[0])
            heading[i] = prev
    return {"t": t, "pos": pos, "vel": vel, "heading": heading}


def ingest_trace(trace_file) -> TraceStore:
    """Parse a trace CSV into a TraceStore.

    Raises ParseError for malformed rows and NonMonotonicTime when a
    vehicle's timestamps decrease.
    """
    per_vehicle: dict[int, list] = {}
    try:
        fh = open(trace_file, newline="")
    except FileNotFoundError:
        raise ParseError(f"trace file not found: {trace_file}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{trace_file}: empty trace") from None
        cols = {name.strip(): i for i, name in enumerate(header)}
        for req in ("t", "vehicle_id", "x", "y", "z"):
            if req not in cols:
                raise ParseError(f"{trace_file}: missing column {req!r}")
        have_vel = all(c in cols for c in ("vx", "vy", "vz"))
        have_heading = "heading" in cols
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            try:
                t = float(row[cols["t"]])
                vid = int(row[cols["vehicle_id"]])
                pos = (float(row[cols["x"]]), float(row[cols["y"]]), float(row[cols["z"]]))
                vel = None
                if have_vel:
                    vel = (float(row[cols["vx"]]), float(row[cols["vy"]]), float(row[cols["vz"]]))
                heading = float(row[cols["heading"]]) if have_heading else None
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{trace_file}:{lineno}: {exc}") from None
            rows = per_vehicle.setdefault(vid, [])
            if rows and t < rows[-1][0]:
                raise NonMonotonicTime(
                    f"vehicle {vid}: t={t} at line {lineno} is before t={rows[-1][0]}")
            rows.append((t, pos, vel, heading))
    if not per_vehicle:
        raise ParseError(f"{trace_file}: no data rows")
    series = {vid: _finalize_vehicle(vid, rows, have_vel, have_heading)
              for vid, rows in per_vehicle.items()}
    return TraceStore(series)
