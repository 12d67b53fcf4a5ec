"""Deterministic ray channel engine.

Computes admissible propagation paths between antenna pairs: the LoS ray
with blockage by buildings and vehicle boxes, specular reflections off
static surfaces found by the image method, and a single knife-edge
diffraction ray over the highest blocking edge when the LoS is cut.
Path sets reduce to (total gain, delay, LoS flag) summaries and feed a
tap-delay-line impulse response.  An all-pairs cache with conservative
whole-cache invalidation amortizes tracing across queries.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .constants import C_LIGHT
from .errors import DegenerateGeometry, InactiveVehicle, InvalidConfig
from .geometry import (PolygonSoup, plane_crossing, point_in_convex_polygon,
                       points_in_boxes, segments_hit_boxes, segments_hit_polygons)
from .mobility import GatingConfig, VehicleState, gate_update
from .scene import MeshRegistry, Scene, antenna_position


@dataclass(frozen=True)
class TracerConfig:
    fc: float = 5.89e9  # Hz
    max_interactions: int = 3
    enable_diffraction: bool = True
    gain_floor_db: float = 40.0  # drop paths this far below the strongest

    def __post_init__(self):
        if self.max_interactions < 0:
            raise InvalidConfig("max_interactions must be >= 0")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.fc


@dataclass(frozen=True)
class PropagationPath:
    gain: complex  # linear amplitude, phase from geometry
    delay: float  # s
    departure_dir: tuple  # unit vector along the first segment
    arrival_dir: tuple  # unit vector along the last segment
    doppler: float  # Hz
    kind: str  # "los" | "reflection" | "diffraction"
    order: int  # bounce count for reflections, else 0
    interaction_points: tuple = ()


@dataclass(frozen=True)
class PathSet:
    tx_id: int
    rx_id: int
    t: float
    paths: tuple


@dataclass(frozen=True)
class ChannelSummary:
    total_gain: float  # linear power ratio
    delay: float  # s, +inf when no path exists
    los: int  # 1 iff a LoS-kind path exists


@dataclass
class PathCache:
    entries: dict = field(default_factory=dict)  # (i, j) with i < j -> PathSet
    hits: int = 0
    misses: int = 0
    invalidations: int = 0


def invalidate_all(cache: PathCache) -> None:
    cache.entries.clear()
    cache.invalidations += 1


def summarize(path_set: PathSet) -> ChannelSummary:
    """Coherent-sum total gain, minimum delay, and the LoS flag."""
    if not path_set.paths:
        return ChannelSummary(0.0, math.inf, 0)
    total = sum(p.gain for p in path_set.paths)
    delay = min(p.delay for p in path_set.paths)
    los = int(any(p.kind == "los" for p in path_set.paths))
    return ChannelSummary(abs(total) ** 2, delay, los)


def cir(path_set: PathSet, t: float, sample_rate: float, n_taps: int) -> np.ndarray:
    """Band-limited tap-delay-line impulse response at observation time t.

    tap[m] = sum_k a_k exp(j 2 pi f_k t) sinc(fs (m/fs - (tau_k - tau_min)))
    with a unit-energy sinc pulse; single isotropic elements make the array
    responses scalar 1.
    """
    if sample_rate <= 0:
        raise InvalidConfig("sample_rate must be > 0")
    if n_taps < 1:
        raise InvalidConfig("n_taps must be >= 1")
    taps = np.zeros(n_taps, dtype=complex)
    if not path_set.paths:
        return taps
    delays = np.array([p.delay for p in path_set.paths])
    rel = delays - delays.min()
    spread = rel.max() * sample_rate
    if spread > n_taps - 1:
        raise InvalidConfig(
            f"n_taps={n_taps} cannot hold a delay spread of {spread:.1f} samples")
    gains = np.array([p.gain for p in path_set.paths])
    dopplers = np.array([p.doppler for p in path_set.paths])
    rotated = gains * np.exp(2j * np.pi * dopplers * t)
    m = np.arange(n_taps)
    # np.sinc is sin(pi x)/(pi x); rows are paths, columns taps.
    pulse = np.sinc(m[None, :] - (rel * sample_rate)[:, None])
    return rotated @ pulse


def knife_edge_loss_db(nu: float) -> float:
    """ITU single knife-edge loss J(nu) in dB (0 below the -0.78 knee)."""
    if nu <= -0.78:
        return 0.0
    return 6.9 + 20.0 * math.log10(math.sqrt((nu - 0.1) ** 2 + 1.0) + nu - 0.1)


@dataclass(frozen=True)
class Antenna:
    position: tuple
    velocity: tuple = (0.0, 0.0, 0.0)


def _doppler(fc, v_tx, v_rx, dep, arr):
    return fc / C_LIGHT * (float(np.dot(v_tx, dep)) + float(np.dot(v_rx, -arr)))


def _free_space_amp(wavelength: float, length: float) -> float:
    return wavelength / (4.0 * math.pi * length)


class _BoxSet:
    """Blocking vehicle boxes, minus the pair's own meshes."""

    def __init__(self, registry: MeshRegistry | None, exclude_ids=()):
        if registry is None:
            self.centers = np.zeros((0, 3))
            self.headings = np.zeros(0)
            self.half_extents = np.zeros((0, 3))
            self.ids = []
            return
        ids, centers, headings, he = registry.box_arrays()
        keep = [k for k, i in enumerate(ids) if i not in exclude_ids]
        self.ids = [ids[k] for k in keep]
        self.centers = centers[keep]
        self.headings = headings[keep]
        self.half_extents = he[keep]

    def __len__(self):
        return len(self.ids)

    def blocked(self, p0, p1) -> np.ndarray:
        """(K,) bool: each segment intersects at least one box."""
        if len(self.ids) == 0:
            k = np.atleast_2d(p0).shape[0]
            return np.zeros(k, dtype=bool)
        return segments_hit_boxes(np.atleast_2d(p0), np.atleast_2d(p1),
                                  self.centers, self.headings, self.half_extents).any(axis=1)


def _segments_obstructed(p0s, p1s, soup: PolygonSoup, boxes: _BoxSet) -> np.ndarray:
    """(K,) bool: any blocking surface or box cuts each segment."""
    p0s = np.atleast_2d(p0s)
    p1s = np.atleast_2d(p1s)
    hits = segments_hit_polygons(p0s, p1s, soup)
    blocked = (hits & soup.blocking[None, :]).any(axis=1) if len(soup) else \
        np.zeros(p0s.shape[0], dtype=bool)
    return blocked | boxes.blocked(p0s, p1s)


def _reflection_paths(tx, rx, soup, boxes, cfg):
    """Image-method specular paths up to cfg.max_interactions bounces."""
    paths = []
    s = len(soup)
    if s == 0 or cfg.max_interactions < 1:
        return paths
    lam = cfg.wavelength

    # First order, vectorized across all surfaces.
    dist = rx.position @ soup.normals.T - soup.d  # (S,)
    images = rx.position[None, :] - 2.0 * dist[:, None] * soup.normals  # (S, 3)
    direc = images - tx.position[None, :]
    denom = np.einsum("sj,sj->s", direc, soup.normals)
    num = soup.d - tx.position @ soup.normals.T
    safe = np.where(np.abs(denom) > 1e-12, denom, 1.0)
    t = np.where(np.abs(denom) > 1e-12, num / safe, -1.0)
    candidate = (t > 1e-9) & (t < 1.0 - 1e-9)
    pts = tx.position[None, :] + t[:, None] * direc
    candidate &= soup.contains(pts)
    idxs = np.nonzero(candidate)[0]
    if len(idxs):
        seg0 = np.repeat(tx.position[None, :], len(idxs), axis=0)
        seg1 = pts[idxs]
        obstructed = _segments_obstructed(np.vstack([seg0, seg1]),
                                          np.vstack([seg1, np.repeat(rx.position[None, :], len(idxs), axis=0)]),
                                          soup, boxes)
        obstructed = obstructed[: len(idxs)] | obstructed[len(idxs):]
        for k, i in enumerate(idxs):
            if obstructed[k]:
                continue
            length = float(np.linalg.norm(images[i] - tx.position))
            amp = _free_space_amp(lam, length) * soup.reflect_amp[i]
            dep = (pts[i] - tx.position) / np.linalg.norm(pts[i] - tx.position)
            arr = (rx.position - pts[i]) / np.linalg.norm(rx.position - pts[i])
            paths.append(PropagationPath(
                gain=amp * np.exp(-2j * np.pi * length / lam),
                delay=length / C_LIGHT,
                departure_dir=tuple(dep), arrival_dir=tuple(arr),
                doppler=_doppler(cfg.fc, tx.velocity, rx.velocity, dep, arr),
                kind="reflection", order=1,
                interaction_points=(tuple(pts[i]),)))

    # Higher orders, sequence enumeration with backtraced hit points.
    for order in range(2, cfg.max_interactions + 1):
        for seq in _sequences(s, order):
            path = _chain_path(tx, rx, seq, soup, boxes, cfg)
            if path is not None:
                paths.append(path)
    return paths


def _sequences(n_surfaces, order):
    """Ordered surface-index sequences without immediate repeats."""
    seq = [0] * order

    def rec(depth):
        for i in range(n_surfaces):
            if depth > 0 and seq[depth - 1] == i:
                continue
            seq[depth] = i
            if depth == order - 1:
                yield tuple(seq)
            else:
                yield from rec(depth + 1)

    yield from rec(0)


def _chain_path(tx, rx, seq, soup, boxes, cfg):
    """Validate one ordered reflection sequence; None when inadmissible."""
    images = [np.asarray(tx.position, dtype=float)]
    for i in seq:
        n, d = soup.normals[i], soup.d[i]
        prev = images[-1]
        images.append(prev - 2.0 * (prev @ n - d) * n)
    # Backtrace from rx through the mirror chain.
    points = []
    cur = np.asarray(rx.position, dtype=float)
    for k in range(len(seq) - 1, -1, -1):
        i = seq[k]
        t, pt = plane_crossing(cur, images[k + 1], soup.normals[i], soup.d[i])
        if t is None:
            return None
        if not point_in_convex_polygon(pt, soup.verts[i][: soup.nverts[i]], soup.normals[i]):
            return None
        points.append(pt)
        cur = pt
    points.reverse()
    chain = [np.asarray(tx.position, dtype=float)] + points + [np.asarray(rx.position, dtype=float)]
    p0s = np.array(chain[:-1])
    p1s = np.array(chain[1:])
    if _segments_obstructed(p0s, p1s, soup, boxes).any():
        return None
    length = float(np.linalg.norm(np.asarray(rx.position) - images[-1]))
    lam = cfg.wavelength
    amp = _free_space_amp(lam, length) * float(np.prod(soup.reflect_amp[list(seq)]))
    dep = (chain[1] - chain[0]) / np.linalg.norm(chain[1] - chain[0])
    arr = (chain[-1] - chain[-2]) / np.linalg.norm(chain[-1] - chain[-2])
    return PropagationPath(
        gain=amp * np.exp(-2j * np.pi * length / lam),
        delay=length / C_LIGHT,
        departure_dir=tuple(dep), arrival_dir=tuple(arr),
        doppler=_doppler(cfg.fc, tx.velocity, rx.velocity, dep, arr),
        kind="reflection", order=len(seq),
        interaction_points=tuple(tuple(p) for p in points))


def _diffraction_path(tx, rx, soup, boxes, cfg):
    """Single knife-edge ray over the highest blocking edge, or None."""
    p0 = np.asarray(tx.position, dtype=float)
    p1 = np.asarray(rx.position, dtype=float)
    direc = p1 - p0
    total = float(np.linalg.norm(direc))
    best = None  # (clearance h, t along segment, apex point)

    if len(soup):
        hits = segments_hit_polygons(p0[None, :], p1[None, :], soup)[0] & soup.blocking
        for i in np.nonzero(hits)[0]:
            n, d = soup.normals[i], soup.d[i]
            t, pt = plane_crossing(p0, p1, n, d)
            if t is None:
                continue
            z_top = float(soup.verts[i][:, 2].max())
            h = z_top - pt[2]
            apex = np.array([pt[0], pt[1], z_top])
            if h > 0 and (best is None or h > best[0]):
                best = (h, t, apex)

    if len(boxes):
        seg_hits = segments_hit_boxes(p0[None, :], p1[None, :], boxes.centers,
                                      boxes.headings, boxes.half_extents)[0]
        for b in np.nonzero(seg_hits)[0]:
            t_mid = _box_crossing_mid(p0, p1, boxes, b)
            if t_mid is None:
                continue
            pt = p0 + t_mid * direc
            z_top = float(boxes.centers[b][2] + boxes.half_extents[b][2])
            h = z_top - pt[2]
            apex = np.array([pt[0], pt[1], z_top])
            if h > 0 and (best is None or h > best[0]):
                best = (h, t_mid, apex)

    if best is None:
        return None
    h, t_apex, apex = best
    d1 = max(t_apex * total, 1e-6)
    d2 = max((1.0 - t_apex) * total, 1e-6)
    lam = cfg.wavelength
    nu = h * math.sqrt(2.0 * (d1 + d2) / (lam * d1 * d2))
    loss_db = knife_edge_loss_db(nu)
    length = float(np.linalg.norm(apex - p0) + np.linalg.norm(p1 - apex))
    amp = _free_space_amp(lam, length) * 10.0 ** (-loss_db / 20.0)
    dep = (apex - p0) / np.linalg.norm(apex - p0)
    arr = (p1 - apex) / np.linalg.norm(p1 - apex)
    return PropagationPath(
        gain=amp * np.exp(-2j * np.pi * length / lam),
        delay=length / C_LIGHT,
        departure_dir=tuple(dep), arrival_dir=tuple(arr),
        doppler=_doppler(cfg.fc, tx.velocity, rx.velocity, dep, arr),
        kind="diffraction", order=0,
        interaction_points=(tuple(apex),))


def _box_crossing_mid(p0, p1, boxes, b):
    """Mid segment-parameter of the crossing through box b (scalar slab)."""
    c = boxes.centers[b]
    cos_h, sin_h = math.cos(boxes.headings[b]), math.sin(boxes.headings[b])
    he = boxes.half_extents[b]

    def to_body(p):
        r = p - c
        return np.array([cos_h * r[0] + sin_h * r[1],
                         -sin_h * r[0] + cos_h * r[1], r[2]])

    q0, q1 = to_body(p0), to_body(p1)
    d = q1 - q0
    d = np.where(np.abs(d) < 1e-15, 1e-15, d)
    ta = (-he - q0) / d
    tb = (he - q0) / d
    tmin = float(np.minimum(ta, tb).max())
    tmax = float(np.maximum(ta, tb).min())
    if tmax < tmin:
        return None
    return 0.5 * (max(tmin, 0.0) + min(tmax, 1.0))


def trace_paths(scene: Scene, registry: MeshRegistry | None, tx: Antenna, rx: Antenna,
                cfg: TracerConfig, tx_id: int = -1, rx_id: int = -2,
                t: float = 0.0) -> PathSet:
    """Admissible propagation paths between two antennas.

    Vehicle boxes act as blockers for every path kind but never as
    reflectors; reflections come from static surfaces only.  Raises
    DegenerateGeometry when an antenna sits inside a mesh, outside the
    scene bounds, or the endpoints coincide.
    """
    txp = np.asarray(tx.position, dtype=float)
    rxp = np.asarray(rx.position, dtype=float)
    if np.allclose(txp, rxp):
        raise DegenerateGeometry("tx and rx antenna positions coincide")
    for label, p in (("tx", txp), ("rx", rxp)):
        if not scene.contains_point(p):
            raise DegenerateGeometry(f"{label} antenna outside scene bounds")
        if scene.point_in_building(p):
            raise DegenerateGeometry(f"{label} antenna inside a building")
    boxes = _BoxSet(registry, exclude_ids={tx_id, rx_id})
    soup = scene.surface_soup()
    if len(boxes):
        inside = points_in_boxes(np.vstack([txp, rxp]), boxes.centers,
                                 boxes.headings, boxes.half_extents)
        if inside.any():
            which = "tx" if inside[0].any() else "rx"
            raise DegenerateGeometry(f"{which} antenna inside a vehicle mesh")

    txv = np.asarray(tx.velocity, dtype=float)
    rxv = np.asarray(rx.velocity, dtype=float)
    lam = cfg.wavelength

    paths = []
    los_blocked = bool(_segments_obstructed(txp[None, :], rxp[None, :], soup, boxes)[0])
    if not los_blocked:
        length = float(np.linalg.norm(rxp - txp))
        dirv = (rxp - txp) / length
        amp = _free_space_amp(lam, length)
        paths.append(PropagationPath(
            gain=amp * np.exp(-2j * np.pi * length / lam),
            delay=length / C_LIGHT,
            departure_dir=tuple(dirv), arrival_dir=tuple(dirv),
            doppler=_doppler(cfg.fc, txv, rxv, dirv, dirv),
            kind="los", order=0))

    tx_np = _NpAntenna(txp, txv)
    rx_np = _NpAntenna(rxp, rxv)
    paths.extend(_reflection_paths(tx_np, rx_np, soup, boxes, cfg))

    if los_blocked and cfg.enable_diffraction:
        dpath = _diffraction_path(tx_np, rx_np, soup, boxes, cfg)
        if dpath is not None:
            paths.append(dpath)

    if paths:
        amax = max(abs(p.gain) for p in paths)
        floor = amax * 10.0 ** (-cfg.gain_floor_db / 20.0)
        paths = [p for p in paths if abs(p.gain) >= floor]
        paths.sort(key=lambda p: (p.delay, p.kind, p.order))
    return PathSet(tx_id, rx_id, t, tuple(paths))


class _NpAntenna:
    __slots__ = ("position", "velocity")

    def __init__(self, position, velocity):
        self.position = np.asarray(position, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)


class ChannelEngine:
    """Posed meshes + tracer + all-pairs cache behind one query interface.

    Location updates pass through the mobility gate; any applied update
    that changes a mesh conservatively wipes the whole cache.  On a miss
    the engine traces every active unordered pair in one grouped snapshot
    and stores all of them.
    """

    def __init__(self, scene: Scene, registry: MeshRegistry,
                 tracer_cfg: TracerConfig | None = None,
                 gating_cfg: GatingConfig | None = None,
                 cache_enabled: bool = True):
        self.scene = scene
        self.registry = registry
        self.cfg = tracer_cfg or TracerConfig()
        self.gating = gating_cfg or GatingConfig(fc=(tracer_cfg or TracerConfig()).fc)
        self.cache = PathCache()
        self.cache_enabled = cache_enabled
        self.query_log = []  # ("hit" | "miss", wall seconds)
        self._last_synced = {}
        self._states = {}
        self._summaries = {}  # derived view of cache.entries, wiped with it

    # -- mobility-facing side ------------------------------------------------

    def register_vehicle(self, vehicle_id: int, template) -> None:
        self.registry.register(vehicle_id, template)

    def location_update(self, state: VehicleState) -> bool:
        """Gated mesh update; returns True when the update was applied."""
        vid = state.vehicle_id
        if not gate_update(self._last_synced.get(vid), state, self.gating):
            return False
        _, changed = self.registry.pose_mesh(vid, state)
        self._last_synced[vid] = np.asarray(state.position, dtype=float)
        self._states[vid] = state
        if changed:
            invalidate_all(self.cache)
            self._summaries.clear()
        return True

    def remove_vehicle(self, vehicle_id: int) -> None:
        if self.registry.remove(vehicle_id):
            self._last_synced.pop(vehicle_id, None)
            self._states.pop(vehicle_id, None)
            invalidate_all(self.cache)
            self._summaries.clear()

    def active_ids(self) -> list:
        return self.registry.posed_ids()

    def antenna_of(self, vehicle_id: int) -> Antenna:
        state = self._states[vehicle_id]
        template = self.registry.template_of(vehicle_id)
        return Antenna(tuple(antenna_position(state, template)), tuple(state.velocity))

    # -- query side ------------------------------------------------------------

    def _trace_pair(self, i: int, j: int, t: float) -> PathSet:
        return trace_paths(self.scene, self.registry, self.antenna_of(i),
                           self.antenna_of(j), self.cfg, tx_id=i, rx_id=j, t=t)

    def query_channel(self, pair, t: float):
        """ChannelSummary plus "hit"/"miss" flag for an unordered pair."""
        i, j = pair
        for v in (i, j):
            if v not in self.registry.placed:
                raise InactiveVehicle(f"vehicle {v} has no posed mesh at t={t}")
        if i == j:
            raise DegenerateGeometry("cannot query a vehicle against itself")
        key = (i, j) if i < j else (j, i)
        t0 = time.perf_counter()
        if self.cache_enabled and key in self.cache.entries:
            self.cache.hits += 1
            summary = self._summaries[key]
            flag = "hit"
        else:
            self.cache.misses += 1
            if self.cache_enabled:
                ids = self.active_ids()
                for a_idx in range(len(ids)):
                    for b_idx in range(a_idx + 1, len(ids)):
                        a, b = ids[a_idx], ids[b_idx]
                        ps = self._trace_pair(a, b, t)
                        self.cache.entries[(a, b)] = ps
                        self._summaries[(a, b)] = summarize(ps)
                summary = self._summaries[key]
            else:
                summary = summarize(self._trace_pair(*key, t))
            flag = "miss"
        self.query_log.append((flag, time.perf_counter() - t0))
        return summary, flag

    def path_set(self, pair, t: float) -> PathSet:
        """Uncached direct trace (full multipath, e.g. for cir())."""
        i, j = pair
        return self._trace_pair(i, j, t)
