"""Vectorized 3D primitives used by the deterministic channel engine.

Everything operates on plain numpy arrays so that per-pair path tracing
reduces to a handful of array operations instead of Python loops over
surfaces.  Polygons are stored padded to a common vertex count (unused
slots repeat the last vertex, which makes the padded edges degenerate and
inert in every test below).
"""

from __future__ import annotations

import numpy as np

# Relative segment-parameter margin: hits closer than this to either
# endpoint are ignored, so a chain segment ending exactly on its mirror
# surface does not count as self-obstruction.
SEG_EPS = 1e-7
PLANE_TOL = 1e-9


def rot_z(heading: float) -> np.ndarray:
    """3x3 rotation about +z by ``heading`` radians (CCW from +x)."""
    c, s = np.cos(heading), np.sin(heading)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


class PolygonSoup:
    """Padded array bundle for a set of planar convex polygons.

    Attributes
    ----------
    verts : (S, V, 3) vertex positions, padded by repeating the last vertex
    normals : (S, 3) unit normals
    d : (S,) plane offsets, ``n . x = d``
    blocking : (S,) bool, whether the surface obstructs rays
    reflect_amp : (S,) linear amplitude factor applied per specular bounce
    """

    def __init__(self, polygons, normals, blocking, reflect_amp):
        count = len(polygons)
        vmax = max((len(p) for p in polygons), default=3)
        self.verts = np.zeros((count, vmax, 3))
        self.nverts = np.zeros(count, dtype=int)
        for i, poly in enumerate(polygons):
            p = np.asarray(poly, dtype=float)
            self.verts[i, : len(p)] = p
            self.verts[i, len(p):] = p[-1]
            self.nverts[i] = len(p)
        self.normals = np.asarray(normals, dtype=float).reshape(count, 3)
        self.d = np.einsum("ij,ij->i", self.normals, self.verts[:, 0]) if count else np.zeros(0)
        self.blocking = np.asarray(blocking, dtype=bool).reshape(count)
        self.reflect_amp = np.asarray(reflect_amp, dtype=float).reshape(count)
        # Edge vectors including the closing edge back to vertex 0.
        nxt = np.roll(self.verts, -1, axis=1)
        self.edges = nxt - self.verts

    def __len__(self):
        return self.verts.shape[0]

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Point-in-polygon for one query point per polygon.

        ``points`` has shape (S, 3); the point is tested against the
        in-plane convex hull of its own polygon (coplanarity is assumed).
        """
        if len(self) == 0:
            return np.zeros(0, dtype=bool)
        rel = points[:, None, :] - self.verts  # (S, V, 3)
        cross = _cross3(self.edges, rel)
        side = np.einsum("svk,sk->sv", cross, self.normals)
        return np.all(side >= -tol, axis=1)


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting cross product without np.cross's moveaxis overhead."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def segments_hit_polygons(p0: np.ndarray, p1: np.ndarray, soup: PolygonSoup,
                          tol: float = 1e-9) -> np.ndarray:
    """Open-segment vs polygon intersection matrix.

    Parameters are (K, 3) segment endpoints.  Returns a (K, S) boolean
    matrix; endpoints (within SEG_EPS of either end) never count as hits.
    """
    p0 = np.atleast_2d(p0)
    p1 = np.atleast_2d(p1)
    k = p0.shape[0]
    s = len(soup)
    if s == 0 or k == 0:
        return np.zeros((k, s), dtype=bool)
    direc = p1 - p0  # (K, 3)
    denom = direc @ soup.normals.T  # (K, S)
    num = soup.d[None, :] - p0 @ soup.normals.T
    safe = np.where(np.abs(denom) > tol, denom, 1.0)
    t = np.where(np.abs(denom) > tol, num / safe, -1.0)
    valid = (t > SEG_EPS) & (t < 1.0 - SEG_EPS)
    if not valid.any():
        return valid
    x = p0[:, None, :] + t[..., None] * direc[:, None, :]  # (K, S, 3)
    rel = x[:, :, None, :] - soup.verts[None, :, :, :]  # (K, S, V, 3)
    cross = _cross3(soup.edges[None], rel)
    side = np.einsum("ksvj,sj->ksv", cross, soup.normals)
    inside = np.all(side >= -1e-9, axis=2)
    return valid & inside


def segments_hit_boxes(p0: np.ndarray, p1: np.ndarray, centers: np.ndarray,
                       headings: np.ndarray, half_extents: np.ndarray) -> np.ndarray:
    """Open-segment vs oriented-box intersection matrix, (K, B) boolean.

    Boxes are axis-aligned in their body frame; the world->body transform
    is a translation plus a z-rotation by -heading (slab method).
    """
    p0 = np.atleast_2d(p0)
    p1 = np.atleast_2d(p1)
    k = p0.shape[0]
    b = centers.shape[0]
    if b == 0 or k == 0:
        return np.zeros((k, b), dtype=bool)
    c, s = np.cos(headings), np.sin(headings)  # (B,)
    rel0 = p0[:, None, :] - centers[None, :, :]  # (K, B, 3)
    rel1 = p1[:, None, :] - centers[None, :, :]
    q0 = np.empty_like(rel0)
    q1 = np.empty_like(rel1)
    q0[..., 0] = c * rel0[..., 0] + s * rel0[..., 1]
    q0[..., 1] = -s * rel0[..., 0] + c * rel0[..., 1]
    q0[..., 2] = rel0[..., 2]
    q1[..., 0] = c * rel1[..., 0] + s * rel1[..., 1]
    q1[..., 1] = -s * rel1[..., 0] + c * rel1[..., 1]
    q1[..., 2] = rel1[..., 2]
    d = q1 - q0
    # Nudge zero components so the IEEE inf slab arithmetic stays NaN-free.
    d = np.where(np.abs(d) < 1e-15, 1e-15, d)
    he = half_extents[None, :, :]  # (1, B, 3)
    ta = (-he - q0) / d
    tb = (he - q0) / d
    tmin = np.minimum(ta, tb).max(axis=2)  # (K, B)
    tmax = np.maximum(ta, tb).min(axis=2)
    lo = np.maximum(tmin, SEG_EPS)
    hi = np.minimum(tmax, 1.0 - SEG_EPS)
    return (tmax >= tmin) & (hi > lo)


def points_in_boxes(points: np.ndarray, centers: np.ndarray, headings: np.ndarray,
                    half_extents: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """(P, B) boolean: strict containment of points inside oriented boxes."""
    points = np.atleast_2d(points)
    p = points.shape[0]
    b = centers.shape[0]
    if b == 0 or p == 0:
        return np.zeros((p, b), dtype=bool)
    c, s = np.cos(headings), np.sin(headings)
    rel = points[:, None, :] - centers[None, :, :]
    q = np.empty_like(rel)
    q[..., 0] = c * rel[..., 0] + s * rel[..., 1]
    q[..., 1] = -s * rel[..., 0] + c * rel[..., 1]
    q[..., 2] = rel[..., 2]
    return np.all(np.abs(q) < half_extents[None, :, :] - tol, axis=2)


def mirror_points(points: np.ndarray, normal: np.ndarray, d: float) -> np.ndarray:
    """Reflect points across the plane ``normal . x = d``."""
    points = np.asarray(points, dtype=float)
    dist = points @ normal - d
    return points - 2.0 * np.multiply.outer(dist, normal)


def plane_crossing(p0: np.ndarray, p1: np.ndarray, normal: np.ndarray, d: float):
    """Intersection of segment p0->p1 with a plane.

    Returns (t, point) or (None, None) when the segment is parallel or the
    crossing lies outside the open interval (0, 1).
    """
    direc = p1 - p0
    denom = float(direc @ normal)
    if abs(denom) < PLANE_TOL:
        return None, None
    t = (d - float(p0 @ normal)) / denom
    if t <= SEG_EPS or t >= 1.0 - SEG_EPS:
        return None, None
    return t, p0 + t * direc


def point_in_convex_polygon(point: np.ndarray, verts: np.ndarray, normal: np.ndarray,
                            tol: float = 1e-9) -> bool:
    """Scalar convex point-in-polygon test (used by oracles and the tracer)."""
    nv = len(verts)
    for i in range(nv):
        edge = verts[(i + 1) % nv] - verts[i]
        if np.cross(edge, point - verts[i]) @ normal < -tol:
            return False
    return True


def polygon_area_normal(verts: np.ndarray) -> np.ndarray:
    """Area-weighted normal of a planar polygon (Newell's method)."""
    verts = np.asarray(verts, dtype=float)
    nxt = np.roll(verts, -1, axis=0)
    return 0.5 * np.cross(verts, nxt).sum(axis=0)
