"""Static digital-twin geometry and dynamic vehicle meshes.

The static world is a set of planar convex polygons (building walls and
roofs extruded from 2.5D footprints, plus an optional ground rectangle),
each tagged with a material that carries a scalar per-bounce reflection
loss and a blocking flag.  Vehicles are one oriented box per vehicle
class, anchored at the vehicle reference position: the body occupies
z in [anchor.z, anchor.z + 2*half_extents.z] so half_extents.z is half
the body height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ParseError, UnknownVehicle
from .geometry import PolygonSoup, polygon_area_normal, rot_z

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

COPLANAR_TOL = 1e-6

DEFAULT_MATERIALS = {
    "concrete": (6.0, True),
    "metal": (3.0, True),
    "wood": (9.0, True),
}


@dataclass(frozen=True)
class Material:
    name: str
    reflection_loss_db: float
    blocking: bool = True

    def __post_init__(self):
        if self.reflection_loss_db < 0:
            raise ParseError(f"material {self.name!r}: reflection loss must be >= 0")

    @property
    def reflect_amp(self) -> float:
        """Linear amplitude factor applied per specular bounce."""
        return 10.0 ** (-self.reflection_loss_db / 20.0)


@dataclass(frozen=True)
class Surface:
    """Planar convex polygon with >= 3 non-collinear vertices."""

    vertices: tuple  # tuple of (x, y, z) tuples, CCW about unit_normal
    unit_normal: tuple
    material: str

    @classmethod
    def from_polygon(cls, vertices, material: str, index: int | None = None) -> "Surface":
        tag = "" if index is None else f" (surface {index})"
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 3 or len(verts) < 3:
            raise GeometryError(f"polygon needs >= 3 3D vertices{tag}")
        area_n = polygon_area_normal(verts)
        area = np.linalg.norm(area_n)
        if area < 1e-12:
            raise GeometryError(f"degenerate polygon: zero area{tag}")
        normal = area_n / area
        d = float(normal @ verts[0])
        if np.max(np.abs(verts @ normal - d)) > COPLANAR_TOL:
            raise GeometryError(f"polygon vertices not coplanar within {COPLANAR_TOL}{tag}")
        # Winding CCW about the normal; convexity check rides along.
        nv = len(verts)
        for i in range(nv):
            edge = verts[(i + 1) % nv] - verts[i]
            nxt = verts[(i + 2) % nv] - verts[(i + 1) % nv]
            if np.cross(edge, nxt) @ normal < -1e-9:
                raise GeometryError(f"polygon is not convex{tag}")
        return cls(tuple(map(tuple, verts)), tuple(normal), material)

    @property
    def verts(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def normal(self) -> np.ndarray:
        return np.asarray(self.unit_normal, dtype=float)

    @property
    def plane_d(self) -> float:
        return float(self.normal @ self.verts[0])


@dataclass(frozen=True)
class MeshTemplate:
    """One box per vehicle class, plus the antenna mount displacement."""

    vehicle_class: str
    half_extents: tuple  # (hx, hy, hz) in meters, hz = half body height
    material: str
    antenna_displacement: tuple  # p_dis relative to the reference position

    def __post_init__(self):
        if any(h <= 0 for h in self.half_extents):
            raise ParseError(f"class {self.vehicle_class!r}: half extents must be > 0")
        if self.antenna_displacement[2] < 0:
            raise ParseError(f"class {self.vehicle_class!r}: antenna z displacement must be >= 0")


@dataclass(frozen=True)
class PlacedMesh:
    """A posed vehicle box; `center` is the vehicle reference position."""

    vehicle_id: int
    template: MeshTemplate
    center: tuple
    heading: float

    @property
    def box_center(self) -> np.ndarray:
        """World center of the occupied volume (body rests on its anchor)."""
        c = np.asarray(self.center, dtype=float).copy()
        c[2] += self.template.half_extents[2]
        return c

    def footprint_corners(self) -> np.ndarray:
        """The four ground-plan corners of the box, world frame."""
        hx, hy, _ = self.template.half_extents
        local = np.array([[hx, hy, 0], [-hx, hy, 0], [-hx, -hy, 0], [hx, -hy, 0]], dtype=float)
        world = local @ rot_z(self.heading).T
        return world + np.asarray(self.center, dtype=float)


@dataclass
class Building:
    """2.5D extrusion source data, kept for serialization round-trips."""

    footprint: list  # [(x, y), ...] CCW
    height: float
    material: str
    base_z: float = 0.0


@dataclass
class Scene:
    static_surfaces: list = field(default_factory=list)
    ground_plane: Surface | None = None
    bounds: tuple | None = None  # ((xmin, ymin, zmin), (xmax, ymax, zmax))
    material_table: dict = field(default_factory=dict)
    buildings: list = field(default_factory=list)
    vehicle_classes: dict = field(default_factory=dict)
    ground_z: float | None = None
    ground_extent: tuple | None = None

    def __post_init__(self):
        if not self.material_table:
            self.material_table = {
                name: Material(name, loss, blocking)
                for name, (loss, blocking) in DEFAULT_MATERIALS.items()
            }
        if self.bounds is None:
            self.bounds = self._computed_bounds()
        self._soup = None

    def _computed_bounds(self):
        surfaces = list(self.static_surfaces)
        if self.ground_plane is not None:
            surfaces.append(self.ground_plane)
        if not surfaces:
            inf = math.inf
            return ((-inf, -inf, -inf), (inf, inf, inf))
        verts = np.vstack([s.verts for s in surfaces])
        margin = 500.0
        return (tuple(verts.min(axis=0) - margin), tuple(verts.max(axis=0) + margin))

    def all_surfaces(self) -> list:
        out = list(self.static_surfaces)
        if self.ground_plane is not None:
            out.append(self.ground_plane)
        return out

    def validate(self) -> None:
        lo, hi = np.asarray(self.bounds[0]), np.asarray(self.bounds[1])
        for i, s in enumerate(self.all_surfaces()):
            if s.material not in self.material_table:
                raise GeometryError(f"surface {i} references unknown material {s.material!r}")
            if abs(np.linalg.norm(s.normal) - 1.0) > 1e-9:
                raise GeometryError(f"surface {i} normal is not unit length")
            v = s.verts
            if (v < lo - 1e-6).any() or (v > hi + 1e-6).any():
                raise GeometryError(f"surface {i} has vertices outside scene bounds")

    def contains_point(self, p) -> bool:
        lo, hi = self.bounds
        return all(lo[i] <= p[i] <= hi[i] for i in range(3))

    def surface_soup(self) -> PolygonSoup:
        """Cached padded-array view of all static surfaces (ground last)."""
        if self._soup is None:
            surfaces = self.all_surfaces()
            mats = [self.material_table[s.material] for s in surfaces]
            self._soup = PolygonSoup(
                [s.verts for s in surfaces],
                [s.normal for s in surfaces],
                [m.blocking for m in mats],
                [m.reflect_amp for m in mats],
            )
        return self._soup

    def point_in_building(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        for b in self.buildings:
            if not (b.base_z < p[2] < b.base_z + b.height):
                continue
            poly = np.asarray(b.footprint, dtype=float)
            nv = len(poly)
            inside = True
            for i in range(nv):
                e = poly[(i + 1) % nv] - poly[i]
                if e[0] * (p[1] - poly[i][1]) - e[1] * (p[0] - poly[i][0]) < 0:
                    inside = False
                    break
            if inside:
                return True
        return False


def extrude_footprint(footprint, height: float, material: str, base_z: float = 0.0,
                      index: int | None = None) -> list:
    """n wall quads plus one roof polygon for an n-gon footprint.

    The footprint must be CCW in the plan view; walls then face outward.
    """
    poly = np.asarray(footprint, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise GeometryError(f"footprint needs >= 3 2D vertices (building {index})")
    if height <= 0:
        raise GeometryError(f"building height must be > 0 (building {index})")
    # Normalize to CCW (positive signed area).
    area2 = np.cross(poly, np.roll(poly, -1, axis=0)).sum()
    if area2 < 0:
        poly = poly[::-1]
    lo = np.column_stack([poly, np.full(len(poly), base_z)])
    hi = np.column_stack([poly, np.full(len(poly), base_z + height)])
    surfaces = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        quad = [lo[i], lo[j], hi[j], hi[i]]
        surfaces.append(Surface.from_polygon(quad, material, index))
    surfaces.append(Surface.from_polygon(hi, material, index))
    return surfaces


def antenna_position(state, template: MeshTemplate) -> np.ndarray:
    """Antenna mount point: reference position plus the heading-rotated
    horizontal displacement; the vertical displacement is applied as-is."""
    p = np.asarray(state.position, dtype=float)
    if not np.isfinite(p).all():
        raise ValueError("vehicle state position must be finite")
    dis = np.asarray(template.antenna_displacement, dtype=float)
    c, s = math.cos(state.heading), math.sin(state.heading)
    return p + np.array([c * dis[0] - s * dis[1], s * dis[0] + c * dis[1], dis[2]])


class MeshRegistry:
    """The one-to-one vehicle -> mesh mapping, fixed at registration time."""

    def __init__(self, vehicle_classes: dict | None = None):
        self.vehicle_classes = dict(vehicle_classes or {})
        self._templates: dict[int, MeshTemplate] = {}
        self._placed: dict[int, PlacedMesh] = {}

    def register(self, vehicle_id: int, template: MeshTemplate | str) -> None:
        if vehicle_id in self._templates:
            raise ParseError(f"vehicle {vehicle_id} already registered")
        if isinstance(template, str):
            try:
                template = self.vehicle_classes[template]
            except KeyError:
                raise ParseError(f"unknown vehicle class {template!r}") from None
        self._templates[vehicle_id] = template

    def template_of(self, vehicle_id: int) -> MeshTemplate:
        try:
            return self._templates[vehicle_id]
        except KeyError:
            raise UnknownVehicle(f"vehicle {vehicle_id} was never registered") from None

    def pose_mesh(self, vehicle_id: int, state) -> tuple:
        """Apply a location update.  Returns (PlacedMesh, changed)."""
        template = self.template_of(vehicle_id)
        mesh = PlacedMesh(vehicle_id, template,
                          tuple(np.asarray(state.position, dtype=float)),
                          float(state.heading))
        prev = self._placed.get(vehicle_id)
        changed = prev != mesh
        self._placed[vehicle_id] = mesh
        return mesh, changed

    def remove(self, vehicle_id: int) -> bool:
        return self._placed.pop(vehicle_id, None) is not None

    @property
    def placed(self) -> dict:
        return self._placed

    def posed_ids(self) -> list:
        return sorted(self._placed)

    def box_arrays(self):
        """(ids, centers, headings, half_extents) arrays over posed meshes."""
        ids = self.posed_ids()
        centers = np.array([self._placed[i].box_center for i in ids], dtype=float).reshape(len(ids), 3)
        headings = np.array([self._placed[i].heading for i in ids], dtype=float)
        he = np.array([self._placed[i].template.half_extents for i in ids], dtype=float).reshape(len(ids), 3)
        return ids, centers, headings, he


# ---------------------------------------------------------------------------
# Scenario file I/O ([materials], [[buildings]], [vehicle_classes], [ground])
# ---------------------------------------------------------------------------

def parse_scenario(path) -> dict:
    """Raw TOML load of a scenario file (shared by all modules)."""
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ParseError(f"scenario file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"malformed scenario file {path}: {exc}") from None


def scene_from_dict(data: dict) -> Scene:
    materials = {name: Material(name, loss, blocking)
                 for name, (loss, blocking) in DEFAULT_MATERIALS.items()}
    for name, spec in data.get("materials", {}).items():
        try:
            materials[name] = Material(name, float(spec["reflection_loss_db"]),
                                       bool(spec.get("blocking", True)))
        except KeyError as exc:
            raise ParseError(f"material {name!r} missing key {exc}") from None

    buildings = []
    surfaces = []
    for idx, b in enumerate(data.get("buildings", [])):
        try:
            fp = b["footprint"]
            height = float(b["height"])
            material = b.get("material", "concrete")
        except KeyError as exc:
            raise ParseError(f"building {idx} missing key {exc}") from None
        if material not in materials:
            raise ParseError(f"building {idx} references unknown material {material!r}")
        base_z = float(b.get("base_z", 0.0))
        buildings.append(Building([tuple(map(float, v)) for v in fp], height, material, base_z))
        surfaces.extend(extrude_footprint(fp, height, material, base_z, idx))

    classes = {}
    for name, spec in data.get("vehicle_classes", {}).items():
        try:
            classes[name] = MeshTemplate(
                name,
                tuple(map(float, spec["half_extents"])),
                spec.get("material", "metal"),
                tuple(map(float, spec["antenna_displacement"])),
            )
        except KeyError as exc:
            raise ParseError(f"vehicle class {name!r} missing key {exc}") from None

    ground = None
    ground_z = None
    ground_extent = None
    if "ground" in data:
        g = data["ground"]
        ground_z = float(g.get("z", 0.0))
        if "extent" in g:
            ground_extent = tuple(map(float, g["extent"]))
        elif buildings:
            pts = np.vstack([np.asarray(b.footprint) for b in buildings])
            ground_extent = (float(pts[:, 0].min() - 200), float(pts[:, 1].min() - 200),
                             float(pts[:, 0].max() + 200), float(pts[:, 1].max() + 200))
        else:
            ground_extent = (-500.0, -500.0, 500.0, 500.0)
        xmin, ymin, xmax, ymax = ground_extent
        ground = Surface.from_polygon(
            [(xmin, ymin, ground_z), (xmax, ymin, ground_z),
             (xmax, ymax, ground_z), (xmin, ymax, ground_z)],
            g.get("material", "concrete"))

    scene = Scene(static_surfaces=surfaces, ground_plane=ground,
                  material_table=materials, buildings=buildings,
                  vehicle_classes=classes, ground_z=ground_z,
                  ground_extent=ground_extent)
    scene.validate()
    return scene


def load_scene(path) -> Scene:
    """Parse a scenario file into a validated Scene."""
    return scene_from_dict(parse_scenario(path))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(float(v)) if isinstance(v, float) else repr(v)
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)}")


def save_scene(scene: Scene, path) -> None:
    """Serialize the geometry sections; floats round-trip exactly via repr."""
    lines = []
    for name in sorted(scene.material_table):
        m = scene.material_table[name]
        lines += [f"[materials.{name}]",
                  f"reflection_loss_db = {_toml_value(m.reflection_loss_db)}",
                  f"blocking = {_toml_value(m.blocking)}", ""]
    if scene.ground_z is not None:
        lines += ["[ground]", f"z = {_toml_value(scene.ground_z)}",
                  f"extent = {_toml_value(list(scene.ground_extent))}",
                  f'material = "{scene.ground_plane.material}"', ""]
    for b in scene.buildings:
        lines += ["[[buildings]]",
                  f"footprint = {_toml_value([list(v) for v in b.footprint])}",
                  f"height = {_toml_value(b.height)}",
                  f"base_z = {_toml_value(b.base_z)}",
                  f'material = "{b.material}"', ""]
    for name in sorted(scene.vehicle_classes):
        t = scene.vehicle_classes[name]
        lines += [f"[vehicle_classes.{name}]",
                  f"half_extents = {_toml_value(list(t.half_extents))}",
                  f'material = "{t.material}"',
                  f"antenna_displacement = {_toml_value(list(t.antenna_displacement))}", ""]
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
