"""Indoor floor plans: walls, materials, base-station pose, and semantic rasters.

Rooms are 2-D wall segments extruded to a constant height over a flat
concrete floor. There is no ceiling. All coordinates are meters, with the
origin at the south-west corner of the bounding rectangle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# ITU-R P.2040 material coefficients: sigma(f) = a * f_GHz^b  [S/m]
BRICK = None  # set below, after Material is defined
CONCRETE = None

WALL_HEIGHT_M = 4.0
BS_HEIGHT_M = 3.0
RX_HEIGHT_M = 1.5

CLASS_FLOOR = 0
CLASS_WALL = 1
CLASS_BS = 2


class SceneError(ValueError):
    """Invalid room layout or scene description."""


@dataclass(frozen=True)
class Material:
    """Dielectric description of a building material.

    sigma(f) = cond_a * f_GHz^cond_b in S/m; rel_permittivity is the real
    part of the relative permittivity (>= 1).
    """

    name: str
    rel_permittivity: float
    cond_a: float
    cond_b: float

    def __post_init__(self):
        if self.rel_permittivity < 1.0:
            raise SceneError(f"rel_permittivity must be >= 1, got {self.rel_permittivity}")
        if self.cond_a < 0.0:
            raise SceneError("conductivity coefficient a must be >= 0")

    def conductivity(self, freq_hz: float) -> float:
        """Conductivity in S/m at the given frequency."""
        if freq_hz <= 0:
            raise SceneError("frequency must be positive")
        return self.cond_a * (freq_hz / 1e9) ** self.cond_b


BRICK = Material("brick", rel_permittivity=3.91, cond_a=0.0238, cond_b=0.16)
CONCRETE = Material("concrete", rel_permittivity=5.24, cond_a=0.0462, cond_b=0.7822)

MATERIALS = {"brick": BRICK, "concrete": CONCRETE}


@dataclass(frozen=True)
class Wall:
    """Vertical wall: a 2-D segment extruded from z=0 to z=height."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    height: float
    material: Material

    def __post_init__(self):
        if self.p0 == self.p1:
            raise SceneError("wall endpoints must be distinct")
        if self.height <= 0:
            raise SceneError("wall height must be positive")

    @property
    def length(self) -> float:
        return float(np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]))


@dataclass(frozen=True)
class Scene:
    """A floor plan with a single base station.

    bounds is (xmin, ymin, xmax, ymax). floor_polygon is the walkable floor
    outline (counter-clockwise vertex list); it defaults to the bounds
    rectangle and differs only for non-rectangular rooms.
    """

    bounds: tuple[float, float, float, float]
    walls: tuple[Wall, ...]
    floor_material: Material
    bs_position: tuple[float, float, float]
    bs_height: float
    rx_height: float
    floor_polygon: tuple[tuple[float, float], ...] = ()
    name: str = "scene"

    def __post_init__(self):
        if not self.floor_polygon:
            xmin, ymin, xmax, ymax = self.bounds
            poly = ((xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax))
            object.__setattr__(self, "floor_polygon", poly)

    @property
    def width(self) -> float:
        return self.bounds[2] - self.bounds[0]

    @property
    def depth(self) -> float:
        return self.bounds[3] - self.bounds[1]


@dataclass(frozen=True)
class GridSpec:
    """Uniform receiver/raster grid covering the scene bounds exactly."""

    nx: int
    ny: int
    cell_size: float

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise SceneError("grid must be at least 8x8")
        if self.cell_size <= 0:
            raise SceneError("cell_size must be positive")

    @property
    def width_m(self) -> float:
        return self.nx * self.cell_size

    @property
    def depth_m(self) -> float:
        return self.ny * self.cell_size

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return ((ix + 0.5) * self.cell_size, (iy + 0.5) * self.cell_size)

    def cell_centers(self) -> np.ndarray:
        """(ny, nx, 2) array of cell-center xy coordinates."""
        xs = (np.arange(self.nx) + 0.5) * self.cell_size
        ys = (np.arange(self.ny) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = min(int(x / self.cell_size), self.nx - 1)
        iy = min(int(y / self.cell_size), self.ny - 1)
        return max(ix, 0), max(iy, 0)


def grid_for_scene(scene: Scene, n: int) -> GridSpec:
    """Square n x n grid matching the scene bounds (bounds must be square)."""
    if abs(scene.width - scene.depth) > 1e-9:
        raise SceneError("square grid requires square bounds")
    return GridSpec(nx=n, ny=n, cell_size=scene.width / n)


@dataclass
class SemanticMap:
    """Per-cell class raster: 0=floor, 1=wall, 2=bs (one bs cell exactly)."""

    classes: np.ndarray  # (ny, nx) int array

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    def channels(self) -> np.ndarray:
        """One-hot view, shape (3, ny, nx), channel order floor/wall/bs."""
        out = np.zeros((3,) + self.classes.shape, dtype=np.float32)
        for c in (CLASS_FLOOR, CLASS_WALL, CLASS_BS):
            out[c][self.classes == c] = 1.0
        return out

    def bs_cell(self) -> tuple[int, int]:
        iy, ix = np.argwhere(self.classes == CLASS_BS)[0]
        return int(ix), int(iy)


def point_in_polygon(x: float, y: float, polygon) -> bool:
    """Ray-casting containment test; points on the boundary count as inside."""
    n = len(polygon)
    inside = False
    for i in range(n):
        x0, y0 = polygon[i]
        x1, y1 = polygon[(i + 1) % n]
        # on-edge check
        dx, dy = x1 - x0, y1 - y0
        cross = dx * (y - y0) - dy * (x - x0)
        if abs(cross) < 1e-12 * max(1.0, abs(dx) + abs(dy)):
            if min(x0, x1) - 1e-12 <= x <= max(x0, x1) + 1e-12 and \
               min(y0, y1) - 1e-12 <= y <= max(y0, y1) + 1e-12:
                return True
        if (y0 > y) != (y1 > y):
            xi = x0 + (y - y0) * dx / dy
            if x < xi:
                inside = not inside
    return inside


def polygon_area(polygon) -> float:
    """Shoelace area (positive for counter-clockwise order)."""
    a = 0.0
    n = len(polygon)
    for i in range(n):
        x0, y0 = polygon[i]
        x1, y1 = polygon[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return abs(a) / 2.0


def _perimeter_walls(polygon, height, material):
    walls = []
    n = len(polygon)
    for i in range(n):
        walls.append(Wall(tuple(polygon[i]), tuple(polygon[(i + 1) % n]), height, material))
    return walls


def build_room(layout: dict) -> Scene:
    """Construct a Scene from a room-layout descriptor.

    Supported shapes:
      rectangle: {"shape": "rectangle", "width_m", "depth_m",
                  "partitions": [[x0,y0,x1,y1], ...], "bs": [x, y]}
      lshape:    {"shape": "lshape", "width_m", "depth_m",
                  "cut_w_m", "cut_d_m", "bs": [x, y]}
                 (the cut removes the north-east quadrant-sized block)

    Optional keys: wall_height_m, bs_height_m, rx_height_m, wall_material,
    floor_material, name.
    """
    shape = layout.get("shape")
    if shape not in ("rectangle", "lshape"):
        raise SceneError(f"unsupported shape {shape!r}; expected 'rectangle' or 'lshape'")
    w = float(layout["width_m"])
    d = float(layout["depth_m"])
    if w <= 0 or d <= 0:
        raise SceneError(f"room dimensions must be positive, got {w} x {d}")
    wall_h = float(layout.get("wall_height_m", WALL_HEIGHT_M))
    bs_h = float(layout.get("bs_height_m", BS_HEIGHT_M))
    rx_h = float(layout.get("rx_height_m", RX_HEIGHT_M))
    wall_mat = MATERIALS[layout.get("wall_material", "brick")]
    floor_mat = MATERIALS[layout.get("floor_material", "concrete")]

    if shape == "rectangle":
        polygon = ((0.0, 0.0), (w, 0.0), (w, d), (0.0, d))
    else:
        cw = float(layout.get("cut_w_m", w / 2))
        cd = float(layout.get("cut_d_m", d / 2))
        if not (0 < cw < w and 0 < cd < d):
            raise SceneError("L-shape cut must be strictly inside the bounds")
        # remove the north-east block: (w-cw..w) x (d-cd..d)
        polygon = ((0.0, 0.0), (w, 0.0), (w, d - cd), (w - cw, d - cd), (w - cw, d), (0.0, d))

    walls = _perimeter_walls(polygon, wall_h, wall_mat)
    for seg in layout.get("partitions", ()):
        x0, y0, x1, y1 = (float(v) for v in seg)
        walls.append(Wall((x0, y0), (x1, y1), wall_h, wall_mat))

    bs_xy = layout.get("bs", (w / 2, d / 2))
    bs = (float(bs_xy[0]), float(bs_xy[1]), bs_h)
    if not point_in_polygon(bs[0], bs[1], polygon):
        raise SceneError(f"BS at ({bs[0]}, {bs[1]}) is outside the walkable area")

    scene = Scene(
        bounds=(0.0, 0.0, w, d),
        walls=tuple(walls),
        floor_material=floor_mat,
        bs_position=bs,
        bs_height=bs_h,
        rx_height=rx_h,
        floor_polygon=polygon,
        name=str(layout.get("name", shape)),
    )
    violations = validate_scene(scene)
    if violations:
        raise SceneError("invalid layout: " + "; ".join(violations))
    return scene


def validate_scene(scene: Scene) -> list[str]:
    """Return every violated scene invariant; empty list iff valid."""
    out = []
    xmin, ymin, xmax, ymax = scene.bounds
    if xmax <= xmin or ymax <= ymin:
        out.append("bounds are degenerate")
    bx, by, bz = scene.bs_position
    if not (xmin <= bx <= xmax and ymin <= by <= ymax):
        out.append("bs outside bounds")
    elif not point_in_polygon(bx, by, scene.floor_polygon):
        out.append("bs outside walkable area")
    if abs(bz - scene.bs_height) > 1e-9:
        out.append("bs_position z disagrees with bs_height")
    if scene.rx_height <= 0:
        out.append("rx height not positive")
    if scene.rx_height >= scene.bs_height:
        out.append("rx height not below bs height")
    min_wall_h = min((wl.height for wl in scene.walls), default=float("inf"))
    if scene.bs_height > min_wall_h + 1e-9:
        out.append("bs above wall height")
    if scene.rx_height > min_wall_h + 1e-9:
        out.append("rx above wall height")
    for i, wl in enumerate(scene.walls):
        for px, py in (wl.p0, wl.p1):
            if not (xmin - 1e-9 <= px <= xmax + 1e-9 and ymin - 1e-9 <= py <= ymax + 1e-9):
                out.append(f"wall {i} endpoint outside bounds")
                break
    return out


def _segment_intersects_cell(p0, p1, cx0, cy0, cx1, cy1) -> bool:
    # Liang-Barsky clip of the segment against the closed cell rectangle.
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - cx0), (dx, cx1 - x0), (-dy, y0 - cy0), (dy, cy1 - y0)):
        if p == 0.0:
            if q < 0.0:
                return False
        else:
            r = q / p
            if p < 0.0:
                if r > t1:
                    return False
                t0 = max(t0, r)
            else:
                if r < t0:
                    return False
                t1 = min(t1, r)
    return t0 <= t1


def rasterize_semantic(scene: Scene, grid: GridSpec) -> SemanticMap:
    """Label every grid cell: wall if it touches any wall segment, bs for the
    single cell containing the base station, floor otherwise."""
    if abs(grid.width_m - scene.width) > 1e-6 or abs(grid.depth_m - scene.depth) > 1e-6:
        raise SceneError("grid extent does not match scene bounds")
    classes = np.full((grid.ny, grid.nx), CLASS_FLOOR, dtype=np.int8)
    cs = grid.cell_size
    for wl in scene.walls:
        # restrict the scan to the segment's bounding box of cells
        x0 = min(wl.p0[0], wl.p1[0])
        x1 = max(wl.p0[0], wl.p1[0])
        y0 = min(wl.p0[1], wl.p1[1])
        y1 = max(wl.p0[1], wl.p1[1])
        ix0 = max(int(np.floor(x0 / cs)) - 1, 0)
        ix1 = min(int(np.ceil(x1 / cs)) + 1, grid.nx - 1)
        iy0 = max(int(np.floor(y0 / cs)) - 1, 0)
        iy1 = min(int(np.ceil(y1 / cs)) + 1, grid.ny - 1)
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                if classes[iy, ix] == CLASS_WALL:
                    continue
                if _segment_intersects_cell(wl.p0, wl.p1, ix * cs, iy * cs,
                                            (ix + 1) * cs, (iy + 1) * cs):
                    classes[iy, ix] = CLASS_WALL
    bx, by, _ = scene.bs_position
    ix, iy = grid.cell_of(bx, by)
    classes[iy, ix] = CLASS_BS
    return SemanticMap(classes=classes)


# ---------------------------------------------------------------------------
# Room catalog. The five stock floor plans share 10x10 m bounds and differ in
# interior geometry: four rectangular variants plus one L-shaped room.
# Partition coordinates deliberately avoid the 32- and 64-cell grid lines so
# interior walls rasterize one cell wide.
# ---------------------------------------------------------------------------

def room_layout(room_id: str, bs=None) -> dict:
    layouts = {
        "room1": {"shape": "rectangle", "width_m": 10.0, "depth_m": 10.0,
                  "partitions": [], "name": "room1"},
        "room2": {"shape": "rectangle", "width_m": 10.0, "depth_m": 10.0,
                  "partitions": [[0.0, 6.17, 6.4, 6.17]], "name": "room2"},
        "room3": {"shape": "rectangle", "width_m": 10.0, "depth_m": 10.0,
                  "partitions": [[3.67, 3.6, 3.67, 10.0]], "name": "room3"},
        "room4": {"shape": "rectangle", "width_m": 10.0, "depth_m": 10.0,
                  "partitions": [[0.0, 4.42, 4.1, 4.42], [6.83, 4.42, 10.0, 4.42],
                                 [5.46, 6.6, 5.46, 10.0]],
                  "name": "room4"},
        "lshape": {"shape": "lshape", "width_m": 10.0, "depth_m": 10.0,
                   "cut_w_m": 5.0, "cut_d_m": 5.0, "name": "lshape"},
    }
    if room_id not in layouts:
        raise SceneError(f"unknown room {room_id!r}; available: {sorted(layouts)}")
    layout = dict(layouts[room_id])
    if bs is not None:
        layout["bs"] = list(bs)
    elif room_id == "lshape":
        layout["bs"] = [3.0, 3.0]
    return layout


ROOM_IDS = ("room1", "room2", "room3", "room4", "lshape")


# ---------------------------------------------------------------------------
# Scene descriptor files (JSON)
# ---------------------------------------------------------------------------

def scene_to_dict(scene: Scene, grid: GridSpec | None = None) -> dict:
    d = {
        "name": scene.name,
        "shape": "rectangle" if len(scene.floor_polygon) == 4 else "polygon",
        "dimensions_m": [scene.width, scene.depth],
        "walls": [
            {"p0": list(wl.p0), "p1": list(wl.p1), "height_m": wl.height,
             "material": wl.material.name}
            for wl in scene.walls
        ],
        "materials": {
            m.name: {"rel_permittivity": m.rel_permittivity,
                     "cond_a": m.cond_a, "cond_b": m.cond_b}
            for m in {wl.material for wl in scene.walls} | {scene.floor_material}
        },
        "floor_material": scene.floor_material.name,
        "floor_polygon": [list(p) for p in scene.floor_polygon],
        "bs": {"x": scene.bs_position[0], "y": scene.bs_position[1],
               "z": scene.bs_position[2]},
        "rx_height_m": scene.rx_height,
    }
    if grid is not None:
        d["grid"] = {"nx": grid.nx, "ny": grid.ny}
    return d


def scene_from_dict(d: dict) -> Scene:
    mats = {}
    for name, spec in d.get("materials", {}).items():
        mats[name] = Material(name, spec["rel_permittivity"], spec["cond_a"], spec["cond_b"])
    for name, mat in MATERIALS.items():
        mats.setdefault(name, mat)
    w, depth = d["dimensions_m"]
    walls = tuple(
        Wall(tuple(ws["p0"]), tuple(ws["p1"]), ws["height_m"], mats[ws["material"]])
        for ws in d["walls"]
    )
    bs = d["bs"]
    scene = Scene(
        bounds=(0.0, 0.0, float(w), float(depth)),
        walls=walls,
        floor_material=mats[d.get("floor_material", "concrete")],
        bs_position=(float(bs["x"]), float(bs["y"]), float(bs["z"])),
        bs_height=float(bs["z"]),
        rx_height=float(d.get("rx_height_m", RX_HEIGHT_M)),
        floor_polygon=tuple(tuple(p) for p in d.get("floor_polygon", ())),
        name=d.get("name", "scene"),
    )
    violations = validate_scene(scene)
    if violations:
        raise SceneError("invalid scene file: " + "; ".join(violations))
    return scene


def save_scene(scene: Scene, path, grid: GridSpec | None = None) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_dict(scene, grid), f, indent=2, sort_keys=True)


def load_scene(path) -> Scene:
    with open(path) as f:
        return scene_from_dict(json.load(f))
