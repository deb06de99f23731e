"""Deterministic multipath tracing via the image method.

Specular paths with up to two bounces off walls and the floor are
enumerated exactly by mirroring the transmitter across surface planes and
back-tracing from each receiver. Walls are opaque: any wall crossing a path
segment's interior discards the path. Received power is the coherent sum of
complex path amplitudes.

`enumerate_paths` is the scalar per-receiver API returning full Path
records; `generate_rf_map` evaluates the same geometry vectorized over an
entire receiver grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .antenna import UpaConfig, gain_toward, gain_toward_many
from .scene import GridSpec, Material, Scene, point_in_polygon

SPEED_OF_LIGHT = 299792458.0
EPS0 = 8.8541878128e-12

# shared geometric tolerances; the brute-force oracle uses the same semantics
_T_TOL = 1e-9   # crossing parameter interior margin
_U_TOL = 1e-9   # along-wall containment slack
_Z_TOL = 1e-9   # vertical containment margin

FLOOR = "floor"


class PropagationError(ValueError):
    pass


@dataclass(frozen=True)
class Bounce:
    surface: str            # "wall<i>" or "floor"
    material: Material
    incidence: float        # radians from the surface normal
    point: tuple[float, float, float]


@dataclass
class Path:
    """One specular propagation path from TX to RX."""

    vertices: list[tuple[float, float, float]]
    bounces: list[Bounce]
    total_length: float

    @property
    def n_reflections(self) -> int:
        return len(self.bounces)

    def surface_key(self) -> tuple[str, ...]:
        return tuple(b.surface for b in self.bounces)


@dataclass
class RfMap:
    """Received-signal-strength grid in dBm with its normalization range.

    Cells with no propagation path hold -inf. The normalized view maps
    norm_range linearly onto [0, 1] and clamps.
    """

    rss: np.ndarray  # (ny, nx) dBm, -inf where no path
    norm_range: tuple[float, float] = (-150.0, 0.0)

    @property
    def height(self) -> int:
        return self.rss.shape[0]

    @property
    def width(self) -> int:
        return self.rss.shape[1]

    def normalized(self) -> np.ndarray:
        lo, hi = self.norm_range
        with np.errstate(invalid="ignore"):
            out = (self.rss - lo) / (hi - lo)
        out = np.where(np.isneginf(self.rss), 0.0, out)
        return np.clip(out, 0.0, 1.0)

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        lo, hi = self.norm_range
        return lo + np.asarray(values) * (hi - lo)


def normalized_to_dbm(values: np.ndarray, norm_range=(-150.0, 0.0)) -> np.ndarray:
    lo, hi = norm_range
    return lo + np.asarray(values, dtype=float) * (hi - lo)


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------

class _WallSurface:
    __slots__ = ("name", "a", "tang", "length", "normal2", "height", "material")

    def __init__(self, index, wall):
        self.name = f"wall{index}"
        self.a = np.asarray(wall.p0, dtype=float)
        d = np.asarray(wall.p1, dtype=float) - self.a
        self.length = float(np.hypot(d[0], d[1]))
        self.tang = d / self.length
        self.normal2 = np.array([self.tang[1], -self.tang[0]])
        self.height = wall.height
        self.material = wall.material

    def signed_dist(self, p):
        # p: (..., 3); distance of xy from the wall plane
        return (p[..., 0] - self.a[0]) * self.normal2[0] + (p[..., 1] - self.a[1]) * self.normal2[1]

    def mirror(self, p):
        s = self.signed_dist(p)
        q = np.array(p, dtype=float, copy=True)
        q[..., 0] -= 2 * s * self.normal2[0]
        q[..., 1] -= 2 * s * self.normal2[1]
        return q

    def contains(self, p):
        u = ((p[..., 0] - self.a[0]) * self.tang[0] + (p[..., 1] - self.a[1]) * self.tang[1]) / self.length
        z = p[..., 2]
        return (u >= -_U_TOL) & (u <= 1 + _U_TOL) & (z >= -_Z_TOL) & (z <= self.height + _Z_TOL)

    def normal3(self):
        return np.array([self.normal2[0], self.normal2[1], 0.0])


class _FloorSurface:
    __slots__ = ("name", "polygon", "material")

    def __init__(self, scene):
        self.name = FLOOR
        self.polygon = scene.floor_polygon
        self.material = scene.floor_material

    def signed_dist(self, p):
        return p[..., 2]

    def mirror(self, p):
        q = np.array(p, dtype=float, copy=True)
        q[..., 2] = -q[..., 2]
        return q

    def contains(self, p):
        if p.ndim == 1:
            return point_in_polygon(p[0], p[1], self.polygon)
        return _points_in_polygon(p[..., 0], p[..., 1], self.polygon)

    def normal3(self):
        return np.array([0.0, 0.0, 1.0])


def _points_in_polygon(xs, ys, polygon):
    inside = np.zeros(np.shape(xs), dtype=bool)
    n = len(polygon)
    for i in range(n):
        x0, y0 = polygon[i]
        x1, y1 = polygon[(i + 1) % n]
        cond = (y0 > ys) != (y1 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
        inside ^= cond & (xs < xi)
    return inside


def _surfaces(scene: Scene, include_floor: bool):
    surfs = [_WallSurface(i, w) for i, w in enumerate(scene.walls)]
    if include_floor:
        surfs.append(_FloorSurface(scene))
    return surfs


def _bounce_sequences(n_surfaces: int, max_reflections: int):
    seqs = [()]
    if max_reflections >= 1:
        seqs += [(i,) for i in range(n_surfaces)]
    if max_reflections >= 2:
        seqs += [(i, j) for i in range(n_surfaces) for j in range(n_surfaces) if i != j]
    return seqs


def _segment_blocked(p, q, walls_geo):
    """True if the open segment p->q crosses any wall's interior (scalar)."""
    d1x, d1y = q[0] - p[0], q[1] - p[1]
    for a, d2, height in walls_geo:
        denom = d1x * d2[1] - d1y * d2[0]
        if abs(denom) < 1e-15:
            continue
        rx, ry = a[0] - p[0], a[1] - p[1]
        t = (rx * d2[1] - ry * d2[0]) / denom
        if not (_T_TOL < t < 1 - _T_TOL):
            continue
        u = (rx * d1y - ry * d1x) / denom
        if not (-_U_TOL <= u <= 1 + _U_TOL):
            continue
        z = p[2] + t * (q[2] - p[2])
        if _Z_TOL < z < height - _Z_TOL:
            return True
    return False


def _walls_geometry(scene: Scene):
    out = []
    for w in scene.walls:
        a = np.asarray(w.p0, dtype=float)
        d2 = np.asarray(w.p1, dtype=float) - a
        out.append((a, d2, w.height))
    return out


def enumerate_paths(scene: Scene, tx, rx, max_reflections: int,
                    include_floor: bool = True) -> list[Path]:
    """All valid specular paths between two points, LOS included.

    max_reflections must be 0, 1, or 2. Returns an empty list when every
    candidate is blocked or geometrically invalid.
    """
    if max_reflections not in (0, 1, 2):
        raise PropagationError("max_reflections must be 0, 1, or 2")
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.allclose(tx, rx):
        raise PropagationError("tx and rx must differ")

    surfs = _surfaces(scene, include_floor)
    walls_geo = _walls_geometry(scene)
    paths = []
    for seq in _bounce_sequences(len(surfs), max_reflections):
        path = _trace_sequence(tx, rx, [surfs[i] for i in seq], walls_geo)
        if path is not None:
            paths.append(path)
    return paths


def _trace_sequence(tx, rx, seq_surfs, walls_geo):
    # forward image chain
    images = [tx]
    for s in seq_surfs:
        images.append(s.mirror(images[-1]))
    # back-trace reflection points from the receiver
    pts = []
    q = rx
    for k in range(len(seq_surfs) - 1, -1, -1):
        s = seq_surfs[k]
        img = images[k + 1]
        sq = float(s.signed_dist(q))
        si = float(s.signed_dist(img))
        denom = sq - si
        if abs(denom) < 1e-15:
            return None
        t = sq / denom
        if not (_T_TOL < t < 1 - _T_TOL):
            return None
        p = q + t * (img - q)
        if not bool(s.contains(p)):
            return None
        pts.append((s, p))
        q = p
    pts.reverse()

    vertices = [tuple(tx)] + [tuple(p) for _, p in pts] + [tuple(rx)]
    # opaque walls: every physical segment must be clear
    chain = [tx] + [p for _, p in pts] + [rx]
    for i in range(len(chain) - 1):
        if _segment_blocked(chain[i], chain[i + 1], walls_geo):
            return None

    bounces = []
    total = 0.0
    for i in range(len(chain) - 1):
        total += float(np.linalg.norm(chain[i + 1] - chain[i]))
    for i, (s, p) in enumerate(pts):
        d_in = chain[i + 1] - chain[i]
        d_in = d_in / np.linalg.norm(d_in)
        cos_i = abs(float(d_in @ s.normal3()))
        inc = float(np.arccos(np.clip(cos_i, 0.0, 1.0)))
        bounces.append(Bounce(surface=s.name, material=s.material, incidence=inc,
                              point=tuple(p)))
    return Path(vertices=vertices, bounces=bounces, total_length=total)


def check_specular(path: Path, scene: Scene, tol: float = 1e-9) -> bool:
    """Verify the mirror law at every bounce against the scene geometry."""
    verts = [np.asarray(v, dtype=float) for v in path.vertices]
    for i, b in enumerate(path.bounces):
        if b.surface == FLOOR:
            n = np.array([0.0, 0.0, 1.0])
        else:
            wall = scene.walls[int(b.surface[4:])]
            d = np.asarray(wall.p1, dtype=float) - np.asarray(wall.p0, dtype=float)
            d /= np.hypot(d[0], d[1])
            n = np.array([d[1], -d[0], 0.0])
        p_prev, p, p_next = verts[i], verts[i + 1], verts[i + 2]
        d_in = (p - p_prev) / np.linalg.norm(p - p_prev)
        d_out = (p_next - p) / np.linalg.norm(p_next - p)
        reflected = d_in - 2 * (d_in @ n) * n
        if np.linalg.norm(reflected - d_out) > tol:
            return False
        # on-surface check for the reflection point
        if b.surface == FLOOR:
            if abs(p[2]) > tol:
                return False
        else:
            a = np.asarray(wall.p0, dtype=float)
            s = (p[0] - a[0]) * n[0] + (p[1] - a[1]) * n[1]
            if abs(s) > tol:
                return False
    return True


# ---------------------------------------------------------------------------
# Electromagnetics
# ---------------------------------------------------------------------------

def complex_permittivity(material: Material, freq_hz: float) -> complex:
    """Relative permittivity eps_r - j*sigma/(2*pi*f*eps0)."""
    return material.rel_permittivity - 1j * material.conductivity(freq_hz) / (2 * np.pi * freq_hz * EPS0)


def fresnel_reflection(material: Material, freq_hz: float, incidence: float) -> complex:
    """TE-polarization reflection coefficient at the given incidence angle.

    incidence is measured from the surface normal, in [0, pi/2).
    """
    if not (0 <= incidence < np.pi / 2):
        raise PropagationError("incidence must lie in [0, pi/2)")
    return _fresnel_te(complex_permittivity(material, freq_hz), np.cos(incidence))


def _fresnel_te(eps: complex, cos_i):
    cos_i = np.asarray(cos_i, dtype=float)
    sin2 = 1.0 - cos_i ** 2
    root = np.sqrt(eps - sin2)
    g = (cos_i - root) / (cos_i + root)
    if g.ndim == 0:
        return complex(g)
    return g


def path_amplitude(path: Path, freq_hz: float, tx_antenna: UpaConfig | None = None) -> complex:
    """Complex field amplitude of one path (RX isotropic).

    magnitude = lambda/(4*pi*L) * sqrt(tx gain toward departure) * prod |Gamma|,
    phase = -2*pi*L/lambda plus reflection phases. tx_antenna None means an
    isotropic transmitter.
    """
    if freq_hz <= 0:
        raise PropagationError("frequency must be positive")
    lam = SPEED_OF_LIGHT / freq_hz
    dep = np.asarray(path.vertices[1], dtype=float) - np.asarray(path.vertices[0], dtype=float)
    g = 1.0 if tx_antenna is None else gain_toward(tx_antenna, dep)
    amp = lam / (4 * np.pi * path.total_length) * np.sqrt(g)
    amp = amp * np.exp(-2j * np.pi * path.total_length / lam)
    for b in path.bounces:
        amp *= fresnel_reflection(b.material, freq_hz, b.incidence)
    return complex(amp)


def received_power(amplitudes, tx_power_dbm: float = 0.0) -> float:
    """Coherent-sum received power in dBm; -inf when no paths contribute."""
    if not np.isfinite(tx_power_dbm):
        raise PropagationError("tx power must be finite")
    total = abs(sum(amplitudes, 0j))
    if total == 0.0:
        return float("-inf")
    return tx_power_dbm + 20.0 * np.log10(total)


# ---------------------------------------------------------------------------
# Grid tracer (vectorized over receiver cells)
# ---------------------------------------------------------------------------

def generate_rf_map(scene: Scene, tx_antenna: UpaConfig | None, freq_hz: float,
                    grid: GridSpec, max_reflections: int = 2,
                    tx_power_dbm: float = 0.0,
                    norm_range=(-150.0, 0.0)) -> RfMap:
    """Trace every grid cell center at rx_height and return the dBm map.

    Evaluates exactly the geometry of `enumerate_paths` but vectorized over
    the receiver grid; purely deterministic.
    """
    from .scene import validate_scene

    violations = validate_scene(scene)
    if violations:
        raise PropagationError("invalid scene: " + "; ".join(violations))
    if max_reflections not in (0, 1, 2):
        raise PropagationError("max_reflections must be 0, 1, or 2")
    if freq_hz <= 0:
        raise PropagationError("frequency must be positive")

    tx = np.asarray(scene.bs_position, dtype=float)
    centers = grid.cell_centers().reshape(-1, 2)
    m = centers.shape[0]
    rx = np.concatenate([centers, np.full((m, 1), scene.rx_height)], axis=1)

    surfs = _surfaces(scene, include_floor=True)
    walls_geo = _walls_geometry(scene)
    lam = SPEED_OF_LIGHT / freq_hz
    eps_by_surface = [complex_permittivity(s.material, freq_hz) for s in surfs]

    field = np.zeros(m, dtype=complex)
    for seq in _bounce_sequences(len(surfs), max_reflections):
        seq_surfs = [surfs[i] for i in seq]
        images = [tx]
        for s in seq_surfs:
            images.append(s.mirror(images[-1]))

        valid = np.ones(m, dtype=bool)
        pts = []  # reflection points, back-trace order
        q = rx
        for k in range(len(seq_surfs) - 1, -1, -1):
            s = seq_surfs[k]
            img = images[k + 1]
            sq = s.signed_dist(q)
            si = float(s.signed_dist(img))
            denom = sq - si
            ok = np.abs(denom) >= 1e-15
            t = np.where(ok, sq / np.where(ok, denom, 1.0), -1.0)
            ok &= (t > _T_TOL) & (t < 1 - _T_TOL)
            p = q + t[:, None] * (img[None, :] - q)
            ok &= s.contains(p)
            valid &= ok
            pts.append(p)
            q = p
        pts.reverse()

        chain = [np.broadcast_to(tx, (m, 3))] + pts + [rx]
        for i in range(len(chain) - 1):
            if not valid.any():
                break
            valid &= ~_segments_blocked(chain[i], chain[i + 1], walls_geo)
        if not valid.any():
            continue

        # geometry accepted; accumulate complex amplitudes on the valid subset
        sel = np.flatnonzero(valid)
        final_img = images[-1]
        lengths = np.linalg.norm(rx[sel] - final_img[None, :], axis=1)
        first_pt = pts[0][sel] if pts else rx[sel]
        dep = first_pt - tx[None, :]
        if tx_antenna is None:
            g = np.ones(sel.size)
        else:
            g = gain_toward_many(tx_antenna, dep)
        amp = lam / (4 * np.pi * lengths) * np.sqrt(g) * np.exp(-2j * np.pi * lengths / lam)
        prev = chain[0]
        for k, s in enumerate(seq_surfs):
            d_in = pts[k][sel] - prev[sel]
            cos_i = np.abs(d_in @ s.normal3()) / np.linalg.norm(d_in, axis=1)
            amp = amp * _fresnel_te(eps_by_surface[seq[k]], np.clip(cos_i, 0.0, 1.0))
            prev = chain[k + 1]
        field[sel] += amp

    mag = np.abs(field)
    with np.errstate(divide="ignore"):
        rss = tx_power_dbm + 20.0 * np.log10(mag)
    rss = np.where(mag == 0.0, -np.inf, rss)
    return RfMap(rss=rss.reshape(grid.ny, grid.nx), norm_range=tuple(norm_range))


def _segments_blocked(p, q, walls_geo):
    """Vectorized interior-crossing test for (M,3) segment endpoint arrays."""
    m = p.shape[0]
    blocked = np.zeros(m, dtype=bool)
    d1 = q[:, :2] - p[:, :2]
    for a, d2, height in walls_geo:
        denom = d1[:, 0] * d2[1] - d1[:, 1] * d2[0]
        ok = np.abs(denom) >= 1e-15
        safe = np.where(ok, denom, 1.0)
        rx_ = a[0] - p[:, 0]
        ry_ = a[1] - p[:, 1]
        t = (rx_ * d2[1] - ry_ * d2[0]) / safe
        u = (rx_ * d1[:, 1] - ry_ * d1[:, 0]) / safe
        z = p[:, 2] + t * (q[:, 2] - p[:, 2])
        hit = ok & (t > _T_TOL) & (t < 1 - _T_TOL) & (u >= -_U_TOL) & (u <= 1 + _U_TOL) \
            & (z > _Z_TOL) & (z < height - _Z_TOL)
        blocked |= hit
    return blocked
