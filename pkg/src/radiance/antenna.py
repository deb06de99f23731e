"""Uniform planar array (UPA) gain patterns and their raster form.

The array lies in the horizontal plane with its broadside (boresight)
pointing straight down. Angles follow the boresight convention: elevation
is the polar angle measured from the boresight axis, azimuth rotates about
it. Gains are linear power ratios; the boresight gain of an N-element
uniform array is N under this normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AntennaError(ValueError):
    pass


# indoor base stations here never steer the beam: broadside faces the floor
BORESIGHT = (0.0, 0.0, -1.0)


@dataclass(frozen=True)
class UpaConfig:
    """Rectangular element grid with uniform excitation and fixed boresight.

    The boresight is the constant BORESIGHT (straight down); beam steering
    is out of scope. element_spacing is in wavelengths, so the pattern is
    frequency independent; carrier_freq is carried for metadata and
    wavelength conversions.
    """

    rows: int
    cols: int
    element_spacing: float = 0.5
    carrier_freq: float = 28e9

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise AntennaError("rows and cols must be >= 1")
        if self.element_spacing <= 0:
            raise AntennaError("element spacing must be positive")
        if self.carrier_freq <= 0:
            raise AntennaError("carrier frequency must be positive")

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols


@dataclass
class PatternRaster:
    """Azimuth/elevation gain raster, peak-normalized to 1."""

    gain: np.ndarray  # (height, width), linear power gain in [0, 1]

    @property
    def height(self) -> int:
        return self.gain.shape[0]

    @property
    def width(self) -> int:
        return self.gain.shape[1]


def element_gain(elevation_from_boresight) -> np.ndarray | float:
    """Hemispherical patch element: cos(theta) in front, zero behind.

    theta is the angle from boresight in [0, pi]; returns linear power gain.
    """
    theta = np.asarray(elevation_from_boresight, dtype=float)
    if np.any(theta < -1e-12) or np.any(theta > np.pi + 1e-12):
        raise AntennaError("elevation from boresight must lie in [0, pi]")
    g = np.where(theta < np.pi / 2, np.cos(theta), 0.0)
    g = np.maximum(g, 0.0)
    if np.isscalar(elevation_from_boresight):
        return float(g)
    return g


def array_factor(cfg: UpaConfig, azimuth, elevation) -> np.ndarray | complex:
    """Complex array factor with a centered phase reference.

    elevation is the polar angle from boresight (signed values fold onto the
    opposite azimuth); azimuth rotates about the boresight axis. |AF| is at
    most rows*cols, reached where all element phases align.
    """
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    u = np.sin(el) * np.cos(az)  # direction cosine along the column axis
    v = np.sin(el) * np.sin(az)  # direction cosine along the row axis
    m = np.arange(cfg.cols) - (cfg.cols - 1) / 2.0
    n = np.arange(cfg.rows) - (cfg.rows - 1) / 2.0
    phase_u = np.exp(1j * 2 * np.pi * cfg.element_spacing * np.multiply.outer(u, m))
    phase_v = np.exp(1j * 2 * np.pi * cfg.element_spacing * np.multiply.outer(v, n))
    af = phase_u.sum(axis=-1) * phase_v.sum(axis=-1)
    if np.isscalar(azimuth) and np.isscalar(elevation):
        return complex(af)
    return af


def upa_gain(cfg: UpaConfig, azimuth, elevation) -> np.ndarray | float:
    """Linear power gain: element pattern times |AF|^2 / N (boresight = N)."""
    el = np.asarray(elevation, dtype=float)
    af = array_factor(cfg, azimuth, el)
    g = element_gain(np.abs(el)) * np.abs(af) ** 2 / cfg.n_elements
    if np.isscalar(azimuth) and np.isscalar(elevation):
        return float(g)
    return g


def gain_toward(cfg: UpaConfig, direction) -> float:
    """Gain toward a 3-D unit direction, boresight being -z.

    direction need not be normalized. Used by the path tracer for departure
    directions.
    """
    d = np.asarray(direction, dtype=float)
    r = np.linalg.norm(d)
    if r == 0:
        raise AntennaError("zero-length direction")
    d = d / r
    theta = float(np.arccos(np.clip(-d[2], -1.0, 1.0)))
    az = float(np.arctan2(d[1], d[0]))
    return float(upa_gain(cfg, az, theta))


def gain_toward_many(cfg: UpaConfig, directions: np.ndarray) -> np.ndarray:
    """Vectorized gain_toward for an (..., 3) array of directions."""
    d = np.asarray(directions, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0):
        raise AntennaError("zero-length direction")
    dn = d / r[..., None]
    theta = np.arccos(np.clip(-dn[..., 2], -1.0, 1.0))
    az = np.arctan2(dn[..., 1], dn[..., 0])
    return upa_gain(cfg, az, theta)


def rasterize_pattern(cfg: UpaConfig, grid) -> PatternRaster:
    """Equirectangular gain raster over azimuth x signed elevation.

    Cell (u, v) samples azimuth 2*pi*u/width and elevation pi*v/height - pi/2,
    then the raster is normalized so its peak is exactly 1. The boresight
    (elevation 0) lands on row height//2 for even heights. grid is a GridSpec
    or a (width, height) pair.
    """
    if hasattr(grid, "nx"):
        width, height = grid.nx, grid.ny
    else:
        width, height = grid
    if width < 1 or height < 1:
        raise AntennaError("raster dimensions must be positive")
    az = 2 * np.pi * np.arange(width) / width
    el = np.pi * np.arange(height) / height - np.pi / 2
    gain = upa_gain(cfg, az[None, :], el[:, None])
    peak = gain.max()
    if peak <= 0:
        raise AntennaError("pattern raster has no positive samples")
    return PatternRaster(gain=(gain / peak).astype(np.float64))
