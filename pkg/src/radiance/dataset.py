"""Dataset assembly: conditioning sets, deterministic sweeps, binary shards,
manifests, and the two train/test splits.

A sample couples the conditioning stack (3 semantic channels, 1 antenna
pattern channel, k broadcast frequency channels) with its normalized RF map.
Shards store float32 planes little-endian behind a fixed header; the
manifest records per-sample metadata, byte offsets, and content hashes, so
reruns of the same sweep are bit-identical and hash-comparable.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .antenna import PatternRaster, UpaConfig, rasterize_pattern
from .propagation import RfMap, generate_rf_map
from .scene import (CLASS_WALL, GridSpec, SemanticMap, build_room,
                    point_in_polygon, rasterize_semantic, room_layout)

SHARD_MAGIC = b"RADS"
SHARD_VERSION = 1
MAP_MAGIC = b"RADM"

DEFAULT_CATALOG = (5e9, 28e9, 70e9)
DEFAULT_NORM_RANGE = (-150.0, 0.0)


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# conditioning pieces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyCode:
    """One-hot selection of a carrier frequency from an ordered catalog."""

    catalog: tuple[float, ...]
    index: int

    @property
    def k(self) -> int:
        return len(self.catalog)

    @property
    def freq_hz(self) -> float:
        return self.catalog[self.index]

    def vector(self) -> np.ndarray:
        v = np.zeros(self.k, dtype=np.float32)
        v[self.index] = 1.0
        return v

    def planes(self, height: int, width: int) -> np.ndarray:
        """(k, height, width) broadcast of the one-hot vector."""
        return np.broadcast_to(self.vector()[:, None, None],
                               (self.k, height, width)).copy()


def encode_frequency(freq_hz: float, catalog=DEFAULT_CATALOG) -> FrequencyCode:
    catalog = tuple(float(f) for f in catalog)
    for i, f in enumerate(catalog):
        if abs(f - freq_hz) <= 1e-6 * max(f, 1.0):
            return FrequencyCode(catalog=catalog, index=i)
    ghz = [f / 1e9 for f in catalog]
    raise DatasetError(f"{freq_hz / 1e9:g} GHz not in catalog {ghz} GHz")


def normalize_rss(rf_map: RfMap) -> np.ndarray:
    """dBm map -> [0, 1] raster per the map's norm_range (-inf -> 0)."""
    lo, hi = rf_map.norm_range
    if lo >= hi:
        raise DatasetError(f"bad norm range {rf_map.norm_range}")
    return rf_map.normalized()


def denormalize_rss(values, norm_range=DEFAULT_NORM_RANGE) -> np.ndarray:
    lo, hi = norm_range
    return lo + np.asarray(values, dtype=np.float64) * (hi - lo)


@dataclass
class ConditioningSet:
    """The conditioning triple: semantic map, antenna pattern, frequency code."""

    semantic: SemanticMap
    pattern: PatternRaster
    freq: FrequencyCode

    def __post_init__(self):
        if (self.semantic.height, self.semantic.width) != (self.pattern.height, self.pattern.width):
            raise DatasetError(
                f"semantic {self.semantic.height}x{self.semantic.width} and pattern "
                f"{self.pattern.height}x{self.pattern.width} rasters disagree")

    @property
    def n_channels(self) -> int:
        return 3 + 1 + self.freq.k

    def stack(self) -> np.ndarray:
        """(3+1+k, H, W) float32 channel stack for the networks."""
        h, w = self.semantic.height, self.semantic.width
        return np.concatenate([
            self.semantic.channels(),
            self.pattern.gain[None].astype(np.float32),
            self.freq.planes(h, w),
        ], axis=0).astype(np.float32)


def assemble_condition(semantic: SemanticMap, pattern: PatternRaster,
                       freq_code: FrequencyCode) -> ConditioningSet:
    return ConditioningSet(semantic=semantic, pattern=pattern, freq=freq_code)


@dataclass
class Sample:
    condition: ConditioningSet
    target: np.ndarray  # (H, W) normalized RSS in [0, 1]
    metadata: dict

    def to_planes(self) -> np.ndarray:
        return np.concatenate([self.condition.stack(),
                               self.target[None].astype(np.float32)], axis=0)


def _sample_from_planes(planes: np.ndarray, catalog, metadata: dict) -> Sample:
    k = len(catalog)
    if planes.shape[0] != 3 + 1 + k + 1:
        raise DatasetError(f"expected {3 + 1 + k + 1} planes, got {planes.shape[0]}")
    classes = np.argmax(planes[0:3], axis=0).astype(np.int8)
    semantic = SemanticMap(classes=classes)
    pattern = PatternRaster(gain=planes[3].astype(np.float64))
    onehot = planes[4:4 + k, 0, 0]
    freq = FrequencyCode(catalog=tuple(catalog), index=int(np.argmax(onehot)))
    return Sample(condition=ConditioningSet(semantic, pattern, freq),
                  target=planes[-1].astype(np.float32), metadata=metadata)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    rooms: tuple[str, ...] = ("room1", "room2", "room3", "room4", "lshape")
    frequencies: tuple[float, ...] = (28e9,)
    upas: tuple[tuple[int, int], ...] = ((4, 4),)
    grid_n: int = 32
    bs_stride: int = 8
    bs_positions: tuple[tuple[float, float], ...] | None = None  # overrides stride
    catalog: tuple[float, ...] = DEFAULT_CATALOG
    seed: int = 0
    max_reflections: int = 2
    tx_power_dbm: float = 0.0
    norm_range: tuple[float, float] = DEFAULT_NORM_RANGE

    def __post_init__(self):
        if not self.rooms or not self.frequencies or not self.upas:
            raise DatasetError("rooms, frequencies, and upas must be nonempty")
        for f in self.frequencies:
            encode_frequency(f, self.catalog)
        if self.bs_positions is None and self.bs_stride < 1:
            raise DatasetError("bs_stride must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rooms"] = list(self.rooms)
        d["frequencies"] = list(self.frequencies)
        d["upas"] = [list(u) for u in self.upas]
        d["catalog"] = list(self.catalog)
        d["bs_positions"] = None if self.bs_positions is None else [list(p) for p in self.bs_positions]
        d["norm_range"] = list(self.norm_range)
        return d


def sweep_config_from_dict(d: dict) -> SweepConfig:
    kwargs = dict(d)
    kwargs["rooms"] = tuple(kwargs.get("rooms", ("room1",)))
    kwargs["frequencies"] = tuple(kwargs.get("frequencies", (28e9,)))
    kwargs["upas"] = tuple(tuple(int(v) for v in u) for u in kwargs.get("upas", ((4, 4),)))
    kwargs["catalog"] = tuple(kwargs.get("catalog", DEFAULT_CATALOG))
    bp = kwargs.get("bs_positions")
    kwargs["bs_positions"] = None if bp is None else tuple(tuple(float(v) for v in p) for p in bp)
    kwargs["norm_range"] = tuple(kwargs.get("norm_range", DEFAULT_NORM_RANGE))
    return SweepConfig(**kwargs)


def walkable_bs_cells(room_id: str, grid: GridSpec, stride: int) -> list[tuple[float, float]]:
    """Cell-center BS positions on a stride grid, skipping wall cells and
    anything outside the walkable polygon."""
    scene = build_room(room_layout(room_id))
    semantic = rasterize_semantic(scene, grid)
    out = []
    for iy in range(stride // 2, grid.ny, stride):
        for ix in range(stride // 2, grid.nx, stride):
            if semantic.classes[iy, ix] == CLASS_WALL:
                continue
            x, y = grid.cell_center(ix, iy)
            if point_in_polygon(x, y, scene.floor_polygon):
                out.append((x, y))
    return out


def _positions_for_room(cfg: SweepConfig, room_id: str, grid: GridSpec):
    if cfg.bs_positions is not None:
        scene = build_room(room_layout(room_id))
        for x, y in cfg.bs_positions:
            if not point_in_polygon(x, y, scene.floor_polygon):
                raise DatasetError(f"BS position ({x}, {y}) infeasible in {room_id}")
        return list(cfg.bs_positions)
    return walkable_bs_cells(room_id, grid, cfg.bs_stride)


def _generate_sample(cfg: SweepConfig, grid: GridSpec, pattern_cache: dict,
                     room_id: str, freq: float, upa: tuple[int, int],
                     pos: tuple[float, float]) -> Sample:
    scene = build_room(room_layout(room_id, bs=pos))
    semantic = rasterize_semantic(scene, grid)
    key = (upa, grid.nx, grid.ny)
    if key not in pattern_cache:
        pattern_cache[key] = rasterize_pattern(UpaConfig(rows=upa[0], cols=upa[1]), grid)
    antenna_cfg = UpaConfig(rows=upa[0], cols=upa[1], carrier_freq=freq)
    rf = generate_rf_map(scene, antenna_cfg, freq, grid,
                         max_reflections=cfg.max_reflections,
                         tx_power_dbm=cfg.tx_power_dbm,
                         norm_range=cfg.norm_range)
    freq_code = encode_frequency(freq, cfg.catalog)
    cond = ConditioningSet(semantic=semantic, pattern=pattern_cache[key], freq=freq_code)
    ix, iy = grid.cell_of(pos[0], pos[1])
    meta = {
        "room": room_id,
        "freq_hz": float(freq),
        "upa": [int(upa[0]), int(upa[1])],
        "bs_xy": [float(pos[0]), float(pos[1])],
        "bs_cell": [ix, iy],
    }
    return Sample(condition=cond, target=rf.normalized().astype(np.float32), metadata=meta)


def run_sweep(cfg: SweepConfig, out_dir) -> dict:
    """Generate every configured sample, write the shard and manifest, and
    return the manifest dict. Deterministic for a fixed config."""
    grid = GridSpec(nx=cfg.grid_n, ny=cfg.grid_n, cell_size=10.0 / cfg.grid_n)
    jobs = []
    for room_id in cfg.rooms:
        positions = _positions_for_room(cfg, room_id, grid)
        if not positions:
            raise DatasetError(f"no feasible BS positions in {room_id}")
        for freq in cfg.frequencies:
            for upa in cfg.upas:
                for pos in positions:
                    jobs.append((room_id, freq, upa, pos))

    pattern_cache: dict = {}
    for _, _, upa, _ in jobs:  # warm sequentially; the cache is then read-only
        key = (upa, grid.nx, grid.ny)
        if key not in pattern_cache:
            pattern_cache[key] = rasterize_pattern(UpaConfig(rows=upa[0], cols=upa[1]), grid)

    n_workers = max(1, int(os.environ.get("RADIANCE_THREADS", "1")))

    def work(job):
        room_id, freq, upa, pos = job
        return _generate_sample(cfg, grid, pattern_cache, room_id, freq, upa, pos)

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            samples = list(pool.map(work, jobs))
    else:
        samples = [work(j) for j in jobs]

    os.makedirs(out_dir, exist_ok=True)
    shard_name = "data.rads"
    offsets = write_shard(os.path.join(out_dir, shard_name), samples,
                          grid=grid, k=len(cfg.catalog))
    manifest = {
        "format": SHARD_MAGIC.decode(),
        "version": SHARD_VERSION,
        "grid": {"nx": grid.nx, "ny": grid.ny, "cell_size": grid.cell_size},
        "catalog": list(cfg.catalog),
        "norm_range": list(cfg.norm_range),
        "sweep": cfg.to_dict(),
        "shard": shard_name,
        "samples": [
            {**s.metadata, "index": i, "offset": off, "nbytes": nb, "sha256": digest}
            for i, (s, (off, nb, digest)) in enumerate(zip(samples, offsets))
        ],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# shard files
# ---------------------------------------------------------------------------

def write_shard(path, samples: list[Sample], grid: GridSpec, k: int):
    """Header then contiguous float32 sample planes; returns per-sample
    (offset, nbytes, sha256) records."""
    layout = f"sem3,pat1,freq{k},rss1".encode()
    offsets = []
    with open(path, "wb") as f:
        f.write(SHARD_MAGIC)
        f.write(struct.pack("<IIIII", SHARD_VERSION, len(samples), grid.ny, grid.nx, k))
        f.write(struct.pack("<I", len(layout)))
        f.write(layout)
        for s in samples:
            planes = np.ascontiguousarray(s.to_planes(), dtype="<f4")
            raw = planes.tobytes()
            offsets.append((f.tell(), len(raw), hashlib.sha256(raw).hexdigest()))
            f.write(raw)
    return offsets


def read_shard(path, catalog, metadata_by_index=None) -> list[Sample]:
    with open(path, "rb") as f:
        if f.read(4) != SHARD_MAGIC:
            raise DatasetError(f"{path}: bad shard magic")
        version, count, ny, nx, k = struct.unpack("<IIIII", f.read(20))
        if version != SHARD_VERSION:
            raise DatasetError(f"{path}: unsupported shard version {version}")
        if k != len(catalog):
            raise DatasetError(f"{path}: shard k={k} but catalog has {len(catalog)}")
        (llen,) = struct.unpack("<I", f.read(4))
        f.read(llen)  # layout string, fixed by k
        n_planes = 3 + 1 + k + 1
        samples = []
        for i in range(count):
            raw = f.read(4 * n_planes * ny * nx)
            planes = np.frombuffer(raw, dtype="<f4").reshape(n_planes, ny, nx)
            meta = metadata_by_index.get(i, {}) if metadata_by_index else {}
            samples.append(_sample_from_planes(planes, catalog, dict(meta)))
    return samples


def load_dataset(data_dir) -> tuple[list[Sample], dict]:
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DatasetError(f"no manifest.json under {data_dir}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    meta_by_index = {rec["index"]: {key: rec[key] for key in
                                    ("room", "freq_hz", "upa", "bs_xy", "bs_cell")}
                     for rec in manifest["samples"]}
    samples = read_shard(os.path.join(data_dir, manifest["shard"]),
                         catalog=manifest["catalog"],
                         metadata_by_index=meta_by_index)
    return samples, manifest


# ---------------------------------------------------------------------------
# task splits
# ---------------------------------------------------------------------------

TRAIN_ROOMS = ("room1", "room2", "room3", "room4")
TASK2_TRAIN_UPAS = ((4, 4), (6, 6), (8, 8), (12, 12))
TASK2_TEST_UPA = (10, 10)
TASK2_FREQ = 28e9


def split_tasks(samples: list[Sample], task: int) -> tuple[list[Sample], list[Sample]]:
    """Task 1: generalize across floor plans (train rectangular rooms at 4x4,
    test the L-shaped room). Task 2: generalize across arrays (train room1 at
    28 GHz with 4/6/8/12 UPAs, test the 10x10 UPA)."""
    if task == 1:
        train = [s for s in samples
                 if s.metadata.get("room") in TRAIN_ROOMS
                 and tuple(s.metadata.get("upa", ())) == (4, 4)]
        test = [s for s in samples
                if s.metadata.get("room") == "lshape"
                and tuple(s.metadata.get("upa", ())) == (4, 4)]
        missing = [r for r in TRAIN_ROOMS + ("lshape",)
                   if not any(s.metadata.get("room") == r
                              and tuple(s.metadata.get("upa", ())) == (4, 4) for s in samples)]
        if missing:
            raise DatasetError(f"task 1 needs 4x4-UPA samples for rooms {missing}")
    elif task == 2:
        def sel(s, upas):
            return (s.metadata.get("room") == "room1"
                    and abs(s.metadata.get("freq_hz", 0) - TASK2_FREQ) < 1e3
                    and tuple(s.metadata.get("upa", ())) in upas)

        train = [s for s in samples if sel(s, set(TASK2_TRAIN_UPAS))]
        test = [s for s in samples if sel(s, {TASK2_TEST_UPA})]
        missing = [u for u in TASK2_TRAIN_UPAS + (TASK2_TEST_UPA,)
                   if not any(sel(s, {u}) for s in samples)]
        if missing:
            raise DatasetError(f"task 2 needs room1 28 GHz samples for UPAs {missing}")
    else:
        raise DatasetError(f"task must be 1 or 2, got {task}")
    if not train or not test:
        raise DatasetError(f"task {task} split is empty")
    return train, test


# ---------------------------------------------------------------------------
# single-map files
# ---------------------------------------------------------------------------

def save_rf_map(rf_map: RfMap, path):
    rss = np.ascontiguousarray(rf_map.rss, dtype="<f4")
    with open(path, "wb") as f:
        f.write(MAP_MAGIC)
        f.write(struct.pack("<III", SHARD_VERSION, rss.shape[0], rss.shape[1]))
        f.write(struct.pack("<ff", *rf_map.norm_range))
        f.write(rss.tobytes())


def load_rf_map(path) -> RfMap:
    with open(path, "rb") as f:
        if f.read(4) != MAP_MAGIC:
            raise DatasetError(f"{path}: bad map magic")
        version, ny, nx = struct.unpack("<III", f.read(12))
        if version != SHARD_VERSION:
            raise DatasetError(f"{path}: unsupported map version {version}")
        lo, hi = struct.unpack("<ff", f.read(8))
        rss = np.frombuffer(f.read(4 * ny * nx), dtype="<f4").reshape(ny, nx)
    return RfMap(rss=rss.astype(np.float64), norm_range=(float(lo), float(hi)))
