"""Generator and discriminator networks plus checkpoint serialization.

The generator maps a noise vector through a dense layer to a 4x4 seed map,
then runs one conditioned residual block plus nearest x2 upsample per
doubling until the target resolution, halving channels each stage, and
finishes with a 3x3 conv and sigmoid. Conditioning enters only through the
spatially adaptive normalization inside each block, fed the condition stack
resized to that stage's resolution.

The discriminator consumes the channel concat of the condition stack and a
real or synthetic map, applies stride-2 4x4 conv / instance norm / leaky
ReLU blocks until the spatial size is 8, one unpadded 4x4 conv down to 5x5,
and a 1x1 conv to single-channel patch logits. Intermediate activations are
returned for the feature-matching loss.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor

CHECKPOINT_MAGIC = b"RADC"
CHECKPOINT_VERSION = 1

_VALID_RESOLUTIONS = (16, 32, 64, 128)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    z_dim: int = 64
    base_channels: int = 64
    target_resolution: int = 64
    output_channels: int = 1
    cond_channels: int = 7
    spade_hidden: int = 64

    def __post_init__(self):
        if self.target_resolution not in _VALID_RESOLUTIONS:
            raise ModelError(f"target_resolution must be one of {_VALID_RESOLUTIONS}")
        if self.z_dim < 1 or self.base_channels < 1 or self.spade_hidden < 1:
            raise ModelError("z_dim, base_channels, spade_hidden must be >= 1")

    @property
    def n_stages(self) -> int:
        return int(np.log2(self.target_resolution // 4))

    @property
    def seed_channels(self) -> int:
        return 8 * self.base_channels


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 8  # condition channels + map channels
    base_channels: int = 64
    input_resolution: int = 64

    def __post_init__(self):
        if self.input_resolution not in _VALID_RESOLUTIONS:
            raise ModelError(f"input_resolution must be one of {_VALID_RESOLUTIONS}")

    @property
    def n_downsamples(self) -> int:
        return int(np.log2(self.input_resolution // 8))


class ModelParams:
    """Named weight tensors for the networks, checkpointable bit-exactly."""

    def __init__(self, tensors: dict[str, Tensor] | None = None, meta: dict | None = None):
        self.tensors: dict[str, Tensor] = dict(tensors or {})
        self.meta: dict = dict(meta or {})

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def add(self, name: str, tensor: Tensor):
        if name in self.tensors:
            raise ModelError(f"duplicate parameter name {name!r}")
        self.tensors[name] = tensor

    def merge(self, other: "ModelParams") -> "ModelParams":
        for name, t in other.tensors.items():
            self.add(name, t)
        self.meta.update(other.meta)
        return self

    def subset(self, prefix: str) -> list[Tensor]:
        return [self.tensors[n] for n in self.names() if n.startswith(prefix)]

    def named_subset(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(n, self.tensors[n]) for n in self.names() if n.startswith(prefix)]

    def n_parameters(self, prefix: str = "") -> int:
        return sum(t.data.size for n, t in self.tensors.items() if n.startswith(prefix))

    def zero_grad(self, prefix: str = ""):
        for n, t in self.tensors.items():
            if n.startswith(prefix):
                t.zero_grad()


def _layer_rng(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.blake2s(f"{seed}:{name}".encode()).digest()[:8]
    return np.random.default_rng(int.from_bytes(digest, "little"))


def _init_weight(params: ModelParams, name: str, shape, seed: int, std: float = 0.02):
    rng = _layer_rng(seed, name)
    params.add(name, Tensor(rng.normal(0.0, std, size=shape), requires_grad=True))


def _init_bias(params: ModelParams, name: str, n: int, value: float = 0.0):
    params.add(name, Tensor(np.full(n, value), requires_grad=True))


def _init_spade(params: ModelParams, prefix: str, channels: int, cond_ch: int,
                hidden: int, seed: int):
    _init_weight(params, f"{prefix}/shared_w", (hidden, cond_ch, 3, 3), seed)
    _init_bias(params, f"{prefix}/shared_b", hidden)
    _init_weight(params, f"{prefix}/gamma_w", (channels, hidden, 3, 3), seed)
    # gamma bias starts at 1 so the block begins near identity modulation
    _init_bias(params, f"{prefix}/gamma_b", channels, 1.0)
    _init_weight(params, f"{prefix}/beta_w", (channels, hidden, 3, 3), seed)
    _init_bias(params, f"{prefix}/beta_b", channels)


def build_generator(cfg: GeneratorConfig, seed: int) -> ModelParams:
    params = ModelParams(meta={"generator": asdict(cfg)})
    c0 = cfg.seed_channels
    _init_weight(params, "G/dense/w", (cfg.z_dim, 16 * c0), seed)
    _init_bias(params, "G/dense/b", 16 * c0)
    cin = c0
    for i in range(cfg.n_stages):
        cout = cin // 2
        pre = f"G/block{i}"
        _init_spade(params, f"{pre}/spade_a", cin, cfg.cond_channels, cfg.spade_hidden, seed)
        _init_weight(params, f"{pre}/conv_a/w", (cout, cin, 3, 3), seed)
        _init_bias(params, f"{pre}/conv_a/b", cout)
        _init_spade(params, f"{pre}/spade_b", cout, cfg.cond_channels, cfg.spade_hidden, seed)
        _init_weight(params, f"{pre}/conv_b/w", (cout, cout, 3, 3), seed)
        _init_bias(params, f"{pre}/conv_b/b", cout)
        _init_spade(params, f"{pre}/spade_s", cin, cfg.cond_channels, cfg.spade_hidden, seed)
        _init_weight(params, f"{pre}/conv_s/w", (cout, cin, 1, 1), seed)
        _init_bias(params, f"{pre}/conv_s/b", cout)
        cin = cout
    _init_weight(params, "G/out/w", (cfg.output_channels, cin, 3, 3), seed)
    _init_bias(params, "G/out/b", cfg.output_channels)
    return params


def _spade_params(params: ModelParams, prefix: str) -> dict[str, Tensor]:
    return {k: params[f"{prefix}/{k}"]
            for k in ("shared_w", "shared_b", "gamma_w", "gamma_b", "beta_w", "beta_b")}


def _resblk(params: ModelParams, prefix: str, x: Tensor, cond: Tensor) -> Tensor:
    h = ag.relu(ag.spade_norm(x, cond, _spade_params(params, f"{prefix}/spade_a")))
    h = ag.conv2d(h, params[f"{prefix}/conv_a/w"], params[f"{prefix}/conv_a/b"], 1, 1)
    h = ag.relu(ag.spade_norm(h, cond, _spade_params(params, f"{prefix}/spade_b")))
    h = ag.conv2d(h, params[f"{prefix}/conv_b/w"], params[f"{prefix}/conv_b/b"], 1, 1)
    s = ag.spade_norm(x, cond, _spade_params(params, f"{prefix}/spade_s"))
    s = ag.conv2d(s, params[f"{prefix}/conv_s/w"], params[f"{prefix}/conv_s/b"], 1, 0)
    return ag.add(h, s)


def _as_condition_tensor(condition) -> Tensor:
    if isinstance(condition, Tensor):
        return condition
    arr = condition.stack() if hasattr(condition, "stack") else np.asarray(condition)
    if arr.ndim == 3:
        arr = arr[None]
    return Tensor(arr)


def generate(params: ModelParams, z, condition) -> Tensor:
    """Synthesize maps: (B, output_channels, res, res) strictly inside (0, 1).

    z is (B, z_dim) standard-normal noise; condition is a ConditioningSet,
    a (C, H, W) array, a (B, C, H, W) array, or an equivalent Tensor.
    """
    cfg = GeneratorConfig(**params.meta["generator"])
    cond = _as_condition_tensor(condition)
    if cond.data.ndim != 4 or cond.data.shape[1] != cfg.cond_channels:
        raise ag.ShapeError(f"condition must be (B, {cfg.cond_channels}, H, W)")
    if cond.data.shape[2] != cfg.target_resolution or cond.data.shape[3] != cfg.target_resolution:
        raise ag.ShapeError(
            f"condition resolution {cond.data.shape[2:]} does not match "
            f"target {cfg.target_resolution}")
    zt = z if isinstance(z, Tensor) else Tensor(np.asarray(z))
    if zt.data.ndim != 2 or zt.data.shape[1] != cfg.z_dim:
        raise ag.ShapeError(f"z must be (B, {cfg.z_dim})")
    if zt.data.shape[0] != cond.data.shape[0]:
        raise ag.ShapeError("z and condition batch sizes differ")

    # condition pyramid down to the 4x4 seed resolution
    pyramid = {cfg.target_resolution: cond}
    r = cfg.target_resolution
    while r > 4:
        pyramid[r // 2] = ag.downsample_nearest_x2(pyramid[r])
        r //= 2

    x = ag.dense(zt, params["G/dense/w"], params["G/dense/b"])
    x = ag.reshape(x, (zt.data.shape[0], cfg.seed_channels, 4, 4))
    res = 4
    for i in range(cfg.n_stages):
        x = _resblk(params, f"G/block{i}", x, pyramid[res])
        x = ag.upsample_nearest_x2(x)
        res *= 2
    x = ag.conv2d(x, params["G/out/w"], params["G/out/b"], 1, 1)
    return ag.sigmoid(x)


def build_discriminator(cfg: DiscriminatorConfig, seed: int) -> ModelParams:
    params = ModelParams(meta={"discriminator": asdict(cfg)})
    cin = cfg.in_channels
    ch = cfg.base_channels
    for i in range(cfg.n_downsamples):
        _init_weight(params, f"D/down{i}/w", (ch, cin, 4, 4), seed)
        _init_bias(params, f"D/down{i}/b", ch)
        cin, ch = ch, ch * 2
    _init_weight(params, "D/pre/w", (ch, cin, 4, 4), seed)
    _init_bias(params, "D/pre/b", ch)
    _init_weight(params, "D/out/w", (1, ch, 1, 1), seed)
    _init_bias(params, "D/out/b", 1)
    return params


def discriminate(params: ModelParams, rf_map, condition) -> tuple[Tensor, list[Tensor]]:
    """Patch logits (B, 1, 5, 5) plus the intermediate feature taps."""
    cfg = DiscriminatorConfig(**params.meta["discriminator"])
    cond = _as_condition_tensor(condition)
    m = rf_map if isinstance(rf_map, Tensor) else Tensor(np.asarray(rf_map))
    if m.data.ndim == 3:
        m = ag.reshape(m, (1,) + m.data.shape)
    res = m.data.shape[2]
    if res != cfg.input_resolution or m.data.shape[3] != res:
        raise ag.ShapeError(f"map resolution {m.data.shape[2:]} does not match "
                            f"discriminator input {cfg.input_resolution}")
    x = ag.concat_channels([cond, m])
    if x.data.shape[1] != cfg.in_channels:
        raise ag.ShapeError(f"expected {cfg.in_channels} input channels, got {x.data.shape[1]}")

    feats = []
    for i in range(cfg.n_downsamples):
        x = ag.conv2d(x, params[f"D/down{i}/w"], params[f"D/down{i}/b"], stride=2, padding=1)
        x = ag.lrelu(ag.instance_norm(x))
        feats.append(x)
    x = ag.conv2d(x, params["D/pre/w"], params["D/pre/b"], stride=1, padding=0)
    x = ag.lrelu(ag.instance_norm(x))
    feats.append(x)
    logits = ag.conv2d(x, params["D/out/w"], params["D/out/b"], stride=1, padding=0)
    return logits, feats


def count_parameters(cfg: GeneratorConfig) -> int:
    """Closed-form generator parameter count (used as a sanity oracle)."""
    c0 = cfg.seed_channels
    total = cfg.z_dim * 16 * c0 + 16 * c0

    def spade(ch):
        return (cfg.spade_hidden * cfg.cond_channels * 9 + cfg.spade_hidden
                + 2 * (ch * cfg.spade_hidden * 9 + ch))

    cin = c0
    for _ in range(cfg.n_stages):
        cout = cin // 2
        total += spade(cin) + (cout * cin * 9 + cout)
        total += spade(cout) + (cout * cout * 9 + cout)
        total += spade(cin) + (cout * cin * 1 + cout)
        cin = cout
    total += cfg.output_channels * cin * 9 + cfg.output_channels
    return total


# ---------------------------------------------------------------------------
# checkpoints: header JSON + named float32 tensors, little endian
# ---------------------------------------------------------------------------

def write_named_tensors(path, arrays: dict[str, np.ndarray], meta: dict,
                        magic: bytes = CHECKPOINT_MAGIC):
    header = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            nb = name.encode()
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_named_tensors(path, magic: bytes = CHECKPOINT_MAGIC):
    with open(path, "rb") as f:
        if f.read(4) != magic:
            raise ModelError(f"{path}: bad magic, expected {magic!r}")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: unsupported version {version}")
        meta = json.loads(f.read(hlen).decode())
        (count,) = struct.unpack("<I", f.read(4))
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode()
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(shape).copy()
    return arrays, meta


def save_checkpoint(params: ModelParams, path):
    arrays = {name: t.data for name, t in params.tensors.items()}
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"refusing to checkpoint non-finite tensor {name!r}")
    write_named_tensors(path, arrays, params.meta)


def load_checkpoint(path) -> ModelParams:
    arrays, meta = read_named_tensors(path)
    tensors = {}
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"checkpoint tensor {name!r} is not finite")
        tensors[name] = Tensor(arr, requires_grad=True, dtype=np.float32)
    return ModelParams(tensors=tensors, meta=meta)
