"""Training objectives: adversarial, pixel, focal, feature-matching,
perceptual surrogate, and the gradient (Sobel) loss, plus their weighted sum.

Adversarial terms use the numerically stable softplus form of the binary
cross entropy on patch logits; at all-zero logits the discriminator loss is
2*log(2) and the generator loss log(2), the saddle values of the underlying
min-max game. The generator side is the non-saturating variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor

FOCAL_EPS = 0.05
GL_EPS = 1e-8

# Sobel kernels, module-level so verification suites can probe sensitivity
SOBEL_KX = np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]])
SOBEL_KY = SOBEL_KX.T.copy()


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative weights of the generator's auxiliary loss terms."""

    mae: float = 10.0
    fl: float = 1.0
    fm: float = 10.0
    vgg: float = 0.0
    gl: float = 1.0

    def __post_init__(self):
        for name, v in self.as_dict().items():
            if v < 0:
                raise LossError(f"loss weight {name} must be >= 0, got {v}")

    def as_dict(self) -> dict[str, float]:
        return {"mae": self.mae, "fl": self.fl, "fm": self.fm, "vgg": self.vgg, "gl": self.gl}


@dataclass
class LossReport:
    adv: float
    terms: dict[str, float]
    weights: LossWeights
    total: float

    def addends(self) -> dict[str, float]:
        w = self.weights.as_dict()
        return {k: w[k] * v for k, v in self.terms.items()}


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _check_same_shape(a: Tensor, b: Tensor, what: str):
    if a.data.shape != b.data.shape:
        raise ag.ShapeError(f"{what}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# adversarial
# ---------------------------------------------------------------------------

def adv_d_loss(real_logits, fake_logits) -> Tensor:
    """Discriminator objective: -log sig(real) - log(1 - sig(fake)), patch mean."""
    r = _as_tensor(real_logits)
    f = _as_tensor(fake_logits)
    return ag.add(ag.tmean(ag.softplus(ag.mul(r, -1.0))), ag.tmean(ag.softplus(f)))


def adv_g_loss(fake_logits) -> Tensor:
    """Non-saturating generator objective: -log sig(fake), patch mean."""
    f = _as_tensor(fake_logits)
    return ag.tmean(ag.softplus(ag.mul(f, -1.0)))


# ---------------------------------------------------------------------------
# pixel terms
# ---------------------------------------------------------------------------

def l_mae(real_map, fake_map) -> Tensor:
    r, f = _as_tensor(real_map), _as_tensor(fake_map)
    _check_same_shape(r, f, "l_mae")
    return ag.tmean(ag.absolute(ag.sub(r, f)))


def l_focal(real_map, fake_map, gamma: float = 2.0) -> Tensor:
    """Brightness-weighted L1: weights (FOCAL_EPS + real)^gamma, normalized.

    High-value pixels of the reference map dominate the residual. gamma=0
    reduces to plain MAE. Weights are treated as constants of the reference.
    """
    if gamma < 0:
        raise LossError(f"focal gamma must be >= 0, got {gamma}")
    r, f = _as_tensor(real_map), _as_tensor(fake_map)
    _check_same_shape(r, f, "l_focal")
    w = (FOCAL_EPS + np.asarray(r.data, dtype=np.float64)) ** gamma
    w = (w / w.sum()).astype(r.data.dtype)
    return ag.tsum(ag.mul(ag.absolute(ag.sub(r, f)), w))


def l_fm(real_features, fake_features) -> Tensor:
    """Mean squared feature distance averaged over discriminator taps."""
    if len(real_features) != len(fake_features) or not real_features:
        raise ag.ShapeError("feature lists must be equal-length and nonempty")
    total = None
    for r, f in zip(real_features, fake_features):
        r, f = _as_tensor(r), _as_tensor(f)
        _check_same_shape(r, f, "l_fm")
        d = ag.sub(r, f)
        term = ag.tmean(ag.mul(d, d))
        total = term if total is None else ag.add(total, term)
    return ag.mul(total, 1.0 / len(real_features))


# ---------------------------------------------------------------------------
# perceptual surrogate (frozen random extractor)
# ---------------------------------------------------------------------------

class FeatureExtractor:
    """Frozen 4-layer random conv stack standing in for a pretrained network.

    Weights are drawn once from the seed and never trained; the loss is the
    mean squared distance between layer activations of the two maps.
    """

    CHANNELS = (8, 16, 32, 64)
    STRIDES = (2, 2, 2, 1)

    def __init__(self, seed: int, in_channels: int = 1):
        self.seed = int(seed)
        self.in_channels = int(in_channels)
        self.layers = []
        cin = in_channels
        for i, (cout, s) in enumerate(zip(self.CHANNELS, self.STRIDES)):
            rng = np.random.default_rng([int(seed), i])
            std = np.sqrt(2.0 / (cin * 9))
            w = rng.normal(0.0, std, size=(cout, cin, 3, 3))
            b = np.zeros(cout)
            self.layers.append((w, b, s))
            cin = cout

    def forward(self, x: Tensor) -> list[Tensor]:
        feats = []
        h = x
        for w, b, s in self.layers:
            wt = Tensor(w, dtype=x.data.dtype.type)
            bt = Tensor(b, dtype=x.data.dtype.type)
            h = ag.relu(ag.conv2d(h, wt, bt, stride=s, padding=1))
            feats.append(h)
        return feats


def make_feature_extractor(seed: int, in_channels: int = 1) -> FeatureExtractor:
    return FeatureExtractor(seed, in_channels)


def l_perceptual(real_map, fake_map, extractor: FeatureExtractor) -> Tensor:
    r, f = _as_tensor(real_map), _as_tensor(fake_map)
    _check_same_shape(r, f, "l_perceptual")
    return l_fm(extractor.forward(r), extractor.forward(f))


# ---------------------------------------------------------------------------
# gradient loss
# ---------------------------------------------------------------------------

def sobel_gradients(rf_map) -> tuple[Tensor, Tensor]:
    """Sobel gx/gy with replicate padding; gx responds to horizontal change."""
    m = _as_tensor(rf_map)
    if m.data.ndim != 4:
        raise ag.ShapeError("sobel_gradients expects a (B, C, H, W) tensor")
    bsz, c, h, w = m.data.shape
    if h < 3 or w < 3:
        raise ag.ShapeError("sobel_gradients needs spatial size >= 3")
    flat = ag.reshape(m, (bsz * c, 1, h, w))
    padded = ag.pad_replicate(flat, 1)
    kx = Tensor(SOBEL_KX.reshape(1, 1, 3, 3), dtype=m.data.dtype.type)
    ky = Tensor(SOBEL_KY.reshape(1, 1, 3, 3), dtype=m.data.dtype.type)
    gx = ag.reshape(ag.conv2d(padded, kx, None, 1, 0), (bsz, c, h, w))
    gy = ag.reshape(ag.conv2d(padded, ky, None, 1, 0), (bsz, c, h, w))
    return gx, gy


def _grad_magnitude(gx: Tensor, gy: Tensor) -> Tensor:
    # tiny offset keeps sqrt differentiable on flat regions; value impact is
    # orders of magnitude below GL_EPS
    return ag.sqrt(ag.add(ag.add(ag.mul(gx, gx), ag.mul(gy, gy)), 1e-24))


def gl_terms(real_map, fake_map, raw_cosine: bool = False) -> tuple[Tensor, Tensor]:
    """The two gradient-loss components: (KL term, direction term).

    Magnitude fields (plus GL_EPS) are normalized per sample into pixel
    distributions and compared with KL(real || fake). The direction term is
    the mean of (1 - cosine similarity) between gradient vectors, skipping
    pixels where both magnitudes fall below GL_EPS; raw_cosine=True instead
    adds the raw cosine similarity (the literal additive reading).
    """
    r, f = _as_tensor(real_map), _as_tensor(fake_map)
    _check_same_shape(r, f, "l_gl")
    if r.data.ndim != 4:
        raise ag.ShapeError("l_gl expects (B, C, H, W) maps")
    gxr, gyr = sobel_gradients(r)
    gxf, gyf = sobel_gradients(f)
    mr = _grad_magnitude(gxr, gyr)
    mf = _grad_magnitude(gxf, gyf)

    bsz = r.data.shape[0]
    # KL(real || fake) over per-sample pixel distributions
    p_raw = ag.add(mr, GL_EPS)
    q_raw = ag.add(mf, GL_EPS)
    p_sum = ag.tsum(ag.reshape(p_raw, (bsz, -1)), axis=1)
    q_sum = ag.tsum(ag.reshape(q_raw, (bsz, -1)), axis=1)
    p = ag.div(ag.reshape(p_raw, (bsz, -1)), ag.reshape(p_sum, (bsz, 1)))
    q = ag.div(ag.reshape(q_raw, (bsz, -1)), ag.reshape(q_sum, (bsz, 1)))
    kl = ag.tmean(ag.tsum(ag.mul(p, ag.sub(ag.log(p), ag.log(q))), axis=1))

    # direction mismatch where at least one map has gradient signal
    dot = ag.add(ag.mul(gxr, gxf), ag.mul(gyr, gyf))
    cos = ag.div(dot, ag.mul(mr, mf))
    mask = ((mr.data >= GL_EPS) | (mf.data >= GL_EPS)).astype(r.data.dtype)
    count = float(mask.sum())
    if count == 0.0:
        direction = ag.mul(ag.tsum(ag.mul(cos, 0.0)), 0.0)
    elif raw_cosine:
        direction = ag.mul(ag.tsum(ag.mul(cos, mask)), 1.0 / count)
    else:
        direction = ag.mul(ag.tsum(ag.mul(ag.sub(1.0, cos), mask)), 1.0 / count)
    return kl, direction


def l_gl(real_map, fake_map, raw_cosine: bool = False) -> Tensor:
    """Gradient loss: KL of magnitude distributions plus direction mismatch."""
    kl, direction = gl_terms(real_map, fake_map, raw_cosine)
    return ag.add(kl, direction)


# ---------------------------------------------------------------------------
# weighted total
# ---------------------------------------------------------------------------

def total_g_loss(adv: Tensor, terms: dict[str, Tensor],
                 weights: LossWeights) -> tuple[Tensor, LossReport]:
    """Weighted generator objective and a per-term report.

    terms may hold any subset of {mae, fl, fm, vgg, gl}; missing terms count
    as zero. All inputs must be finite scalars.
    """
    w = weights.as_dict()
    unknown = set(terms) - set(w)
    if unknown:
        raise LossError(f"unknown loss terms: {sorted(unknown)}")
    total = adv
    values = {}
    for name in ("mae", "fl", "fm", "vgg", "gl"):
        t = terms.get(name)
        if t is None:
            values[name] = 0.0
            continue
        if not np.isfinite(t.data).all():
            raise LossError(f"loss term {name} is not finite")
        values[name] = t.item()
        if w[name] != 0.0:
            total = ag.add(total, ag.mul(t, w[name]))
    report = LossReport(adv=adv.item(), terms=values, weights=weights, total=total.item())
    return total, report
