"""Minimal reverse-mode automatic differentiation over dense tensors.

Eager tape execution on numpy arrays: every operation returns a new Tensor
holding the forward value and a closure that routes the output gradient to
its parents. The op set is exactly the closure needed by the generator and
discriminator networks and the training losses: conv2d, instance/SPADE
normalization, nearest up/downsampling, dense, activations, elementwise
arithmetic, reductions, and replicate padding.

Every forward result is checked for NaN/Inf and a NumericalError names the
offending op. Training runs in float32; `precision("float64")` switches new
tensors to float64 for finite-difference verification.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class AutogradError(RuntimeError):
    pass


class ShapeError(ValueError):
    pass


class NumericalError(ArithmeticError):
    """Non-finite value produced by a forward op."""


_DEFAULT_DTYPE = np.float32


@contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """Dense array plus gradient accumulator and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward_fn",
                 "_backward_done")

    def __init__(self, data, requires_grad=False, dtype=None):
        dt = dtype or _DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dt)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward_fn = None
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype.type)

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def _as_array(x, dtype):
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=dtype)


_QUIET = {"divide": "ignore", "over": "ignore", "invalid": "ignore"}


def _make(data, op, parents, backward_fn):
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite values produced by op '{op}'")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents if isinstance(p, Tensor))
    out.op = op
    out._parents = tuple(p for p in parents if isinstance(p, Tensor))
    out._backward_fn = backward_fn if out.requires_grad else None
    out._backward_done = False
    return out


def _unbroadcast(g, shape):
    """Reduce a gradient back onto a broadcast operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    ad = _as_array(a, getattr(b, "dtype", _DEFAULT_DTYPE))
    bd = _as_array(b, getattr(a, "dtype", _DEFAULT_DTYPE))
    out = _make(ad + bd, "add", (a, b), None)

    def bw(o):
        if isinstance(a, Tensor) and a.requires_grad:
            a._accumulate(_unbroadcast(o.grad, a.data.shape))
        if isinstance(b, Tensor) and b.requires_grad:
            b._accumulate(_unbroadcast(o.grad, b.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def sub(a, b):
    ad = _as_array(a, getattr(b, "dtype", _DEFAULT_DTYPE))
    bd = _as_array(b, getattr(a, "dtype", _DEFAULT_DTYPE))
    out = _make(ad - bd, "sub", (a, b), None)

    def bw(o):
        if isinstance(a, Tensor) and a.requires_grad:
            a._accumulate(_unbroadcast(o.grad, a.data.shape))
        if isinstance(b, Tensor) and b.requires_grad:
            b._accumulate(_unbroadcast(-o.grad, b.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def mul(a, b):
    ad = _as_array(a, getattr(b, "dtype", _DEFAULT_DTYPE))
    bd = _as_array(b, getattr(a, "dtype", _DEFAULT_DTYPE))
    with np.errstate(**_QUIET):
        out = _make(ad * bd, "mul", (a, b), None)

    def bw(o):
        if isinstance(a, Tensor) and a.requires_grad:
            a._accumulate(_unbroadcast(o.grad * bd, a.data.shape))
        if isinstance(b, Tensor) and b.requires_grad:
            b._accumulate(_unbroadcast(o.grad * ad, b.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def div(a, b):
    ad = _as_array(a, getattr(b, "dtype", _DEFAULT_DTYPE))
    bd = _as_array(b, getattr(a, "dtype", _DEFAULT_DTYPE))
    with np.errstate(**_QUIET):
        out = _make(ad / bd, "div", (a, b), None)

    def bw(o):
        if isinstance(a, Tensor) and a.requires_grad:
            a._accumulate(_unbroadcast(o.grad / bd, a.data.shape))
        if isinstance(b, Tensor) and b.requires_grad:
            b._accumulate(_unbroadcast(-o.grad * ad / (bd * bd), b.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def _unary(a, fn, dfn, name):
    with np.errstate(**_QUIET):
        out = _make(fn(a.data), name, (a,), None)

    def bw(o):
        if a.requires_grad:
            a._accumulate(dfn(a.data, out.data) * o.grad)

    out._backward_fn = bw if out.requires_grad else None
    return out


def absolute(a):
    return _unary(a, np.abs, lambda x, y: np.sign(x), "abs")


def log(a):
    return _unary(a, np.log, lambda x, y: 1.0 / x, "log")


def exp(a):
    return _unary(a, np.exp, lambda x, y: y, "exp")


def sqrt(a):
    return _unary(a, np.sqrt, lambda x, y: 0.5 / y, "sqrt")


def relu(a):
    return _unary(a, lambda x: np.maximum(x, 0), lambda x, y: (x > 0).astype(x.dtype), "relu")


def lrelu(a, slope: float = 0.2):
    def fwd(x):
        return np.where(x > 0, x, slope * x)

    def dfn(x, y):
        return np.where(x > 0, 1.0, slope).astype(x.dtype)

    return _unary(a, fwd, dfn, "lrelu")


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    return _unary(a, _sigmoid_np, lambda x, y: y * (1.0 - y), "sigmoid")


def softplus(a):
    """log(1 + exp(x)) in the overflow-safe log-sum-exp form."""

    def fwd(x):
        return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))

    return _unary(a, fwd, lambda x, y: _sigmoid_np(x), "softplus")


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def tsum(a, axis=None):
    out = _make(np.asarray(a.data.sum(axis=axis)), "sum", (a,), None)

    def bw(o):
        if a.requires_grad:
            g = o.grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.data.shape).astype(a.data.dtype))

    out._backward_fn = bw if out.requires_grad else None
    return out


def tmean(a, axis=None):
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        n = a.data.shape[axis]
    out = _make(np.asarray(a.data.mean(axis=axis)), "mean", (a,), None)

    def bw(o):
        if a.requires_grad:
            g = o.grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            a._accumulate((np.broadcast_to(g, a.data.shape) / n).astype(a.data.dtype))

    out._backward_fn = bw if out.requires_grad else None
    return out


def reshape(a, shape):
    out = _make(a.data.reshape(shape), "reshape", (a,), None)

    def bw(o):
        if a.requires_grad:
            a._accumulate(o.grad.reshape(a.data.shape))

    out._backward_fn = bw if out.requires_grad else None
    return out


def concat_channels(tensors):
    """Concatenate (B, C, H, W) tensors along the channel axis."""
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    base = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape[0] != base[0] or t.data.shape[2:] != base[2:]:
            raise ShapeError("concat_channels requires matching batch and spatial dims")
    data = np.concatenate([t.data for t in tensors], axis=1)
    out = _make(data, "concat", tuple(tensors), None)

    def bw(o):
        c0 = 0
        for t in tensors:
            c1 = c0 + t.data.shape[1]
            if t.requires_grad:
                t._accumulate(o.grad[:, c0:c1])
            c0 = c1

    out._backward_fn = bw if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# neural-network layers
# ---------------------------------------------------------------------------

def dense(x, w, b=None):
    """Affine map: (B, F) @ (F, O) + (O,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"dense shape mismatch: {x.data.shape} @ {w.data.shape}")
    data = x.data @ w.data
    if b is not None:
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError("dense bias shape mismatch")
        data = data + b.data
    out = _make(data, "dense", (x, w, b) if b is not None else (x, w), None)

    def bw(o):
        if x.requires_grad:
            x._accumulate(o.grad @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ o.grad)
        if b is not None and b.requires_grad:
            b._accumulate(o.grad.sum(axis=0))

    out._backward_fn = bw if out.requires_grad else None
    return out


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0):
    """2-D cross-correlation of (B, Cin, H, W) with (Cout, Cin, kh, kw)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d expects rank-4 input and weight")
    bsz, cin, h, wid = x.data.shape
    cout, cin2, kh, kw = w.data.shape
    if cin != cin2:
        raise ShapeError(f"conv2d channel mismatch: input {cin}, weight {cin2}")
    s, p = int(stride), int(padding)
    ho = (h + 2 * p - kh) // s + 1
    wo = (wid + 2 * p - kw) // s + 1
    if ho < 1 or wo < 1 or h + 2 * p < kh or wid + 2 * p < kw:
        raise ShapeError("conv2d kernel does not fit the padded input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]  # B,Cin,Ho,Wo,kh,kw
    data = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3]))        # B,Ho,Wo,Cout
    data = np.ascontiguousarray(np.moveaxis(data, 3, 1))
    if b is not None:
        if b.data.shape != (cout,):
            raise ShapeError("conv2d bias shape mismatch")
        data += b.data[None, :, None, None]
    out = _make(data, "conv2d", (x, w, b) if b is not None else (x, w), None)

    def bw(o):
        g = o.grad
        if w.requires_grad:
            w._accumulate(np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = np.tensordot(g, w.data, axes=([1], [0]))  # B,Ho,Wo,Cin,kh,kw
            dxp = np.zeros((bsz, cin, h + 2 * p, wid + 2 * p), dtype=x.data.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += np.moveaxis(dcols[..., i, j], 3, 1)
            x._accumulate(dxp[:, :, p:p + h, p:p + wid] if p else dxp)

    out._backward_fn = bw if out.requires_grad else None
    return out


def instance_norm(x, eps: float = 1e-5):
    """Per-sample per-channel standardization over the spatial dims."""
    if x.data.ndim != 4:
        raise ShapeError("instance_norm expects a rank-4 tensor")
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    std = np.sqrt(var + eps)
    y = (x.data - mu) / std
    out = _make(y, "instance_norm", (x,), None)

    def bw(o):
        if x.requires_grad:
            g = o.grad
            gm = g.mean(axis=(2, 3), keepdims=True)
            gym = (g * y).mean(axis=(2, 3), keepdims=True)
            x._accumulate((g - gm - y * gym) / std)

    out._backward_fn = bw if out.requires_grad else None
    return out


def spade_norm(x, cond, params, eps: float = 1e-5):
    """Spatially adaptive normalization.

    Standardizes x per channel, then scales and shifts it with per-pixel
    gamma/beta maps produced from the condition raster: a shared 3x3 conv +
    ReLU feeds two 3x3 conv heads. cond must already match x's spatial size.
    params carries shared_w/shared_b/gamma_w/gamma_b/beta_w/beta_b tensors.
    """
    if x.data.shape[2:] != cond.data.shape[2:]:
        raise ShapeError(f"spade_norm spatial mismatch: {x.data.shape} vs {cond.data.shape}")
    hidden = relu(conv2d(cond, params["shared_w"], params["shared_b"], stride=1, padding=1))
    gamma = conv2d(hidden, params["gamma_w"], params["gamma_b"], stride=1, padding=1)
    beta = conv2d(hidden, params["beta_w"], params["beta_b"], stride=1, padding=1)
    return add(mul(gamma, instance_norm(x, eps)), beta)


def upsample_nearest_x2(x):
    """Replicate every pixel into a 2x2 block."""
    if x.data.ndim != 4:
        raise ShapeError("upsample expects a rank-4 tensor")
    data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    out = _make(data, "upsample_x2", (x,), None)

    def bw(o):
        if x.requires_grad:
            bsz, c, h2, w2 = o.grad.shape
            g = o.grad.reshape(bsz, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
            x._accumulate(g)

    out._backward_fn = bw if out.requires_grad else None
    return out


def downsample_nearest_x2(x):
    """Keep the top-left sample of every 2x2 block (even dims required)."""
    if x.data.ndim != 4:
        raise ShapeError("downsample expects a rank-4 tensor")
    if x.data.shape[2] % 2 or x.data.shape[3] % 2:
        raise ShapeError("downsample requires even spatial dims")
    out = _make(np.ascontiguousarray(x.data[:, :, ::2, ::2]), "downsample_x2", (x,), None)

    def bw(o):
        if x.requires_grad:
            g = np.zeros_like(x.data)
            g[:, :, ::2, ::2] = o.grad
            x._accumulate(g)

    out._backward_fn = bw if out.requires_grad else None
    return out


def pad_replicate(x, pad: int):
    """Edge-replicate padding of the two spatial dims."""
    if x.data.ndim != 4:
        raise ShapeError("pad_replicate expects a rank-4 tensor")
    p = int(pad)
    if p < 1:
        raise ShapeError("pad must be >= 1")
    data = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)), mode="edge")
    out = _make(data, "pad_replicate", (x,), None)

    def bw(o):
        if x.requires_grad:
            h, wid = x.data.shape[2], x.data.shape[3]
            g = o.grad
            rows = g[:, :, p:h + p, :].copy()
            rows[:, :, 0, :] += g[:, :, :p, :].sum(axis=2)
            rows[:, :, -1, :] += g[:, :, h + p:, :].sum(axis=2)
            cols = rows[:, :, :, p:wid + p].copy()
            cols[:, :, :, 0] += rows[:, :, :, :p].sum(axis=3)
            cols[:, :, :, -1] += rows[:, :, :, wid + p:].sum(axis=3)
            x._accumulate(cols)

    out._backward_fn = bw if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor):
    """Populate .grad on every reachable requires_grad tensor.

    loss must be a single-element tensor with an intact tape; running
    backward twice on the same loss is an error.
    """
    if loss.data.size != 1:
        raise AutogradError("backward requires a scalar loss")
    if not loss.requires_grad:
        raise AutogradError("backward on a detached graph: loss does not require grad")
    if loss._backward_done:
        raise AutogradError("backward already ran for this graph; rebuild the tape first")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for par in node._parents:
            if par.requires_grad and id(par) not in seen:
                stack.append((par, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node)
    loss._backward_done = True


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

def numeric_gradient(f, t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f() w.r.t. t.data, in place."""
    g = np.zeros(t.data.shape, dtype=np.float64)
    flat = t.data.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def gradcheck(build_loss, tensors, h: float = 1e-5) -> float:
    """Worst relative error between tape gradients and finite differences.

    build_loss() must rebuild the forward pass from the given tensors (their
    .data buffers are perturbed in place). Run inside precision("float64").
    """
    loss = build_loss()
    for t in tensors:
        t.zero_grad()
    backward(loss)
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(lambda: build_loss().item(), t, h=h)
        worst = max(worst, max_rel_error(analytic, numeric))
    return worst
