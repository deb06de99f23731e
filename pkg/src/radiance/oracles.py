"""Independent verification suites for the release gate.

Each suite recomputes a result along a second route that shares no code
with the implementation it checks: closed-form free-space loss, a recursive
brute-force image tree with scalar visibility tests, central finite
differences for every autograd op and loss term, per-window SSIM without
convolution shortcuts, and a two-pass gradient-loss recomputation with its
own Sobel kernel. `run_all` powers the oracle-check command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import losses as L
from . import metrics as MET
from . import model as M
from .propagation import Path, enumerate_paths, path_amplitude, received_power
from .scene import Scene, build_room, room_layout

TOL_FRIIS_DB = 1e-6
TOL_PATH_LEN = 1e-9
TOL_LAYER = 1e-4
TOL_E2E = 1e-3
TOL_METRIC = 1e-6

_C = 299792458.0


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_err: float
    tol: float
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: max error {self.max_err:.3e} (tol {self.tol:.1e}) {self.detail}"


# ---------------------------------------------------------------------------
# Friis free-space suite
# ---------------------------------------------------------------------------

def friis_suite(n_random: int = 100, seed: int = 20240601) -> SuiteResult:
    """LOS received power against the closed-form free-space loss."""

    def expected_dbm(d, f, ptx):
        return ptx - 20.0 * math.log10(4.0 * math.pi * d * f / _C)

    def traced_dbm(d, f, ptx):
        path = Path(vertices=[(0.0, 0.0, 0.0), (d, 0.0, 0.0)], bounces=[], total_length=d)
        return received_power([path_amplitude(path, f, tx_antenna=None)], ptx)

    errs = [abs(traced_dbm(1.0, 28e9, 0.0) - expected_dbm(1.0, 28e9, 0.0))]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        d = float(rng.uniform(0.1, 100.0))
        f = float(rng.uniform(1e9, 100e9))
        errs.append(abs(traced_dbm(d, f, 0.0) - expected_dbm(d, f, 0.0)))
    worst = max(errs)
    anchor = -20.0 * math.log10(4.0 * math.pi * 28e9 / _C)
    return SuiteResult("friis", worst <= TOL_FRIIS_DB, worst, TOL_FRIIS_DB,
                       f"(1 m / 28 GHz anchor {anchor:.2f} dBm)")


# ---------------------------------------------------------------------------
# image-tree brute force
# ---------------------------------------------------------------------------

def _mirror_across_wall(p, w0, w1):
    # reflect the xy part of p across the infinite line through w0-w1
    px, py, pz = p
    dx, dy = w1[0] - w0[0], w1[1] - w0[1]
    nn = dx * dx + dy * dy
    t = ((px - w0[0]) * dx + (py - w0[1]) * dy) / nn
    fx, fy = w0[0] + t * dx, w0[1] + t * dy
    return (2 * fx - px, 2 * fy - py, pz)


def _seg_cross_wall(p, q, w0, w1, height):
    # does the open segment p->q pass through the wall rectangle's interior?
    d1x, d1y = q[0] - p[0], q[1] - p[1]
    d2x, d2y = w1[0] - w0[0], w1[1] - w0[1]
    denom = d1x * d2y - d1y * d2x
    if abs(denom) < 1e-15:
        return False
    rx, ry = w0[0] - p[0], w0[1] - p[1]
    t = (rx * d2y - ry * d2x) / denom
    u = (rx * d1y - ry * d1x) / denom
    if not (1e-9 < t < 1 - 1e-9):
        return False
    if not (-1e-9 <= u <= 1 + 1e-9):
        return False
    z = p[2] + t * (q[2] - p[2])
    return 1e-9 < z < height - 1e-9


def _poly_contains(x, y, poly):
    inside = False
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        dx, dy = x1 - x0, y1 - y0
        cross = dx * (y - y0) - dy * (x - x0)
        if abs(cross) < 1e-12 * max(1.0, abs(dx) + abs(dy)) and \
           min(x0, x1) - 1e-12 <= x <= max(x0, x1) + 1e-12 and \
           min(y0, y1) - 1e-12 <= y <= max(y0, y1) + 1e-12:
            return True
        if (y0 > y) != (y1 > y) and x < x0 + (y - y0) * dx / dy:
            inside = not inside
    return inside


def brute_force_paths(scene: Scene, tx, rx, max_reflections: int):
    """Recursive image-tree enumeration; returns {surface key: length}.

    Surfaces are 'wall<i>' and 'floor', matching Path.surface_key().
    """
    walls = [(w.p0, w.p1, w.height) for w in scene.walls]
    surface_ids = [f"wall{i}" for i in range(len(walls))] + ["floor"]

    def mirror(p, sid):
        if sid == "floor":
            return (p[0], p[1], -p[2])
        w0, w1, _ = walls[int(sid[4:])]
        return _mirror_across_wall(p, w0, w1)

    def blocked(p, q):
        return any(_seg_cross_wall(p, q, w0, w1, h) for w0, w1, h in walls)

    def on_surface(p, sid):
        if sid == "floor":
            return _poly_contains(p[0], p[1], scene.floor_polygon)
        w0, w1, h = walls[int(sid[4:])]
        dx, dy = w1[0] - w0[0], w1[1] - w0[1]
        nn = math.hypot(dx, dy)
        u = ((p[0] - w0[0]) * dx + (p[1] - w0[1]) * dy) / (nn * nn)
        dist = abs((p[0] - w0[0]) * dy - (p[1] - w0[1]) * dx) / nn
        return dist < 1e-6 and -1e-9 <= u <= 1 + 1e-9 and -1e-9 <= p[2] <= h + 1e-9

    def plane_cross(q, img, sid):
        # intersection of segment q->img with the surface plane, or None
        if sid == "floor":
            zq, zi = q[2], img[2]
        else:
            w0, w1, _ = walls[int(sid[4:])]
            dx, dy = w1[0] - w0[0], w1[1] - w0[1]
            nrm = math.hypot(dx, dy)
            nx, ny = dy / nrm, -dx / nrm
            zq = (q[0] - w0[0]) * nx + (q[1] - w0[1]) * ny
            zi = (img[0] - w0[0]) * nx + (img[1] - w0[1]) * ny
        denom = zq - zi
        if abs(denom) < 1e-15:
            return None
        t = zq / denom
        if not (1e-9 < t < 1 - 1e-9):
            return None
        return tuple(q[i] + t * (img[i] - q[i]) for i in range(3))

    results = {}

    def try_sequence(seq):
        images = [tuple(tx)]
        for sid in seq:
            images.append(mirror(images[-1], sid))
        pts = []
        q = tuple(rx)
        for k in range(len(seq) - 1, -1, -1):
            p = plane_cross(q, images[k + 1], seq[k])
            if p is None or not on_surface(p, seq[k]):
                return
            pts.append(p)
            q = p
        pts.reverse()
        chain = [tuple(tx)] + pts + [tuple(rx)]
        for i in range(len(chain) - 1):
            if blocked(chain[i], chain[i + 1]):
                return
        length = sum(math.dist(chain[i], chain[i + 1]) for i in range(len(chain) - 1))
        results[tuple(seq)] = length

    def recurse(seq, depth):
        try_sequence(seq)
        if depth == max_reflections:
            return
        for sid in surface_ids:
            if seq and seq[-1] == sid:
                continue
            recurse(seq + [sid], depth + 1)

    recurse([], 0)
    return results


def image_tree_suite(n_pairs: int = 50, seed: int = 777) -> SuiteResult:
    """enumerate_paths against the brute-force tree on the square room."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    mismatches = 0
    total_paths = 0
    for _ in range(n_pairs):
        bx, by = rng.uniform(0.5, 9.5, size=2)
        scene = build_room(room_layout("room1", bs=(float(bx), float(by))))
        rxy = rng.uniform(0.3, 9.7, size=2)
        tx = scene.bs_position
        rx = (float(rxy[0]), float(rxy[1]), scene.rx_height)
        got = {p.surface_key(): p.total_length
               for p in enumerate_paths(scene, tx, rx, max_reflections=2)}
        want = brute_force_paths(scene, tx, rx, max_reflections=2)
        total_paths += len(want)
        if set(got) != set(want):
            mismatches += 1
            worst = float("inf")
            continue
        for key, length in want.items():
            worst = max(worst, abs(got[key] - length))
    detail = f"({n_pairs} pairs, {total_paths} oracle paths, {mismatches} set mismatches)"
    return SuiteResult("image-tree", mismatches == 0 and worst <= TOL_PATH_LEN,
                       worst, TOL_PATH_LEN, detail)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def _offset_random(rng, shape, lo=0.25, hi=1.0):
    # magnitudes bounded away from zero so kinked ops (relu, abs) stay off
    # their corners during +-h probing
    mag = rng.uniform(lo, hi, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def _fd_case(name, build, tensors, tol=TOL_LAYER):
    err = ag.gradcheck(build, tensors)
    return name, err, tol


def finite_difference_suite(seed: int = 4242) -> SuiteResult:
    """Every autograd op and loss term against central differences."""
    cases = []
    with ag.precision("float64"):
        rng = np.random.default_rng(seed)

        x = ag.Tensor(_offset_random(rng, (2, 3, 6, 6)), requires_grad=True)
        w = ag.Tensor(rng.normal(0, 0.5, (4, 3, 3, 3)), requires_grad=True)
        b = ag.Tensor(rng.normal(0, 0.5, 4), requires_grad=True)
        cases.append(_fd_case("conv2d_s1p0",
                              lambda: ag.tsum(ag.conv2d(x, w, b, 1, 0)), [x, w, b]))
        cases.append(_fd_case("conv2d_s2p1",
                              lambda: ag.tsum(ag.mul(ag.conv2d(x, w, b, 2, 1), 0.5)), [x, w, b]))

        xd = ag.Tensor(rng.normal(0, 1, (3, 5)), requires_grad=True)
        wd = ag.Tensor(rng.normal(0, 1, (5, 4)), requires_grad=True)
        bd = ag.Tensor(rng.normal(0, 1, 4), requires_grad=True)
        cases.append(_fd_case("dense", lambda: ag.tsum(ag.dense(xd, wd, bd)), [xd, wd, bd]))

        xin = ag.Tensor(rng.normal(0, 1, (2, 3, 5, 5)), requires_grad=True)
        cases.append(_fd_case("instance_norm",
                              lambda: ag.tsum(ag.mul(ag.instance_norm(xin),
                                                     rng2_const(xin.shape))), [xin]))

        xs = ag.Tensor(rng.normal(0, 1, (2, 3, 4, 4)), requires_grad=True)
        cond = ag.Tensor(rng.normal(0, 1, (2, 5, 4, 4)), requires_grad=True)
        sp = {
            "shared_w": ag.Tensor(rng.normal(0, 0.3, (4, 5, 3, 3)), requires_grad=True),
            "shared_b": ag.Tensor(rng.normal(0, 0.3, 4), requires_grad=True),
            "gamma_w": ag.Tensor(rng.normal(0, 0.3, (3, 4, 3, 3)), requires_grad=True),
            "gamma_b": ag.Tensor(rng.normal(0, 0.3, 3), requires_grad=True),
            "beta_w": ag.Tensor(rng.normal(0, 0.3, (3, 4, 3, 3)), requires_grad=True),
            "beta_b": ag.Tensor(rng.normal(0, 0.3, 3), requires_grad=True),
        }
        cases.append(_fd_case(
            "spade_norm",
            lambda: ag.tsum(ag.mul(ag.spade_norm(xs, cond, sp), rng2_const(xs.shape))),
            [xs, cond] + list(sp.values())))

        xu = ag.Tensor(rng.normal(0, 1, (2, 2, 3, 3)), requires_grad=True)
        cases.append(_fd_case("upsample_nearest_x2",
                              lambda: ag.tsum(ag.mul(ag.upsample_nearest_x2(xu),
                                                     rng2_const((2, 2, 6, 6)))), [xu]))
        xdn = ag.Tensor(rng.normal(0, 1, (2, 2, 4, 4)), requires_grad=True)
        cases.append(_fd_case("downsample_nearest_x2",
                              lambda: ag.tsum(ag.mul(ag.downsample_nearest_x2(xdn),
                                                     rng2_const((2, 2, 2, 2)))), [xdn]))
        xp = ag.Tensor(rng.normal(0, 1, (1, 2, 4, 4)), requires_grad=True)
        cases.append(_fd_case("pad_replicate",
                              lambda: ag.tsum(ag.mul(ag.pad_replicate(xp, 1),
                                                     rng2_const((1, 2, 6, 6)))), [xp]))

        for opname, fn in (("relu", ag.relu), ("lrelu", ag.lrelu), ("abs", ag.absolute)):
            xa = ag.Tensor(_offset_random(rng, (2, 1, 4, 4)), requires_grad=True)
            cases.append(_fd_case(opname, make_sum(fn, xa), [xa]))
        for opname, fn in (("sigmoid", ag.sigmoid), ("softplus", ag.softplus),
                           ("exp", ag.exp)):
            xa = ag.Tensor(rng.normal(0, 2, (2, 1, 4, 4)), requires_grad=True)
            cases.append(_fd_case(opname, make_sum(fn, xa), [xa]))
        for opname, fn in (("log", ag.log), ("sqrt", ag.sqrt)):
            xa = ag.Tensor(rng.uniform(0.3, 3.0, (2, 1, 4, 4)), requires_grad=True)
            cases.append(_fd_case(opname, make_sum(fn, xa), [xa]))

        ea = ag.Tensor(rng.normal(0, 1, (2, 3, 4, 4)), requires_grad=True)
        eb = ag.Tensor(_offset_random(rng, (2, 3, 4, 4), 0.5, 2.0), requires_grad=True)
        cases.append(_fd_case("add", lambda: ag.tsum(ag.mul(ag.add(ea, eb), 0.3)), [ea, eb]))
        cases.append(_fd_case("sub", lambda: ag.tsum(ag.mul(ag.sub(ea, eb), 0.3)), [ea, eb]))
        cases.append(_fd_case("mul", lambda: ag.tsum(ag.mul(ag.mul(ea, eb), 0.3)), [ea, eb]))
        cases.append(_fd_case("div", lambda: ag.tsum(ag.div(ea, eb)), [ea, eb]))
        cases.append(_fd_case("mean", lambda: ag.tmean(ag.mul(ea, ea)), [ea]))
        cases.append(_fd_case("sum_axis", lambda: ag.tsum(ag.mul(
            ag.tsum(ag.mul(ea, ea), axis=1), 0.5)), [ea]))
        cases.append(_fd_case("concat", lambda: ag.tsum(ag.mul(
            ag.concat_channels([ea, eb]), rng2_const((2, 6, 4, 4)))), [ea, eb]))
        cases.append(_fd_case("reshape", lambda: ag.tsum(ag.mul(
            ag.reshape(ea, (2, 48)), rng2_const((2, 48)))), [ea]))

        # loss terms on random map pairs (targets constant, candidates free)
        tgt = np.clip(rng.uniform(0.1, 0.9, (2, 1, 8, 8)), 0, 1)
        cand = ag.Tensor(np.clip(tgt + _offset_random(rng, tgt.shape, 0.05, 0.2), 0.01, 0.99),
                         requires_grad=True)
        cases.append(_fd_case("l_mae", lambda: L.l_mae(tgt, cand), [cand]))
        cases.append(_fd_case("l_focal", lambda: L.l_focal(tgt, cand, gamma=2.0), [cand]))
        cases.append(_fd_case("l_gl", lambda: L.l_gl(tgt, cand), [cand]))
        extractor = L.make_feature_extractor(5, in_channels=1)
        cases.append(_fd_case("l_perceptual",
                              lambda: L.l_perceptual(tgt, cand, extractor), [cand]))
        fr = [np.asarray(rng.normal(0, 1, (2, 3, 4, 4)))]
        ff = [ag.Tensor(rng.normal(0, 1, (2, 3, 4, 4)), requires_grad=True)]
        cases.append(_fd_case("l_fm", lambda: L.l_fm(fr, ff), list(ff)))
        logits_r = ag.Tensor(rng.normal(0, 1, (2, 1, 5, 5)), requires_grad=True)
        logits_f = ag.Tensor(rng.normal(0, 1, (2, 1, 5, 5)), requires_grad=True)
        cases.append(_fd_case("adv_d_loss",
                              lambda: L.adv_d_loss(logits_r, logits_f), [logits_r, logits_f]))
        cases.append(_fd_case("adv_g_loss", lambda: L.adv_g_loss(logits_f), [logits_f]))

    worst_name, worst, _ = max(cases, key=lambda c: c[1] / c[2])
    passed = all(err <= tol for _, err, tol in cases)
    return SuiteResult("finite-differences", passed, worst, TOL_LAYER,
                       f"({len(cases)} cases, worst: {worst_name})")


def rng2_const(shape):
    # fixed pseudo-random projection so sums do not hide sign errors
    r = np.random.default_rng(99)
    return r.normal(0, 1, shape)


def make_sum(fn, xa):
    return lambda: ag.tsum(ag.mul(fn(xa), rng2_const(xa.shape)))


def generator_fd_suite(seed: int = 31337, n_weights: int = 10) -> SuiteResult:
    """Spot-check end-to-end gradients through a tiny generator."""
    with ag.precision("float64"):
        rng = np.random.default_rng(seed)
        gen_cfg = M.GeneratorConfig(z_dim=4, base_channels=4, target_resolution=16,
                                    output_channels=1, cond_channels=5, spade_hidden=4)
        disc_cfg = M.DiscriminatorConfig(in_channels=6, base_channels=4, input_resolution=16)
        params = M.build_generator(gen_cfg, 11)
        params.merge(M.build_discriminator(disc_cfg, 12))
        z = np.asarray(rng.standard_normal((1, 4)))
        cond = np.asarray(rng.uniform(0, 1, (1, 5, 16, 16)))
        target = np.asarray(rng.uniform(0.1, 0.9, (1, 1, 16, 16)))
        extractor = L.make_feature_extractor(3, in_channels=1)

        def build_total():
            fake = M.generate(params, z, cond)
            logits, feats = M.discriminate(params, fake, cond)
            _, real_feats = M.discriminate(params, target, cond)
            real_feats = [ag.Tensor(f.data.copy()) for f in real_feats]
            terms = {
                "mae": L.l_mae(target, fake),
                "fl": L.l_focal(target, fake),
                "fm": L.l_fm(real_feats, feats),
                "vgg": L.l_perceptual(target, fake, extractor),
                "gl": L.l_gl(target, fake),
            }
            total, _ = L.total_g_loss(L.adv_g_loss(logits), terms,
                                      L.LossWeights(mae=10, fl=1, fm=10, vgg=1, gl=1))
            return total

        gnames = [n for n, _ in params.named_subset("G/")]
        picked = [gnames[i] for i in rng.choice(len(gnames), size=n_weights, replace=True)]

        loss = build_total()
        for _, t in params.named_subset("G/"):
            t.zero_grad()
        ag.backward(loss)

        worst = 0.0
        for name in picked:
            t = params[name]
            flat_idx = int(rng.integers(t.data.size))
            analytic = (t.grad.ravel()[flat_idx] if t.grad is not None else 0.0)
            h = 1e-5
            old = t.data.ravel()[flat_idx]
            t.data.ravel()[flat_idx] = old + h
            fp = build_total().item()
            t.data.ravel()[flat_idx] = old - h
            fm = build_total().item()
            t.data.ravel()[flat_idx] = old
            numeric = (fp - fm) / (2 * h)
            worst = max(worst, ag.max_rel_error(np.asarray(analytic), np.asarray(numeric)))
    return SuiteResult("generator-end-to-end", worst <= TOL_E2E, worst, TOL_E2E,
                       f"({n_weights} weights spot-checked)")


# ---------------------------------------------------------------------------
# metric oracles
# ---------------------------------------------------------------------------

def sliding_window_ms_ssim(x, y, peak: float = 1.0) -> float:
    """MS-SSIM recomputed per window with explicit loops."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    size, sigma = 11, 1.5
    c = (size - 1) / 2.0
    g1 = np.exp(-((np.arange(size) - c) ** 2) / (2 * sigma * sigma))
    win = np.outer(g1, g1)
    win /= win.sum()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    def scale_stats(a, b):
        h, w = a.shape
        lum, cs = [], []
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                pa = a[i:i + size, j:j + size]
                pb = b[i:i + size, j:j + size]
                mua = float((win * pa).sum())
                mub = float((win * pb).sum())
                saa = float((win * pa * pa).sum()) - mua * mua
                sbb = float((win * pb * pb).sum()) - mub * mub
                sab = float((win * pa * pb).sum()) - mua * mub
                lv = (2 * mua * mub + c1) / (mua * mua + mub * mub + c1)
                cv = (2 * sab + c2) / (saa + sbb + c2)
                lum.append(lv * cv)
                cs.append(cv)
        return float(np.mean(lum)), float(np.mean(cs))

    def pool(a):
        h, w = a.shape
        a = a[: h - h % 2, : w - w % 2]
        return 0.25 * (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2])

    exps = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]
    n_scales = 0
    h, w = x.shape
    while n_scales < 5 and min(h, w) >= size:
        n_scales += 1
        h, w = h // 2, w // 2
    ws = np.array(exps[:n_scales])
    ws /= ws.sum()
    out = 1.0
    ca, cb = x, y
    for j in range(n_scales):
        full, cs = scale_stats(ca, cb)
        if j == n_scales - 1:
            out *= math.copysign(abs(full) ** ws[j], full)
        else:
            out *= max(cs, 0.0) ** ws[j]
            ca, cb = pool(ca), pool(cb)
    return float(np.clip(out, -1.0, 1.0))


def metric_suite(seed: int = 2718, n_pairs: int = 10) -> SuiteResult:
    rng = np.random.default_rng(seed)
    errs = []
    # PSNR spot value: MSE 0.01 against peak 1 is exactly 20 dB
    errs.append(abs(MET.psnr(np.zeros((16, 16)), np.full((16, 16), 0.1)) - 20.0))
    ident = rng.uniform(0, 1, (32, 32))
    errs.append(abs(MET.ms_ssim(ident, ident) - 1.0))
    for _ in range(n_pairs):
        a = rng.uniform(0, 1, (32, 32))
        b = np.clip(a + rng.normal(0, 0.15, (32, 32)), 0, 1)
        errs.append(abs(MET.ms_ssim(a, b) - sliding_window_ms_ssim(a, b)))
    order_ok = True
    for _ in range(100):
        u = rng.uniform(0, 1, (8, 8))
        v = rng.uniform(0, 1, (8, 8))
        order_ok = order_ok and MET.rmse(u, v) >= MET.mae(u, v)
    worst = max(errs)
    return SuiteResult("metrics", worst <= TOL_METRIC and order_ok,
                       worst, TOL_METRIC, f"({n_pairs} MS-SSIM oracle pairs)")


# ---------------------------------------------------------------------------
# gradient-loss oracle
# ---------------------------------------------------------------------------

def _oracle_sobel(img):
    # own kernel constants and correlation loop, replicate padding
    kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
    h, w = img.shape
    padded = np.pad(img, 1, mode="edge")
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            win = padded[i:i + 3, j:j + 3]
            gx[i, j] = sum(kx[a][b] * win[a, b] for a in range(3) for b in range(3))
            gy[i, j] = sum(kx[b][a] * win[a, b] for a in range(3) for b in range(3))
    return gx, gy


def oracle_gradient_loss(real, fake, eps: float = 1e-8) -> float:
    """Two-pass recomputation of the gradient loss for 2-D maps."""
    gxr, gyr = _oracle_sobel(np.asarray(real, dtype=np.float64))
    gxf, gyf = _oracle_sobel(np.asarray(fake, dtype=np.float64))
    mr = np.sqrt(gxr ** 2 + gyr ** 2 + 1e-24)
    mf = np.sqrt(gxf ** 2 + gyf ** 2 + 1e-24)
    p = (mr + eps) / (mr + eps).sum()
    q = (mf + eps) / (mf + eps).sum()
    kl = float((p * (np.log(p) - np.log(q))).sum())
    mask = (mr >= eps) | (mf >= eps)
    cos = (gxr * gxf + gyr * gyf) / (mr * mf)
    direction = float((1.0 - cos[mask]).mean()) if mask.any() else 0.0
    return kl + direction


def gradient_loss_suite(seed: int = 1618, n_pairs: int = 5) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    with ag.precision("float64"):
        for _ in range(n_pairs):
            a = rng.uniform(0, 1, (12, 12))
            b = np.clip(a + rng.normal(0, 0.1, (12, 12)), 0, 1)
            mine = L.l_gl(a[None, None], b[None, None]).item()
            worst = max(worst, abs(mine - oracle_gradient_loss(a, b)))
        # hand value: unit horizontal ramp has interior gx = 8
        ramp = np.tile(np.arange(12, dtype=np.float64), (12, 1))
        gx, _ = L.sobel_gradients(ramp[None, None])
        worst = max(worst, float(np.abs(gx.data[0, 0, 1:-1, 1:-1] - 8.0).max()))
    return SuiteResult("gradient-loss", worst <= TOL_METRIC, worst, TOL_METRIC,
                       f"({n_pairs} recomputed pairs + ramp anchor)")


def run_all() -> list[SuiteResult]:
    return [
        friis_suite(),
        image_tree_suite(),
        finite_difference_suite(),
        generator_fd_suite(),
        metric_suite(),
        gradient_loss_suite(),
    ]
