"""Command-line pipeline: dataset generation, training, synthesis,
evaluation, rendering, and the oracle release gate.

Exit codes: 0 success, 1 usage error, 2 data or config error, 3 numerical
failure. Every command echoes its fully resolved configuration so a run can
be reproduced from its log.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dataset as DS
from . import model as M
from . import trainer as TR
from .antenna import UpaConfig, rasterize_pattern
from .autograd import AutogradError, NumericalError
from .dataset import DatasetError
from .metrics import MetricsReport
from .propagation import RfMap
from .scene import GridSpec, load_scene, rasterize_semantic
from .trainer import TrainerError

# every domain error class plus json decoding subclasses ValueError;
# TrainerError is a RuntimeError and OSError covers file problems
_DATA_ERRORS = (ValueError, TrainerError, OSError, KeyError)

SEPARATOR_CELLS = 1


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _echo(label: str, cfg: dict):
    print(f"{label} config: " + json.dumps(cfg, sort_keys=True))


# ---------------------------------------------------------------------------
# colormaps (256-entry LUTs; rendering is invertible by exact LUT lookup)
# ---------------------------------------------------------------------------

def colormap_lut(name: str) -> np.ndarray:
    from matplotlib import colormaps
    if name not in ("viridis", "jet"):
        raise DatasetError(f"unsupported colormap {name!r}; use viridis or jet")
    cm = colormaps[name]
    return (np.asarray(cm(np.linspace(0.0, 1.0, 256)))[:, :3] * 255).round().astype(np.uint8)


def render_rgb(norm_map: np.ndarray, lut: np.ndarray, scale: int) -> np.ndarray:
    if scale < 1:
        raise DatasetError(f"scale must be >= 1, got {scale}")
    idx = np.clip(np.round(np.asarray(norm_map) * 255), 0, 255).astype(np.intp)
    rgb = lut[idx]
    rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    return rgb


def invert_rendered(rgb: np.ndarray, lut: np.ndarray, scale: int) -> np.ndarray:
    """Recover normalized values from a rendered image by LUT lookup.

    A few adjacent LUT entries quantize to the same 8-bit color; those map to
    the mean of their indices, keeping total error within 1/255.
    """
    sub = rgb[::scale, ::scale]
    indices: dict[tuple, list] = {}
    for i, c in enumerate(lut):
        indices.setdefault(tuple(c), []).append(i)
    table = {c: float(np.mean(ix)) for c, ix in indices.items()}
    out = np.zeros(sub.shape[:2])
    for i in range(sub.shape[0]):
        for j in range(sub.shape[1]):
            key = tuple(int(v) for v in sub[i, j])
            if key not in table:
                raise DatasetError("pixel color not in colormap; wrong colormap or edited image")
            out[i, j] = table[key] / 255.0
    return out


def _write_png(rgb: np.ndarray, path):
    from PIL import Image
    Image.fromarray(rgb.astype(np.uint8), "RGB").save(path)


def _read_png(path) -> np.ndarray:
    from PIL import Image
    return np.asarray(Image.open(path).convert("RGB"))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_gen_dataset(args) -> int:
    with open(args.config) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{args.config}:{e.lineno}:{e.colno}: {e.msg}") from e
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = DS.sweep_config_from_dict(raw)
    _echo("gen-dataset", cfg.to_dict())
    manifest = DS.run_sweep(cfg, args.out)
    print(f"samples: {len(manifest['samples'])}")
    print(f"manifest-hash: {DS.manifest_hash(manifest)}")
    return 0


def _train_config(args) -> TR.TrainConfig:
    base = {}
    if args.config:
        with open(args.config) as f:
            base = json.load(f)
    overrides = {
        "steps": args.steps, "batch_size": args.batch_size, "lr_g": args.lr_g,
        "lr_d": args.lr_d, "seed": args.seed, "eval_interval": args.eval_interval,
        "out_dir": args.out, "z_dim": args.z_dim, "base_channels": args.base_channels,
        "spade_hidden": args.spade_hidden, "focal_gamma": args.focal_gamma,
        "gl_raw_cosine": args.gl_raw_cosine,
    }
    for k, v in overrides.items():
        if v is not None:
            base[k] = v
    weights = base.get("weights", {})
    if not isinstance(weights, dict):
        raise TrainerError("weights must be an object of term -> value")
    for term in ("mae", "fl", "fm", "vgg", "gl"):
        v = getattr(args, f"lambda_{term}")
        if v is not None:
            weights[term] = v
    base["weights"] = weights
    return TR.train_config_from_dict(base)


def _cmd_train(args) -> int:
    cfg = _train_config(args)
    samples, _ = DS.load_dataset(args.data)
    train_split, test_split = DS.split_tasks(samples, args.task)
    TR.assert_disjoint(train_split, test_split)
    _echo("train", {**cfg.to_dict(), "task": args.task, "data": args.data,
                    "n_train": len(train_split), "n_test": len(test_split)})
    state = TR.train(cfg, train_split, resume=args.resume)
    print(f"trained to step {state.step}; checkpoints under {cfg.out_dir}")
    return 0


def _cmd_eval(args) -> int:
    samples, _ = DS.load_dataset(args.data)
    train_split, test_split = DS.split_tasks(samples, args.task)
    TR.assert_disjoint(train_split, test_split)
    _echo("eval", {"ckpt": args.ckpt, "data": args.data, "task": args.task,
                   "seed": args.seed, "eval_z_draws": args.eval_z_draws,
                   "baseline": args.baseline})
    baseline_map = TR.mean_training_map(train_split) if args.baseline else None
    result = TR.evaluate(args.ckpt, test_split, seed=args.seed,
                         z_draws=args.eval_z_draws, baseline_map=baseline_map)
    print(MetricsReport.header())
    print(result.report.row())
    if result.baseline is not None:
        print("mean-baseline\t" + result.baseline.row())
    ref = result.reference_full_scale
    print("reference-full-scale\t"
          f"mae={ref['mae']} rmse={ref['rmse']} psnr_db={ref['psnr_db']} "
          f"ms_ssim={ref['ms_ssim']} (ceiling, not a desk-scale target)")
    if args.out:
        TR.write_eval_report(result, args.out)
        print(f"report: {args.out}")
    return 0


def _cmd_synth(args) -> int:
    params = M.load_checkpoint(args.ckpt)
    gen_cfg = M.GeneratorConfig(**params.meta["generator"])
    res = gen_cfg.target_resolution
    catalog = tuple(f * 1e9 for f in args.catalog)
    k = gen_cfg.cond_channels - 4
    if len(catalog) != k:
        raise DatasetError(f"checkpoint expects a {k}-frequency catalog, got {len(catalog)}")
    scene = load_scene(args.scene)
    grid = GridSpec(nx=res, ny=res, cell_size=scene.width / res)
    rows, cols = (int(v) for v in args.upa.lower().split("x"))
    _echo("synth", {"ckpt": args.ckpt, "scene": args.scene, "freq_hz": args.freq,
                    "upa": [rows, cols], "seed": args.seed, "out": args.out})

    semantic = rasterize_semantic(scene, grid)
    pattern = rasterize_pattern(UpaConfig(rows=rows, cols=cols, carrier_freq=args.freq), grid)
    code = DS.encode_frequency(args.freq, catalog)
    cond = DS.assemble_condition(semantic, pattern, code)
    rng = np.random.default_rng(args.seed)
    z = rng.standard_normal((1, gen_cfg.z_dim)).astype(np.float32)
    out = M.generate(params, z, cond.stack()[None])
    norm = out.data[0, 0].astype(np.float64)
    rf = RfMap(rss=DS.denormalize_rss(norm, DS.DEFAULT_NORM_RANGE),
               norm_range=DS.DEFAULT_NORM_RANGE)
    DS.save_rf_map(rf, args.out)
    print(f"map: {args.out} (normalized range [{norm.min():.4f}, {norm.max():.4f}])")
    if args.png:
        lut = colormap_lut(args.colormap)
        _write_png(render_rgb(rf.normalized(), lut, args.scale), args.png)
        print(f"png: {args.png}")
    return 0


def _cmd_render(args) -> int:
    lut = colormap_lut(args.colormap)
    _echo("render", {"map": args.map, "compare": args.compare, "out": args.out,
                     "colormap": args.colormap, "scale": args.scale})
    if args.compare:
        real = DS.load_rf_map(args.compare[0]).normalized()
        fake = DS.load_rf_map(args.compare[1]).normalized()
        if real.shape != fake.shape:
            raise DatasetError(f"compare maps disagree: {real.shape} vs {fake.shape}")
        left = render_rgb(real, lut, args.scale)
        right = render_rgb(fake, lut, args.scale)
        sep = np.zeros((left.shape[0], SEPARATOR_CELLS * args.scale, 3), dtype=np.uint8)
        rgb = np.concatenate([left, sep, right], axis=1)
    else:
        if not args.map:
            raise DatasetError("render needs --map or --compare")
        rgb = render_rgb(DS.load_rf_map(args.map).normalized(), lut, args.scale)
    _write_png(rgb, args.out)
    print(f"png: {args.out} ({rgb.shape[1]}x{rgb.shape[0]})")
    return 0


def _cmd_oracle_check(_args) -> int:
    from . import oracles
    _echo("oracle-check", {})
    results = oracles.run_all()
    for r in results:
        print(r.line())
    if all(r.passed for r in results):
        print("oracle-check: all suites passed")
        return 0
    print("oracle-check: FAILURES above")
    return 3


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    p = _Parser(prog="radiance", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="trace RF maps for a sweep config")
    g.add_argument("--config", required=True, help="sweep config JSON")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=_cmd_gen_dataset)

    t = sub.add_parser("train", help="train the conditional GAN")
    t.add_argument("--data", required=True)
    t.add_argument("--task", type=int, choices=(1, 2), required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", default=None, help="training config JSON")
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--lr-g", type=float, default=None)
    t.add_argument("--lr-d", type=float, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--eval-interval", type=int, default=None)
    t.add_argument("--z-dim", type=int, default=None)
    t.add_argument("--base-channels", type=int, default=None)
    t.add_argument("--spade-hidden", type=int, default=None)
    t.add_argument("--focal-gamma", type=float, default=None)
    t.add_argument("--gl-raw-cosine", action="store_true", default=None,
                   help="add raw cosine similarity in the gradient loss")
    for term in ("mae", "fl", "fm", "vgg", "gl"):
        t.add_argument(f"--lambda-{term}", type=float, default=None, dest=f"lambda_{term}")
    t.add_argument("--resume", default=None, help="state file to continue from")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a task's test split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--task", type=int, choices=(1, 2), required=True)
    e.add_argument("--out", default=None, help="JSON report path")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--eval-z-draws", type=int, default=1)
    e.add_argument("--baseline", action=argparse.BooleanOptionalAction, default=True,
                   help="also score the training-mean predictor")
    e.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("synth", help="synthesize a map for a scene file")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--scene", required=True)
    s.add_argument("--freq", type=float, required=True, help="carrier frequency in Hz")
    s.add_argument("--upa", required=True, help="array size, e.g. 4x4")
    s.add_argument("--out", required=True, help="output map file")
    s.add_argument("--png", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", type=int, default=8)
    s.add_argument("--colormap", choices=("viridis", "jet"), default="viridis")
    s.add_argument("--catalog", type=float, nargs="+", default=[5.0, 28.0, 70.0],
                   help="frequency catalog in GHz (training-time order)")
    s.set_defaults(fn=_cmd_synth)

    r = sub.add_parser("render", help="render a map file to PNG")
    r.add_argument("--map", default=None)
    r.add_argument("--out", required=True)
    r.add_argument("--colormap", choices=("viridis", "jet"), default="viridis")
    r.add_argument("--scale", type=int, default=8)
    r.add_argument("--compare", nargs=2, metavar=("REAL", "FAKE"), default=None)
    r.set_defaults(fn=_cmd_render)

    o = sub.add_parser("oracle-check", help="run the independent verification suites")
    o.set_defaults(fn=_cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (NumericalError, AutogradError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except _DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
