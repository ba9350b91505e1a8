"""Command-line front end.

Subcommands: train, denoise, eval, noise, scan.  Exit codes: 0 success,
2 usage error, 3 data error (bad files, shapes, config), 4 numerical
failure (divergence, non-finite values).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import scan
from .hsio import (DataError, export_false_color_png, format_config, load_checkpoint,
                   load_cube, parse_config_text, save_checkpoint, store_cube)
from .metrics import evaluate_pair
from .model import ModelConfig, denoise_cube
from .noise import NoiseSpec, degrade, synth_clean_cube
from .tensor import NonFiniteError
from .train import TrainConfig, TrainingDiverged, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


# -- config schema -------------------------------------------------------------

_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(s):
    try:
        return _BOOL[s.lower()]
    except KeyError:
        raise DataError(f"expected a boolean, got {s!r}") from None


def _parse_ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def noise_spec_from_config(kv: dict, used: set) -> NoiseSpec:
    spec = NoiseSpec.disabled()
    mapping = {
        "noise.sigma_max": ("sigma_max", float),
        "noise.gaussian": ("gaussian", _parse_bool),
        "noise.impulse": ("impulse", _parse_bool),
        "noise.stripes": ("stripes", _parse_bool),
        "noise.deadlines": ("deadlines", _parse_bool),
        "noise.seed": ("seed", int),
    }
    for key, (attr, conv) in mapping.items():
        if key in kv:
            used.add(key)
            setattr(spec, attr, conv(kv[key]))
    if spec.sigma_max > 0:
        spec.gaussian = _parse_bool(kv["noise.gaussian"]) if "noise.gaussian" in kv else True
    return spec


def noise_spec_to_config(spec: NoiseSpec) -> str:
    return format_config({
        "noise.sigma_max": spec.sigma_max,
        "noise.gaussian": str(spec.gaussian).lower(),
        "noise.impulse": str(spec.impulse).lower(),
        "noise.stripes": str(spec.stripes).lower(),
        "noise.deadlines": str(spec.deadlines).lower(),
        "noise.seed": spec.seed,
    })


def train_config_from_text(text: str):
    kv = parse_config_text(text)
    used = set()

    def take(key, conv, default):
        if key in kv:
            used.add(key)
            return conv(kv[key])
        return default

    model = ModelConfig(
        base_channels=take("model.base_channels", int, 4),
        res_blocks=take("model.res_blocks", int, 2),
        state_dim=take("model.state_dim", int, 4),
        bidirectional=take("model.bidirectional", _parse_bool, True),
    )
    scan_mode = take("model.scan", str, "sscs").lower()
    if scan_mode == "sweep":
        model = replace(model, scan_schemes=("SWEEP",) * 6)
    elif scan_mode != "sscs":
        raise DataError(f"model.scan must be 'sscs' or 'sweep', got {scan_mode!r}")

    noise_spec = noise_spec_from_config(kv, used)

    patch = (take("train.patch_bands", int, 8),
             take("train.patch_rows", int, 16),
             take("train.patch_cols", int, 16))
    try:
        cfg = TrainConfig(
            model=model,
            noise=noise_spec,
            lr=take("train.lr", float, 3e-4),
            milestones=take("train.milestones", _parse_ints, (20, 35)),
            lr_factor=take("train.lr_factor", float, 0.5),
            epochs=take("train.epochs", int, 5),
            steps_per_epoch=take("train.steps_per_epoch", int, 50),
            batch_size=take("train.batch_size", int, 4),
            patch=patch,
            seed=take("train.seed", int, 0),
            grad_clip=take("train.grad_clip", float, 5.0),
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    data = {
        "cubes": take("data.cubes", int, 4),
        "bands": take("data.bands", int, patch[0]),
        "rows": take("data.rows", int, 2 * patch[1]),
        "cols": take("data.cols", int, 2 * patch[2]),
        "rank": take("data.rank", int, 3),
    }
    unknown = sorted(set(kv) - used)
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(unknown)}")
    return cfg, data


# -- subcommands ---------------------------------------------------------------


def _cmd_train(args):
    with open(args.config) as fh:
        cfg, data = train_config_from_text(fh.read())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    cubes = [synth_clean_cube(data["bands"], data["rows"], data["cols"], data["rank"],
                              seed=cfg.seed * 1000 + i) for i in range(data["cubes"])]
    val_clean = synth_clean_cube(data["bands"], data["rows"], data["cols"], data["rank"],
                                 seed=cfg.seed * 1000 + 999)
    val_noisy, _ = degrade(val_clean, cfg.noise, seed=cfg.seed + 999)
    mw, log = train(cfg, cubes, val_pair=(val_clean, val_noisy))
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    save_checkpoint(os.path.join(out, "weights.ssuw"), mw)
    with open(os.path.join(out, "loss.csv"), "w") as fh:
        fh.write(log.loss_csv())
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(log.summary())
    print(log.summary(), end="")
    return EXIT_OK


def _denoise_grouped(mw, cube, group: int, threads: int):
    """Sliding fixed-size band groups, averaging overlapped predictions."""
    nb = cube.shape[0]
    if nb <= group:
        return denoise_cube(mw, cube)
    stride = max(1, group // 2)
    starts = sorted(set(list(range(0, nb - group, stride)) + [nb - group]))
    acc = np.zeros(cube.shape, dtype=np.float64)
    count = np.zeros(nb, dtype=np.float64)

    def run(s):
        return s, denoise_cube(mw, cube[s : s + group])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]
    for s, pred in results:  # fixed accumulation order keeps this deterministic
        acc[s : s + group] += pred
        count[s : s + group] += 1
    return (acc / count[:, None, None]).astype(cube.dtype)


def _cmd_denoise(args):
    mw = load_checkpoint(args.weights)
    cube = load_cube(getattr(args, "in"))
    div = 2 ** mw.config.downsample_count
    nb, nh, nw = cube.shape
    ph = (-nh) % div
    pw = (-nw) % div
    padded = np.pad(cube, ((0, 0), (0, ph), (0, pw)), mode="reflect") if (ph or pw) else cube
    restored = _denoise_grouped(mw, padded, args.band_group, args.threads)
    restored = np.clip(restored[:, :nh, :nw], 0.0, 1.0).astype(cube.dtype)
    store_cube(args.out, restored)
    if args.png:
        bands = [int(v) for v in args.bands.split(",")]
        export_false_color_png(args.png, restored, bands)
    return EXIT_OK


def _cmd_eval(args):
    clean = load_cube(args.clean)
    test = load_cube(args.test)
    if clean.shape != test.shape:
        raise DataError(f"shape mismatch: {clean.shape} vs {test.shape}")
    rep = evaluate_pair(clean, test)
    print(f"psnr {rep.psnr:.2f}")
    print(f"ssim {rep.ssim:.4f}")
    print(f"sam {rep.sam:.4f}")
    return EXIT_OK


def _cmd_noise(args):
    with open(args.config) as fh:
        kv = parse_config_text(fh.read())
    used = set()
    spec = noise_spec_from_config(kv, used)
    unknown = sorted(set(kv) - used)
    if unknown:
        raise DataError(f"unknown config keys: {', '.join(unknown)}")
    cube = load_cube(getattr(args, "in"))
    noisy, report = degrade(cube.astype(np.float64), spec, seed=args.seed)
    store_cube(args.out, noisy.astype(cube.dtype))
    if report.sigma_per_band is not None:
        sigmas = " ".join(f"{s:.2f}" for s in report.sigma_per_band)
        print(f"gaussian sigma per band (0-255): {sigmas}", file=sys.stderr)
    for label, bands in (("impulse", report.impulse_bands),
                         ("stripe", report.stripe_bands),
                         ("deadline", report.deadline_bands)):
        if len(bands):
            print(f"{label} bands ({len(bands)}): {' '.join(str(int(b)) for b in bands)}",
                  file=sys.stderr)
    return EXIT_OK


def _cmd_scan(args):
    dims = _parse_ints(args.dims)
    if len(dims) != 3:
        raise DataError(f"--dims expects B,H,W, got {args.dims!r}")
    try:
        p = scan.build_permutation(args.scheme, dims)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    lines = ["position,band,row,col"]
    lines += [f"{k},{b},{r},{c}" for k, (b, r, c) in enumerate(p.coords())]
    csv = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv)
    else:
        sys.stdout.write(csv)
    count, positions = scan.continuity_report(p)
    print(f"continuity violations: {count}")
    if count:
        print("at positions: " + " ".join(str(int(v)) for v in positions))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="ssmdenoise",
                                 description="Hyperspectral cube denoising toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("denoise", help="restore a noisy cube")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--png", default=None)
    p.add_argument("--bands", default="0,1,2", help="three band indices for the PNG")
    p.add_argument("--band-group", type=int, default=31)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=_cmd_denoise)

    p = sub.add_parser("eval", help="score a restored cube against a clean one")
    p.add_argument("--clean", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("noise", help="degrade a clean cube")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_noise)

    p = sub.add_parser("scan", help="dump a scan permutation and its continuity report")
    p.add_argument("--scheme", required=True)
    p.add_argument("--dims", required=True, help="B,H,W")
    p.add_argument("--csv", default=None)
    p.set_defaults(fn=_cmd_scan)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NonFiniteError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
