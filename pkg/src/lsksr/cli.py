"""Command-line surface: analyze | degrade | train | eval | convert | dump-features.

Exit codes: 0 success, 2 usage/input error, 3 runtime numeric failure.
All numeric output uses fixed decimal formats (parameters 2 dp in K,
FLOPs 2 dp in G, PSNR 2 dp, SSIM 4 dp) and all commands are
byte-deterministic for identical inputs and seeds.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import imaging
from .checkpoint import network_from_checkpoint, save_checkpoint
from .complexity import (DEFAULT_WIDTHS, POST_PIXELSHUFFLE, TOY_WIDTHS, comparison_report,
                         model_spec, table_grid, flop_model, param_count)
from .config import Config, load_config
from .errors import DivergenceError, LskError
from .models import (LrSchedule, Network, TrainRun, build_model, decompose_network,
                     grad_check, make_optimizer, merge_network, train, validation_psnr)
from .tensor import Rng

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class CliError(Exception):
    """Usage or input error; maps to exit code 2."""


def _widths(preset: str):
    return TOY_WIDTHS if preset == "toy" else DEFAULT_WIDTHS


def _spec(name: str, cfg: Config):
    try:
        return model_spec(name, scale=cfg.scale, widths=_widths(cfg.preset))
    except LskError as e:
        raise CliError(str(e))


def _default_optimizer(model_name: str) -> str:
    # follows the respective original training recipes
    return "adam" if "ESPCN" in model_name.upper() else "sgd-momentum"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


# -- analyze -------------------------------------------------------------------

def cmd_analyze(cfg: Config, models: list[str], grid: int, csv_path: str | None) -> int:
    if len(models) < 2 or len(models) % 2:
        raise CliError("analyze needs an even number of models: normal,separable pairs")
    pairs = [( _spec(models[i], cfg), _spec(models[i + 1], cfg))
             for i in range(0, len(models), 2)]
    rows = comparison_report(pairs, grid=grid, count_extra_bias=cfg.count_extra_bias)
    header = ["model", "params_k", "flops_mul_g", "flops_add_g", "flops_total_g",
              "decline_params_pct", "decline_flops_pct"]
    out_rows = []
    for r in rows:
        for name, p, f, dp, df in (
            (r.normal, r.params_normal, r.flops_normal, "", ""),
            (r.separable, r.params_separable, r.flops_separable,
             f"{r.decline_params_pct:.2f}", f"{r.decline_flops_pct:.2f}"),
        ):
            out_rows.append([name, f"{p / 1e3:.2f}", f"{f.mul / 1e9:.2f}",
                             f"{f.add / 1e9:.2f}", f"{f.total / 1e9:.2f}", dp, df])
    widths = [max(len(h), *(len(str(row[i])) for row in out_rows)) for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in out_rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    if csv_path:
        _write_csv(csv_path, header, out_rows)
    return EXIT_OK


# -- degrade -------------------------------------------------------------------

def _list_pngs(d):
    if not os.path.isdir(d):
        raise CliError(f"not a directory: {d}")
    names = sorted(f for f in os.listdir(d) if f.lower().endswith(".png"))
    if not names:
        raise CliError(f"no PNG files in {d}")
    return names


def cmd_degrade(cfg: Config) -> int:
    names = _list_pngs(cfg.hr_dir)
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = []
    for name in names:
        stem = os.path.splitext(name)[0]
        y = imaging.rgb_to_y(imaging.load_png(os.path.join(cfg.hr_dir, name)))
        y = imaging.crop_to_multiple(y, cfg.scale)
        lr, coarse = imaging.degrade(y, cfg.scale)
        files = {"hr": y, "lr": lr, "bic": coarse}
        for kind, plane in files.items():
            imaging.save_png(imaging.plane_to_u8(plane),
                             os.path.join(cfg.out_dir, f"{stem}_{kind}.png"))
        manifest.append([stem, y.shape[0], y.shape[1], cfg.scale])
    _write_csv(os.path.join(cfg.out_dir, "manifest.csv"),
               ["stem", "hr_h", "hr_w", "scale"], manifest)
    print(f"degraded {len(names)} images at x{cfg.scale} into {cfg.out_dir}")
    return EXIT_OK


def _read_manifest(dataset_dir):
    path = os.path.join(dataset_dir, "manifest.csv")
    if not os.path.isfile(path):
        raise CliError(f"no manifest.csv in {dataset_dir} (run degrade first)")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise CliError(f"empty manifest in {dataset_dir}")
    return rows


def _load_planes(dataset_dir, stem):
    def p(kind):
        return imaging.rgb_to_y(imaging.load_png(
            os.path.join(dataset_dir, f"{stem}_{kind}.png")))
    return p("hr"), p("lr"), p("bic")


def _patch_pairs(spec, hr, lr, bic, patch, stride):
    """(input, target) patch pairs on [0, 1]; input grid depends on upsampling."""
    if spec.upsampling == POST_PIXELSHUFFLE:
        s = spec.scale
        pairs = []
        h, w = lr.shape
        for i in range(0, h - patch + 1, stride):
            for j in range(0, w - patch + 1, stride):
                pairs.append((lr[i:i + patch, j:j + patch] / 255.0,
                              hr[i * s:(i + patch) * s, j * s:(j + patch) * s] / 255.0))
        return pairs
    return [(a / 255.0, b / 255.0)
            for a, b in imaging.extract_patches(bic, hr, patch, stride)]


def _build_datasets(cfg: Config, spec, val_count=2):
    rows = _read_manifest(cfg.dataset_dir)
    stems = [r["stem"] for r in rows]
    val_stems = set(stems[-val_count:]) if len(stems) > val_count else set(stems[-1:])
    train_set, val_set = [], []
    for stem in stems:
        hr, lr, bic = _load_planes(cfg.dataset_dir, stem)
        pairs = _patch_pairs(spec, hr, lr, bic, cfg.patch, cfg.stride)
        (val_set if stem in val_stems else train_set).extend(pairs)
    if not train_set:
        raise CliError("no training patches; check patch/stride against image sizes")
    return train_set, val_set


def cmd_train(cfg: Config) -> int:
    spec = _spec(cfg.model, cfg)
    train_set, val_set = _build_datasets(cfg, spec, val_count=cfg.val_count)
    net = build_model(spec, Rng(cfg.seed), init=cfg.init)
    opt_kind = cfg.optimizer or _default_optimizer(cfg.model)
    optimizer = make_optimizer(opt_kind)
    schedule = LrSchedule(cfg.lr_schedule)
    run = TrainRun(seed=cfg.seed, epochs=cfg.epochs, batch_size=cfg.batch_size,
                   loss=cfg.loss, clip=cfg.clip or None, shave=cfg.loss_shave)
    os.makedirs(cfg.out_dir, exist_ok=True)
    tag = cfg.model.replace("/", "_")
    final_path = os.path.join(cfg.out_dir, f"{tag}_final.lskc")
    best_path = os.path.join(cfg.out_dir, f"{tag}_best.lskc")
    metrics_path = os.path.join(cfg.out_dir, f"{tag}_metrics.csv")

    best = [-math.inf]
    log = []

    def on_epoch(network, stats):
        log.append(stats)
        save_checkpoint(final_path, network)  # last-good state
        if stats.val_psnr > best[0]:
            best[0] = stats.val_psnr
            save_checkpoint(best_path, network)

    try:
        train(net, train_set, val_set, optimizer, schedule, run, on_epoch=on_epoch)
    except DivergenceError as e:
        _write_metrics(metrics_path, log)
        print(f"training diverged: {e}; last-good checkpoint kept at {final_path}",
              file=sys.stderr)
        return EXIT_NUMERIC
    _write_metrics(metrics_path, log)
    print(f"trained {cfg.model} for {cfg.epochs} epochs "
          f"(final val PSNR {log[-1].val_psnr:.2f} dB); wrote {final_path}")
    return EXIT_OK


def _write_metrics(path, log):
    _write_csv(path, ["epoch", "loss", "val_psnr"],
               [[s.epoch, repr(s.loss), f"{s.val_psnr:.4f}"] for s in log])


# -- eval ----------------------------------------------------------------------

def _sr_plane(net: Network, spec, lr, bic):
    x = (lr if spec.upsampling == POST_PIXELSHUFFLE else bic) / 255.0
    y = net.forward(x.astype(np.float32)[None, None])[0, 0]
    return np.clip(y, 0.0, 1.0) * 255.0


def cmd_eval(cfg: Config) -> int:
    if not cfg.checkpoint:
        raise CliError("eval needs checkpoint=")
    net = network_from_checkpoint(cfg.checkpoint)
    spec = net.spec
    if spec.upsampling == POST_PIXELSHUFFLE and spec.scale != cfg.scale:
        raise CliError(f"checkpoint was trained for x{spec.scale}, requested x{cfg.scale}")
    rows = _read_manifest(cfg.dataset_dir)
    shave = cfg.scale
    out_rows, psnrs, ssims, bic_psnrs, bic_ssims = [], [], [], [], []
    for r in rows:
        stem = r["stem"]
        hr, lr, bic = _load_planes(cfg.dataset_dir, stem)
        sr = _sr_plane(net, spec, lr, bic)
        p, s = imaging.psnr(sr, hr, shave), imaging.ssim(sr, hr, shave)
        bp, bs = imaging.psnr(bic, hr, shave), imaging.ssim(bic, hr, shave)
        out_rows.append([stem, f"{p:.2f}", f"{s:.4f}", f"{bp:.2f}", f"{bs:.4f}"])
        psnrs.append(p); ssims.append(s); bic_psnrs.append(bp); bic_ssims.append(bs)
    out_rows.append(["mean", f"{np.mean(psnrs):.2f}", f"{np.mean(ssims):.4f}",
                     f"{np.mean(bic_psnrs):.2f}", f"{np.mean(bic_ssims):.4f}"])
    header = ["image", "psnr_db", "ssim", "bicubic_psnr_db", "bicubic_ssim"]
    for row in [header] + out_rows:
        print("  ".join(str(v).ljust(16) for v in row))
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_csv(os.path.join(cfg.out_dir, "eval.csv"), header, out_rows)
    return EXIT_OK


# -- convert -------------------------------------------------------------------

def cmd_convert(cfg: Config, mode: str, c_e: int | None, out_path: str) -> int:
    if not cfg.checkpoint:
        raise CliError("convert needs checkpoint=")
    net = network_from_checkpoint(cfg.checkpoint)
    if mode == "merge":
        new_net, merged = merge_network(net)
        if merged == 0:
            print("warning: model has no separable layers; merge is a no-op",
                  file=sys.stderr)
        else:
            print(f"merged {merged} separable layer(s)")
    elif mode == "decompose":
        new_net, residuals = decompose_network(net, c_e)
        for i, err in enumerate(residuals):
            print(f"decomposed layer {i}: residual {err:.6g}")
    else:
        raise CliError(f"unknown convert mode {mode!r}")
    save_checkpoint(out_path, new_net)
    print(f"wrote {out_path}")
    return EXIT_OK


# -- dump-features ---------------------------------------------------------------

def _normalize_map(m):
    lo, hi = float(m.min()), float(m.max())
    if hi - lo < 1e-12:
        return np.full(m.shape, 128, dtype=np.uint8)  # flat map renders mid-gray
    return imaging.plane_to_u8((m - lo) / (hi - lo) * 255.0)


def _montage(maps, pad=2):
    c, h, w = maps.shape
    cols = int(math.ceil(math.sqrt(c)))
    rows = int(math.ceil(c / cols))
    canvas = np.zeros((rows * (h + pad) - pad, cols * (w + pad) - pad), dtype=np.uint8)
    for i in range(c):
        r, q = divmod(i, cols)
        canvas[r * (h + pad):r * (h + pad) + h, q * (w + pad):q * (w + pad) + w] = \
            _normalize_map(maps[i])
    return canvas


def cmd_dump_features(cfg: Config, image_path: str, layer_index: int) -> int:
    if not cfg.checkpoint:
        raise CliError("dump-features needs checkpoint=")
    net = network_from_checkpoint(cfg.checkpoint)
    n_layers = len(net.spec.layers)
    if layer_index < 0:
        layer_index += n_layers
    if not 0 <= layer_index < n_layers:
        raise CliError(f"layer index out of range (model has {n_layers} layers)")
    y = imaging.rgb_to_y(imaging.load_png(image_path)) / 255.0
    x = y.astype(np.float32)[None, None]

    # run the node chain, capturing the output of the requested spec layer
    # (after its activation)
    from .models import ActNode, ConvNode
    from .conv import Conv1DLayer
    captured = None
    layer_i = -1
    cur = x
    for node in net.nodes:
        cur = node.forward(cur)
        if isinstance(node, ConvNode):
            if isinstance(node.layer, Conv1DLayer) and \
                    node.layer.orientation == Conv1DLayer.VERTICAL:
                continue  # mid-pair extra layer: not a spec-layer boundary
            layer_i += 1
            if layer_i == layer_index and net.spec.layers[layer_index].activation == "identity":
                captured = cur
                break
        elif isinstance(node, ActNode) and layer_i == layer_index:
            captured = cur
            break
    if captured is None:
        raise CliError("could not capture the requested layer output")

    maps = captured[0]
    os.makedirs(cfg.out_dir, exist_ok=True)
    for i in range(maps.shape[0]):
        imaging.save_png(_normalize_map(maps[i]),
                         os.path.join(cfg.out_dir, f"feature_{layer_index}_{i:03d}.png"))
    imaging.save_png(_montage(maps),
                     os.path.join(cfg.out_dir, f"montage_{layer_index}.png"))
    print(f"wrote {maps.shape[0]} feature maps + montage to {cfg.out_dir}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--model")
    p.add_argument("--scale", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--preset", choices=["full", "toy"])
    p.add_argument("--hr-dir")
    p.add_argument("--dataset-dir")
    p.add_argument("--out-dir")
    p.add_argument("--checkpoint")


def _merge_cfg(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    for src, dst in (("model", "model"), ("scale", "scale"), ("seed", "seed"),
                     ("epochs", "epochs"), ("preset", "preset"), ("hr_dir", "hr_dir"),
                     ("dataset_dir", "dataset_dir"), ("out_dir", "out_dir"),
                     ("checkpoint", "checkpoint")):
        v = getattr(args, src, None)
        if v is not None:
            setattr(cfg, dst, v)
    return cfg


def build_parser():
    ap = argparse.ArgumentParser(prog="lsksr",
                                 description="separable-kernel super-resolution toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="parameter/FLOP comparison of model pairs")
    _add_common(p)
    p.add_argument("--models", required=True,
                   help="comma list forming (normal, separable) pairs")
    p.add_argument("--grid", type=int, default=512, help="conv grid for FLOPs")
    p.add_argument("--csv", help="also write the table as CSV")

    p = sub.add_parser("degrade", help="build an LR / coarse-HR dataset")
    _add_common(p)

    p = sub.add_parser("train", help="train a model on a degraded dataset")
    _add_common(p)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint on a dataset")
    _add_common(p)

    p = sub.add_parser("convert", help="merge or decompose checkpoint kernels")
    _add_common(p)
    p.add_argument("--mode", required=True, choices=["merge", "decompose"])
    p.add_argument("--c-e", type=int, default=None, dest="c_e")
    p.add_argument("--out", required=True)

    p = sub.add_parser("dump-features", help="write normalized feature-map PNGs")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--layer-index", type=int, required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_cfg(args)
        if args.command == "analyze":
            return cmd_analyze(cfg, [m.strip() for m in args.models.split(",")],
                               args.grid, args.csv)
        if args.command == "degrade":
            return cmd_degrade(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "convert":
            return cmd_convert(cfg, args.mode, args.c_e, args.out)
        if args.command == "dump-features":
            return cmd_dump_features(cfg, args.image, args.layer_index)
        raise CliError(f"unknown command {args.command!r}")
    except (CliError, LskError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
