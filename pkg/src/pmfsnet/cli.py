"""Command-line harness.

Subcommands: summarize | train | eval | bench | gradcheck | gen | preprocess.
Exit codes: 0 success, 2 validation failure (a check ran and failed), 1 error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np


def _add_common(p):
    p.add_argument("--config", default="tiny-2d",
                   help="preset name or path to a .cfg file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory or file")
    p.add_argument("--theta", type=float, default=1.0,
                   help="surface-overlap threshold in mm")
    p.add_argument("--weights", default=None,
                   help="comma-separated class weights for the loss")
    p.add_argument("--precision", choices=("float64", "float32"),
                   default="float64", help="checkpoint storage precision")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pmfsnet",
        description="Lightweight multi-scale attention segmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize", help="per-layer params/FLOPs table")
    _add_common(p)
    p.add_argument("--convention", choices=("mac", "2mac"), default="mac")
    p.add_argument("--top", type=int, default=None,
                   help="show only the N most expensive layers")

    p = sub.add_parser("train", help="train on a dataset manifest")
    _add_common(p)
    p.add_argument("--data", required=True, help="training manifest path")
    p.add_argument("--val-data", default=None, help="validation manifest")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--weight-decay", type=float, default=5e-5)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--no-attention", action="store_true",
                   help="ablation: replace the attention block with identity fusion")

    p = sub.add_parser("eval", help="metrics for prediction/ground-truth dirs")
    _add_common(p)
    p.add_argument("--pred", required=True, help="predictions directory")
    p.add_argument("--gt", required=True, help="ground-truth directory")
    p.add_argument("--classes", type=int, default=2)

    p = sub.add_parser("bench", help="attention cost scaling table")
    _add_common(p)
    p.add_argument("--sizes", default="16x16,16x32,32x32",
                   help="comma-separated HxW grids for the finest branch; "
                        "each total position count must double the previous")
    p.add_argument("--time", action="store_true",
                   help="also wall-clock the conv kernels on both backends")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    _add_common(p)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--dims", type=int, choices=(2, 3), default=2)
    p.add_argument("--extent", type=int, default=64)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--no-notches", action="store_true")

    p = sub.add_parser("preprocess", help="clip/resample/normalize a volume")
    _add_common(p)
    p.add_argument("--input", required=True, help="input PMVL volume")
    p.add_argument("--grid", default=None,
                   help="target grid, e.g. 160,160,96 (default: no crop/pad)")
    p.add_argument("--mode", choices=("linear", "nearest"), default="linear")
    return parser


def cmd_summarize(args):
    from .config import resolve_config
    from .costs import compare_to_reference, cost_report
    from .model import PMFSNet

    cfg, is_preset = resolve_config(args.config)
    model = PMFSNet(cfg, seed=args.seed)
    report = cost_report(model, convention=args.convention)
    print(f"model {cfg.name} {cfg.dims}D (decoder={cfg.decoder})")
    print(report.format(top=args.top))
    failed = False
    if is_preset:
        c = compare_to_reference(model)
        status = "pass" if c["param_ok"] else "FAIL"
        print(
            f"params target {c['ref_params'] / 1e6:.2f} M: measured "
            f"{c['params'] / 1e6:.3f} M, err {c['param_rel_err'] * 100:.1f}% "
            f"(tol 15%) [{status}]"
        )
        failed |= not c["param_ok"]
        if "ref_flops" in c:
            status = "pass" if c["flop_ok"] else "FAIL"
            print(
                f"flops target {c['ref_flops'] / 1e9:.2f} G: measured "
                f"{c['flops'] / 1e9:.3f} G under {c['flop_convention']} "
                f"convention, err {c['flop_rel_err'] * 100:.1f}% (tol 25%) "
                f"[{status}]"
            )
            failed |= not c["flop_ok"]
    else:
        print("custom config: no published target row")
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(report.format() + "\n")
    return 2 if failed else 0


def cmd_train(args):
    from dataclasses import replace

    from .config import resolve_config
    from .model import PMFSNet
    from .train import RunConfig, train

    cfg, _ = resolve_config(args.config)
    if args.no_attention:
        cfg = replace(cfg, use_attention=False)
    model = PMFSNet(cfg, seed=args.seed)
    run = RunConfig(
        epochs=args.epochs,
        lr=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        out_dir=args.out or "runs/out",
        loss_weights=args.weights,
        augment=not args.no_augment,
    )
    history = train(model, args.data, run, val_manifest=args.val_data)
    print(f"best val IoU {history['best_val_iou']:.4f}")
    print(f"checkpoint {history['checkpoint']}")
    return 0


def _case_files(directory):
    names = sorted(
        n for n in os.listdir(directory) if n.endswith((".png", ".pmvl"))
    )
    return names


def cmd_eval(args):
    from .metrics import evaluate_pair
    from .serialize import load_mask_png, load_volume

    pred_names = _case_files(args.pred)
    gt_names = _case_files(args.gt)
    if pred_names != gt_names:
        only_p = set(pred_names) - set(gt_names)
        only_g = set(gt_names) - set(pred_names)
        print(
            f"error: case lists differ (only in pred: {sorted(only_p)[:5]}, "
            f"only in gt: {sorted(only_g)[:5]})",
            file=sys.stderr,
        )
        return 1
    if not pred_names:
        print("error: no cases found", file=sys.stderr)
        return 1

    def load_any(path):
        if path.endswith(".pmvl"):
            vox, spacing = load_volume(path)
            return vox.astype(np.int64), spacing
        return load_mask_png(path).astype(np.int64), np.ones(2)

    reports = []
    lines = []
    for name in pred_names:
        pred, spacing = load_any(os.path.join(args.pred, name))
        gt, _ = load_any(os.path.join(args.gt, name))
        rep = evaluate_pair(pred, gt, num_classes=args.classes,
                            spacing=spacing, theta=args.theta)
        reports.append(rep)
        lines.append(f"{name}\t{rep.format()}")
        print(lines[-1])

    fields = ("dsc", "iou", "miou", "acc", "hd", "assd", "so")
    agg = []
    for f in fields:
        vals = [getattr(r, f) for r in reports]
        defined = [v for v in vals if not math.isnan(v)]
        n_undef = len(vals) - len(defined)
        mean = float(np.mean(defined)) if defined else math.nan
        agg.append(
            f"{f}={mean:.4f}" + (f" ({n_undef} undefined excluded)" if n_undef else "")
        )
    aggregate = "aggregate\t" + " ".join(agg)
    print(aggregate)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write("".join(line + "\n" for line in lines))
            fh.write(aggregate + "\n")
    return 0


def cmd_bench(args):
    from .backend import active_backend
    from .blocks import PMFSBlock, PMFSConfig, QuadraticSelfAttention
    from .layers import CostRow

    grids = []
    for part in args.sizes.split(","):
        part = part.strip()
        if not part:
            continue
        dims = tuple(int(p) for p in part.split("x"))
        if len(dims) != 2 or any(d % 4 != 0 for d in dims):
            print(f"error: grid {part!r} must be HxW with extents divisible "
                  "by 4", file=sys.stderr)
            return 1
        grids.append(dims)
    if len(grids) < 3:
        print("error: need at least 3 grid sizes", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    cfg = PMFSConfig(branch_channel=8, out_channels=16, dims=2)
    block = PMFSBlock(rng, (8, 12, 16), cfg)
    quad = QuadraticSelfAttention(rng, channels=24, dims=2)

    def score_macs(rows):
        return sum(r.macs for r in rows if r.kind == "attn-score")

    pmfs_costs = []
    quad_costs = []
    positions = []
    for h, w in grids:
        shapes = [(8, h, w), (12, h // 2, w // 2), (16, h // 4, w // 4)]
        _, rows = block.trace(shapes)
        pmfs_costs.append(score_macs(rows))
        _, qrows = quad.trace((24, h // 4, w // 4))
        quad_costs.append(score_macs(qrows))
        positions.append((h // 4) * (w // 4))
    for prev, cur in zip(positions, positions[1:]):
        if cur != 2 * prev:
            print(
                f"error: grid sizes must double total positions "
                f"({prev} -> {cur})",
                file=sys.stderr,
            )
            return 1

    print(f"{'positions':>10s} {'pmfs-macs':>12s} {'ratio':>7s} "
          f"{'quad-macs':>14s} {'ratio':>7s}")
    failed = False
    for i, n in enumerate(positions):
        pr = pmfs_costs[i] / pmfs_costs[i - 1] if i else math.nan
        qr = quad_costs[i] / quad_costs[i - 1] if i else math.nan
        mark = ""
        if i:
            ok_p = 1.9 <= pr <= 2.1
            ok_q = 3.8 <= qr <= 4.2
            failed |= not (ok_p and ok_q)
            mark = "  [pass]" if ok_p and ok_q else "  [FAIL]"
        print(
            f"{n:10d} {pmfs_costs[i]:12d} "
            f"{'' if not i else f'{pr:7.2f}'}"
            f"{' ' * 7 if not i else ''} {quad_costs[i]:14d} "
            f"{'' if not i else f'{qr:7.2f}'}{mark}"
        )
    print(f"pmfs ratio window [1.9, 2.1], quadratic window [3.8, 4.2]: "
          f"{'FAIL' if failed else 'pass'}")

    if args.time:
        from .benchmarks import time_backends

        for line in time_backends(seed=args.seed):
            print(line)
    print(f"(active kernel backend: {active_backend()})")
    return 2 if failed else 0


def cmd_gradcheck(args):
    from .checks import GRAD_TOL, run_gradcheck

    results = run_gradcheck(seed=args.seed)
    failed = False
    print(f"{'target':16s} {'max rel err':>14s}  bar {GRAD_TOL:.0e}")
    for name, err, ok in results:
        print(f"{name:16s} {err:14.3e}  [{'pass' if ok else 'FAIL'}]")
        failed |= not ok
    return 2 if failed else 0


def cmd_gen(args):
    from .data import SyntheticSpec, gen_synthetic

    spec = SyntheticSpec(
        dims=args.dims,
        extent=args.extent,
        count=args.count,
        notches=not args.no_notches,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    out = args.out or "data/synthetic"
    manifest = gen_synthetic(spec, out)
    print(f"wrote {args.count} pairs, manifest {manifest}")
    return 0


def cmd_preprocess(args):
    from .data import preprocess_volume
    from .serialize import load_volume, save_volume

    vox, spacing = load_volume(args.input)
    grid = None
    if args.grid:
        grid = tuple(int(p) for p in args.grid.replace(",", " ").split())
    vol, new_spacing = preprocess_volume(
        vox, spacing, target_grid=grid, mode=args.mode
    )
    out = args.out or (os.path.splitext(args.input)[0] + "_pre.pmvl")
    save_volume(out, vol, new_spacing)
    print(f"wrote {out} shape {vol.shape} spacing {tuple(new_spacing)}")
    return 0


_COMMANDS = {
    "summarize": cmd_summarize,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
    "gen": cmd_gen,
    "preprocess": cmd_preprocess,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
