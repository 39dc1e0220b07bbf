"""Command-line front end: dense model in, pruned / repaired / scored out.

Subcommands mirror the pipeline stages: prune, repair, eval, grid,
sweep-clip, stats, inspect. Every subcommand is a pure function of its input
files and flags; there is no hidden state and no network access.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .allocate import ALLOCATIONS, global_sparsity, model_masks, prune_model
from .errors import SparseRepairError
from .evaluate import (DEFAULT_CLIP_BOUNDS, SweepSpec, clip_sensitivity,
                       evaluate, reports_to_csv, run_grid)
from .graph import Model, forward
from .modelio import load_model, load_tns, save_model, save_tns
from .repair import VARIANTS, RepairConfig, dump_plan, repair
from .stats import dump_stats, paired_stats


def _limit_threads(n):
    if n is None:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        pass


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_calib(path: str, calib_size) -> np.ndarray:
    calib = load_tns(path)
    if calib_size is not None:
        if calib.shape[0] < calib_size:
            raise SparseRepairError(
                f"calibration file holds {calib.shape[0]} images, "
                f"--calib-size asked for {calib_size}"
            )
        calib = calib[:calib_size]
    return calib


def _repair_config(args) -> RepairConfig:
    return RepairConfig(
        variant=args.variant, eps=args.eps, clip_lo=args.clip_lo,
        clip_hi=args.clip_hi, bn_recal_batches=args.bn_batches,
        sequential=args.sequential, batch_size=args.batch_size,
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS worker threads")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def _add_repair_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--clip-lo", type=float, default=0.5)
    p.add_argument("--clip-hi", type=float, default=2.0)
    p.add_argument("--bn-batches", type=int, default=20)
    p.add_argument("--sequential", action="store_true")
    p.add_argument("--calib-size", type=int, default=128)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparserepair",
        description="prune a dense CNN and repair it with unlabeled data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prune", help="allocate per-layer sparsity and mask weights")
    p.add_argument("--model", required=True)
    p.add_argument("--alloc", choices=ALLOCATIONS, default="erk")
    p.add_argument("--sparsity", type=float, required=True,
                   help="global sparsity as a fraction in (0, 1)")
    _add_common(p)

    p = sub.add_parser("repair", help="correct a pruned model from calibration images")
    p.add_argument("--dense", required=True)
    p.add_argument("--pruned", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--variant", choices=VARIANTS, default="asr_q50")
    p.add_argument("--plan-out", default=None,
                   help="write per-channel scale factors as CSV")
    _add_repair_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="top-1 accuracy and/or raw logits")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--logits-out", default=None,
                   help="write logits for --images as a tensor file")
    _add_common(p)

    p = sub.add_parser("grid", help="allocation x sparsity x variant accuracy grid")
    _add_grid_io(p)
    p.add_argument("--variants", default="bn_only,asr_q50,asr_clip")
    p.add_argument("--timings", action="store_true",
                   help="record wall time per cell (breaks byte determinism)")
    _add_repair_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep-clip", help="clip-bound sensitivity sweep")
    _add_grid_io(p)
    p.add_argument("--bounds", default="0.25:4.0,0.5:2.0,0.67:1.5,0.8:1.25",
                   help="comma-separated lo:hi pairs")
    p.add_argument("--timings", action="store_true")
    _add_repair_flags(p)
    _add_common(p)

    p = sub.add_parser("stats", help="per-channel activation moments, dense vs pruned")
    p.add_argument("--dense", required=True)
    p.add_argument("--pruned", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--calib-size", type=int, default=128)
    _add_common(p)

    p = sub.add_parser("inspect", help="summarize a model file")
    p.add_argument("--model", required=True)
    _add_common(p)

    return parser


def _add_grid_io(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dense", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--sparsities", default="0.9,0.95")
    p.add_argument("--allocs", default="erk,lamp")
    p.add_argument("--eval-size", type=int, default=None,
                   help="evaluate on the first N test images only")


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok)


def _parse_bounds(text: str) -> tuple:
    bounds = []
    for tok in text.split(","):
        if not tok:
            continue
        lo, _, hi = tok.partition(":")
        if not hi:
            raise SparseRepairError(f"clip bounds must be lo:hi, got {tok!r}")
        bounds.append((float(lo), float(hi)))
    if not bounds:
        raise SparseRepairError("clip bounds list must be non-empty")
    return tuple(bounds)


def _sweep_spec(args, variants=None, bounds=None) -> SweepSpec:
    return SweepSpec(
        sparsities=_parse_floats(args.sparsities),
        allocations=tuple(tok for tok in args.allocs.split(",") if tok),
        variants=variants if variants is not None else ("asr_clip",),
        clip_bounds=bounds if bounds is not None else DEFAULT_CLIP_BOUNDS,
        seed=args.seed, eps=args.eps, clip_lo=args.clip_lo,
        clip_hi=args.clip_hi, bn_recal_batches=args.bn_batches,
        batch_size=args.batch_size, sequential=args.sequential,
        timings=args.timings,
    )


def _load_grid_data(args):
    dense = load_model(args.dense)
    calib = _load_calib(args.calib, args.calib_size)
    test_x = load_tns(args.images)
    test_y = load_tns(args.labels).astype(np.int64)
    if args.eval_size is not None:
        test_x, test_y = test_x[:args.eval_size], test_y[:args.eval_size]
    return dense, calib, test_x, test_y


def _cmd_prune(args) -> int:
    model = load_model(args.model)
    pruned = prune_model(model, args.alloc, args.sparsity)
    if not args.out:
        raise SparseRepairError("prune needs --out for the pruned model")
    save_model(pruned, args.out)
    achieved = global_sparsity(model_masks(pruned))
    print(f"pruned {args.model} -> {args.out} "
          f"(alloc={args.alloc}, sparsity={achieved:.6f})")
    return 0


def _cmd_repair(args) -> int:
    dense = load_model(args.dense)
    pruned = load_model(args.pruned)
    calib = _load_calib(args.calib, args.calib_size)
    repaired, plan = repair(dense, pruned, calib, _repair_config(args))
    if not args.out:
        raise SparseRepairError("repair needs --out for the repaired model")
    save_model(repaired, args.out)
    if args.plan_out:
        if plan is None:
            raise SparseRepairError(
                f"variant {args.variant!r} produces no per-channel plan"
            )
        with open(args.plan_out, "w") as fh:
            fh.write(dump_plan(plan))
    print(f"repaired {args.pruned} -> {args.out} (variant={args.variant})")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    images = load_tns(args.images)
    if args.logits_out:
        chunks = [forward(model, images[lo:lo + args.batch_size])[0]
                  for lo in range(0, images.shape[0], args.batch_size)]
        save_tns(np.concatenate(chunks).astype(np.float32), args.logits_out)
    if args.labels:
        labels = load_tns(args.labels).astype(np.int64)
        acc = evaluate(model, images, labels, args.batch_size)
        _emit(f"accuracy: {acc:.2f}\n", args.out)
    elif not args.logits_out:
        raise SparseRepairError("eval needs --labels and/or --logits-out")
    return 0


def _cmd_grid(args) -> int:
    dense, calib, test_x, test_y = _load_grid_data(args)
    variants = tuple(tok for tok in args.variants.split(",") if tok)
    spec = _sweep_spec(args, variants=variants)
    reports = run_grid(dense, calib, test_x, test_y, spec)
    _emit(reports_to_csv(reports), args.out)
    return 1 if any(r.error for r in reports) else 0


def _cmd_sweep_clip(args) -> int:
    dense, calib, test_x, test_y = _load_grid_data(args)
    spec = _sweep_spec(args, bounds=_parse_bounds(args.bounds))
    reports = clip_sensitivity(dense, calib, test_x, test_y, spec)
    _emit(reports_to_csv(reports), args.out)
    return 1 if any(r.error for r in reports) else 0


def _cmd_stats(args) -> int:
    dense = load_model(args.dense)
    pruned = load_model(args.pruned)
    calib = _load_calib(args.calib, args.calib_size)
    stats = paired_stats(dense, pruned, calib, args.batch_size)
    _emit(dump_stats(stats), args.out)
    return 0


def _cmd_inspect(args) -> int:
    model = load_model(args.model)
    masks = model_masks(model)
    meta = model.graph.metadata
    lines = [f"model: {args.model}"]
    for key in sorted(meta):
        lines.append(f"  {key}: {meta[key]}")
    total = sum(w.size for name, w in model.weights.items()
                if not name.endswith(".mask"))
    lines.append(f"  tensors: {len(model.weights)}  parameters: {total}")
    if masks:
        lines.append(f"  global sparsity: {global_sparsity(masks):.6f}")
    lines.append("  nodes:")
    for node in model.graph.nodes:
        wname = node.weight_refs.get("weight")
        detail = ""
        if wname is not None:
            w = model.weights[wname]
            detail = f"  {wname} {'x'.join(map(str, w.shape))}"
            mask = model.weights.get(wname + ".mask")
            if mask is not None:
                detail += f"  density={mask.mean():.4f}"
        lines.append(f"    {node.name} [{node.kind}]{detail}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


_COMMANDS = {
    "prune": _cmd_prune,
    "repair": _cmd_repair,
    "eval": _cmd_eval,
    "grid": _cmd_grid,
    "sweep-clip": _cmd_sweep_clip,
    "stats": _cmd_stats,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except SparseRepairError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
