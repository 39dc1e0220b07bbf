"""Command line entry points for fixture and full-scale export."""

from __future__ import annotations

import argparse
import sys

from .export import export_fixture


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spmexport")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="train and export the fixture CNN artifact set")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--train-n", type=int, default=8000)
    p.add_argument("--test-n", type=int, default=2000)
    p.add_argument("--calib-n", type=int, default=128)
    p.add_argument("--min-accuracy", type=float, default=95.0)

    p = sub.add_parser("resnet18", help="export a ResNet-18 (full-scale path)")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--input-hw", type=int, default=32)
    p.add_argument("--enable-full-scale", action="store_true",
                   help="required; this path is best-effort and off by default")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fixture":
        sidecar = export_fixture(args.out_dir, seed=args.seed, epochs=args.epochs,
                                 train_n=args.train_n, test_n=args.test_n,
                                 calib_n=args.calib_n,
                                 min_accuracy=args.min_accuracy)
        print(f"exported fixture to {args.out_dir} "
              f"(test accuracy {sidecar['accuracy']:.2f}%)")
        return 0
    if args.command == "resnet18":
        if not args.enable_full_scale:
            print("error: resnet18 export requires --enable-full-scale",
                  file=sys.stderr)
            return 1
        from .resnet import export_resnet18
        export_resnet18(args.out, checkpoint=args.checkpoint,
                        num_classes=args.num_classes, input_hw=args.input_hw)
        print(f"exported resnet18 to {args.out}")
        return 0
    return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
