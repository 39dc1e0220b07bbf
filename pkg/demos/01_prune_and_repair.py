"""Walkthrough: prune the bundled CNN hard, watch it collapse, repair it
with nothing but unlabeled calibration images.

Run from the repository root:
    python3 demos/01_prune_and_repair.py
"""

from pathlib import Path

import numpy as np

import sparserepair as sr

FIX = Path(__file__).resolve().parent.parent / "fixtures"
EVAL_N = 800  # enough test images for stable percentages, small enough to be quick


def main():
    dense = sr.load_model(FIX / "fixture_cnn.spm")
    calib = sr.load_tns(FIX / "calib.tns")
    images = sr.load_tns(FIX / "test_images.tns")[:EVAL_N]
    labels = sr.load_tns(FIX / "test_labels.tns").astype(np.int64)[:EVAL_N]

    print(f"dense model: {sr.evaluate(dense, images, labels):.2f}% top-1")

    pruned = sr.prune_model(dense, sr.ERK, 0.95)
    masks = sr.model_masks(pruned)
    print(f"pruned to {sr.global_sparsity(masks):.4f} global sparsity (erk)")
    for name, m in masks.items():
        print(f"  {name}: keeps {int(m.sum())} of {m.size} ({m.mean():.3f})")
    print(f"no repair: {sr.evaluate(pruned, images, labels):.2f}% "
          "(chance is 10%)")

    # calibration images only; labels never enter the repair path
    cfg = sr.RepairConfig(variant="asr_q50")
    repaired, plan = sr.repair(dense, pruned, calib, cfg)
    print(f"asr_q50 + batchnorm recalibration: "
          f"{sr.evaluate(repaired, images, labels):.2f}%")

    print("\nper-channel correction factors (first conv, first 5 channels):")
    np1 = plan.nodes["conv1"]
    for ch in range(5):
        print(f"  ch{ch}: gamma_raw={np1.gamma_raw[ch]:.3f} "
              f"rho={np1.rho[ch]:.3f} -> gamma={np1.gamma_final[ch]:.3f}")

    bn_only, _ = sr.repair(dense, pruned, calib,
                           sr.RepairConfig(variant="bn_only"))
    print(f"\nbn recalibration alone: "
          f"{sr.evaluate(bn_only, images, labels):.2f}%")


if __name__ == "__main__":
    main()
