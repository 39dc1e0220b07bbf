"""Accuracy evaluation and experiment grids over allocation x sparsity x repair.

The grid driver follows one protocol per cell: allocate, prune, repair,
evaluate. The pruned model is built once per (allocation, sparsity) pair and
shared by every repair variant, and every cell uses the same seed, so the
allocation scheme is the only varying factor along that axis. Rows are
emitted in spec order; a failing cell becomes an error row and the grid
continues.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .allocate import ALLOCATIONS, ERK, LAMP, prune_model
from .errors import ShapeMismatch, SparseRepairError
from .graph import Model, forward
from .repair import ASR_CLIP, VARIANTS, RepairConfig, repair

DEFAULT_CLIP_BOUNDS = ((0.25, 4.0), (0.5, 2.0), (0.67, 1.5), (0.8, 1.25))

CSV_HEADER = "arch,dataset,sparsity,alloc,variant,clip_lo,clip_hi,accuracy,seed,runtime_ms"


@dataclass
class RunReport:
    arch: str
    dataset: str
    sparsity: float
    alloc: str
    variant: str
    clip_lo: float | None
    clip_hi: float | None
    accuracy: float  # percent; NaN for an error row
    calib_size: int
    seed: int
    runtime_ms: int
    error: str | None = None


@dataclass
class SweepSpec:
    sparsities: tuple = (0.90, 0.95)
    allocations: tuple = (ERK, LAMP)
    variants: tuple = ("bn_only", "asr_q50", "asr_clip")
    clip_bounds: tuple = DEFAULT_CLIP_BOUNDS
    seed: int = 0
    eps: float = 1e-8
    clip_lo: float = 0.5
    clip_hi: float = 2.0
    bn_recal_batches: int = 20
    batch_size: int = 32
    sequential: bool = False
    timings: bool = False

    def __post_init__(self):
        if not self.sparsities or not self.allocations or not self.variants:
            raise SparseRepairError("sweep lists must be non-empty")
        for s in self.sparsities:
            if not 0.0 < s < 1.0:
                raise SparseRepairError(f"sparsity must lie in (0, 1), got {s}")
        for a in self.allocations:
            if a not in ALLOCATIONS:
                raise SparseRepairError(f"unknown allocation {a!r}")
        for v in self.variants:
            if v not in VARIANTS:
                raise SparseRepairError(f"unknown repair variant {v!r}")
        for lo, hi in self.clip_bounds:
            if not 0 < lo <= 1 <= hi:
                raise SparseRepairError(f"invalid clip bounds [{lo}, {hi}]")

    def config_for(self, variant: str, bounds=None) -> RepairConfig:
        lo, hi = bounds if bounds is not None else (self.clip_lo, self.clip_hi)
        return RepairConfig(
            variant=variant, eps=self.eps, clip_lo=lo, clip_hi=hi,
            bn_recal_batches=self.bn_recal_batches, sequential=self.sequential,
            batch_size=self.batch_size,
        )


def evaluate(model: Model, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 256) -> float:
    """Top-1 accuracy in percent. Argmax ties resolve to the lowest class
    index; evaluation order is fixed, so repeat calls are bit-identical."""
    if images.shape[0] != labels.shape[0]:
        raise ShapeMismatch(
            f"{labels.shape[0]} labels for {images.shape[0]} images"
        )
    if labels.ndim != 1:
        raise ShapeMismatch("labels must be a 1-d class-index array")
    n = images.shape[0]
    correct = 0
    for lo in range(0, n, batch_size):
        logits, _ = forward(model, images[lo:lo + batch_size])
        correct += int(np.sum(np.argmax(logits, axis=1) == labels[lo:lo + batch_size]))
    return 100.0 * correct / n


def _model_tags(model: Model) -> tuple[str, str]:
    meta = model.graph.metadata
    return str(meta.get("arch", "unknown")), str(meta.get("dataset", "unknown"))


def _run_cell(dense: Model, pruned: Model, calib, test_x, test_y,
              spec: SweepSpec, sparsity, alloc, variant, bounds) -> RunReport:
    arch, dataset = _model_tags(dense)
    lo, hi = (bounds if bounds is not None else (spec.clip_lo, spec.clip_hi)) \
        if variant == ASR_CLIP else (None, None)
    start = time.perf_counter()
    try:
        config = spec.config_for(variant, bounds)
        repaired, _ = repair(dense, pruned, calib, config)
        acc = evaluate(repaired, test_x, test_y)
        err = None
    except SparseRepairError as exc:
        acc, err = float("nan"), str(exc)
    ms = int(round((time.perf_counter() - start) * 1000)) if spec.timings else 0
    return RunReport(arch, dataset, sparsity, alloc, variant, lo, hi,
                     acc, calib.shape[0], spec.seed, ms, err)


def run_grid(dense: Model, calib: np.ndarray, test_images: np.ndarray,
             test_labels: np.ndarray, spec: SweepSpec) -> list[RunReport]:
    """One report per (allocation, sparsity, variant) cell, in that nesting
    order. Pruning happens once per (allocation, sparsity) and the result is
    shared across variants."""
    reports = []
    for alloc in spec.allocations:
        for sparsity in spec.sparsities:
            try:
                pruned = prune_model(dense, alloc, sparsity)
            except SparseRepairError as exc:
                arch, dataset = _model_tags(dense)
                for variant in spec.variants:
                    lo, hi = (spec.clip_lo, spec.clip_hi) if variant == ASR_CLIP \
                        else (None, None)
                    reports.append(RunReport(
                        arch, dataset, sparsity, alloc, variant, lo, hi,
                        float("nan"), calib.shape[0], spec.seed, 0, str(exc)))
                continue
            for variant in spec.variants:
                reports.append(_run_cell(dense, pruned, calib, test_images,
                                         test_labels, spec, sparsity, alloc,
                                         variant, None))
    return reports


def clip_sensitivity(dense: Model, calib: np.ndarray, test_images: np.ndarray,
                     test_labels: np.ndarray, spec: SweepSpec) -> list[RunReport]:
    """Clipped-scale sensitivity sweep: one report per (clip-bound config,
    allocation, sparsity), repair variant fixed to asr_clip."""
    if not spec.clip_bounds:
        raise SparseRepairError("clip bounds list must be non-empty")
    reports = []
    for bounds in spec.clip_bounds:
        for alloc in spec.allocations:
            for sparsity in spec.sparsities:
                try:
                    pruned = prune_model(dense, alloc, sparsity)
                except SparseRepairError as exc:
                    arch, dataset = _model_tags(dense)
                    reports.append(RunReport(
                        arch, dataset, sparsity, alloc, ASR_CLIP, bounds[0],
                        bounds[1], float("nan"), calib.shape[0], spec.seed,
                        0, str(exc)))
                    continue
                reports.append(_run_cell(dense, pruned, calib, test_images,
                                         test_labels, spec, sparsity, alloc,
                                         ASR_CLIP, bounds))
    return reports


def reports_to_csv(reports: list[RunReport]) -> str:
    """Fixed-schema CSV. Clip columns are empty for non-clipped variants and
    the accuracy column reads `error` for failed cells."""
    lines = [CSV_HEADER]
    for r in reports:
        clip_lo = "" if r.clip_lo is None else f"{r.clip_lo:g}"
        clip_hi = "" if r.clip_hi is None else f"{r.clip_hi:g}"
        acc = "error" if r.error is not None else f"{r.accuracy:.2f}"
        lines.append(
            f"{r.arch},{r.dataset},{r.sparsity:g},{r.alloc},{r.variant},"
            f"{clip_lo},{clip_hi},{acc},{r.seed},{r.runtime_ms}"
        )
    return "\n".join(lines) + "\n"
