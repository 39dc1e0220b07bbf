"""Prune a dense CNN, then repair it without labels.

The package covers the full loop: load a dense model, allocate per-layer
sparsity (ERK or LAMP), mask the smallest weights, measure per-channel
activation statistics on unlabeled calibration images, rescale surviving
channels so their output statistics match the dense model again, and score
the result. Everything runs on plain numpy arrays with a deterministic
forward engine; no deep-learning framework is required at repair time.
"""

from .allocate import (ALLOCATIONS, ERK, LAMP, UNIFORM, AllocationPlan,
                       apply_mask, erk_allocation, global_sparsity,
                       lamp_mask, lamp_scores, magnitude_mask, model_masks,
                       prune_model, uniform_allocation)
from .errors import FormatError, GraphError, ShapeMismatch, SparseRepairError
from .evaluate import (CSV_HEADER, DEFAULT_CLIP_BOUNDS, RunReport, SweepSpec,
                       clip_sensitivity, evaluate, reports_to_csv, run_grid)
from .graph import INPUT, LayerNode, Model, ModelGraph, forward, validate_model
from .modelio import load_model, load_tns, save_model, save_tns
from .repair import (VARIANTS, NodePlan, RepairConfig, RepairPlan,
                     affine_calibration, apply_channel_repair, asr_shrinkage,
                     bias_correction, bn_recalibrate, clip_gamma, dump_plan,
                     gamma_raw, repair, shrink_q50)
from .stats import (ChannelAccumulator, ChannelStats, NodeStats,
                    collect_stats, dump_stats, paired_stats)

__version__ = "0.1.0"

__all__ = [
    "ALLOCATIONS", "ERK", "LAMP", "UNIFORM", "AllocationPlan", "apply_mask",
    "erk_allocation", "global_sparsity", "lamp_mask", "lamp_scores",
    "magnitude_mask", "model_masks", "prune_model", "uniform_allocation",
    "FormatError", "GraphError", "ShapeMismatch", "SparseRepairError",
    "CSV_HEADER", "DEFAULT_CLIP_BOUNDS", "RunReport", "SweepSpec", "clip_sensitivity",
    "evaluate", "reports_to_csv", "run_grid",
    "INPUT", "LayerNode", "Model", "ModelGraph", "forward", "validate_model",
    "load_model", "load_tns", "save_model", "save_tns",
    "VARIANTS", "NodePlan", "RepairConfig", "RepairPlan",
    "affine_calibration", "apply_channel_repair", "asr_shrinkage",
    "bias_correction", "bn_recalibrate", "clip_gamma", "dump_plan",
    "gamma_raw", "repair", "shrink_q50",
    "ChannelAccumulator", "ChannelStats", "NodeStats", "collect_stats",
    "dump_stats", "paired_stats",
    "__version__",
]
