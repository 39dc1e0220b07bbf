"""Sparsity allocation (ERK / LAMP / uniform) and unstructured magnitude masks.

The prunable set is every conv2d and linear "weight" tensor; biases and
batchnorm parameters are never pruned. Masks are float32 tensors of 0.0/1.0
with the same dims as the weight, persisted in SPM under "<name>.mask".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, SparseRepairError
from .graph import Model

ERK = "erk"
LAMP = "lamp"
UNIFORM = "uniform"
ALLOCATIONS = (ERK, LAMP, UNIFORM)
PRUNABLE_KINDS = ("conv2d", "linear")


@dataclass
class AllocationPlan:
    densities: dict[str, float]  # weight tensor name -> density in (0, 1]
    allocation: str
    sparsity: float


def prunable_weights(model: Model) -> dict[str, np.ndarray]:
    """Prunable weight tensors keyed by tensor name, in graph order."""
    out = {}
    for node in model.graph.nodes:
        if node.kind in PRUNABLE_KINDS:
            name = node.weight_refs["weight"]
            out[name] = model.weights[name]
    return out


def _check_sparsity(s: float) -> None:
    if not 0.0 < s < 1.0:
        raise SparseRepairError(f"sparsity must be in (0, 1), got {s}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def erk_allocation(layer_shapes: dict[str, tuple], sparsity: float) -> AllocationPlan:
    """Shape-based density budget: raw score sum(dims)/prod(dims) per layer,
    scaled by a single global factor solved so the kept-weight budget equals
    (1 - sparsity) * total; layers whose scaled density would exceed 1 are
    capped at 1 and the factor re-solved over the rest (water-filling)."""
    _check_sparsity(sparsity)
    if not layer_shapes:
        raise SparseRepairError("erk allocation needs at least one prunable layer")
    sizes = {n: int(np.prod(shape)) for n, shape in layer_shapes.items()}
    scores = {n: float(np.sum(shape)) / np.prod(shape) for n, shape in layer_shapes.items()}
    total = sum(sizes.values())
    target_keep = (1.0 - sparsity) * total

    capped: set[str] = set()
    scale = 0.0
    for _ in range(len(layer_shapes) + 1):
        budget = target_keep - sum(sizes[n] for n in capped)
        free = [n for n in layer_shapes if n not in capped]
        if budget <= 0 or not free:
            raise SparseRepairError(
                f"infeasible erk budget at sparsity {sparsity}: "
                f"capped layers already hold {sum(sizes[n] for n in capped)} "
                f"of {target_keep:.1f} kept weights"
            )
        scale = budget / sum(scores[n] * sizes[n] for n in free)
        over = [n for n in free if scale * scores[n] > 1.0]
        if not over:
            break
        capped.update(over)
    densities = {
        n: 1.0 if n in capped else scale * scores[n] for n in layer_shapes
    }
    return AllocationPlan(densities, ERK, sparsity)


def uniform_allocation(layer_shapes: dict[str, tuple], sparsity: float) -> AllocationPlan:
    _check_sparsity(sparsity)
    if not layer_shapes:
        raise SparseRepairError("uniform allocation needs at least one prunable layer")
    return AllocationPlan({n: 1.0 - sparsity for n in layer_shapes}, UNIFORM, sparsity)


def _keep_counts(densities: dict[str, float], sizes: dict[str, int], sparsity: float):
    """Round per-layer keep counts half-up, then adjust the largest layer so
    the global kept total is exactly round((1 - s) * N)."""
    total = sum(sizes.values())
    target = _round_half_up((1.0 - sparsity) * total)
    keeps = {n: min(sizes[n], _round_half_up(densities[n] * sizes[n])) for n in sizes}
    excess = sum(keeps.values()) - target
    for n in sorted(sizes, key=lambda n: (-sizes[n], n)):
        if excess == 0:
            break
        adjusted = min(sizes[n], max(0, keeps[n] - excess))
        excess -= keeps[n] - adjusted
        keeps[n] = adjusted
    if excess != 0:
        raise SparseRepairError(f"could not hit keep budget {target} (off by {excess})")
    return keeps


def magnitude_mask(weights: dict[str, np.ndarray], plan: AllocationPlan) -> dict[str, np.ndarray]:
    """Per layer, keep the round(d * n) largest-magnitude weights. Ties are
    broken deterministically: the lowest flat index is kept first."""
    for name, d in plan.densities.items():
        if not 0.0 < d <= 1.0:
            raise SparseRepairError(f"layer {name!r}: density {d} outside (0, 1]")
        if name not in weights:
            raise ShapeMismatch(f"plan names unknown layer {name!r}")
    sizes = {n: weights[n].size for n in plan.densities}
    keeps = _keep_counts(plan.densities, sizes, plan.sparsity)
    masks = {}
    for name, w in weights.items():
        flat = np.abs(w.ravel())
        order = np.argsort(-flat, kind="stable")  # stable: low index first on ties
        mask = np.zeros(w.size, dtype=np.float32)
        mask[order[: keeps[name]]] = 1.0
        masks[name] = mask.reshape(w.shape)
    return masks


def lamp_scores(w: np.ndarray) -> np.ndarray:
    """Layer-adaptive magnitude score: w^2 over the sum of squares of all
    weights in the layer whose magnitude is >= |w|. All-zero entries score 0."""
    flat = w.ravel().astype(np.float64)
    mags = np.abs(flat)
    order = np.argsort(-mags, kind="stable")
    sq_desc = flat[order] ** 2
    cum = np.cumsum(sq_desc)
    mags_desc = mags[order]
    # count of weights with magnitude >= m, for each element's own magnitude
    ge = flat.size - np.searchsorted(mags_desc[::-1], mags_desc, side="left")
    denom = cum[ge - 1]
    with np.errstate(invalid="ignore"):
        scores_desc = np.where(denom > 0.0, sq_desc / denom, 0.0)
    scores = np.empty_like(scores_desc)
    scores[order] = scores_desc
    return scores.reshape(w.shape)


def lamp_mask(weights: dict[str, np.ndarray], sparsity: float) -> dict[str, np.ndarray]:
    """Globally prune the ceil(s * N) lowest-scoring weights across layers.
    Ties are resolved by (score, layer position, flat index) ascending."""
    _check_sparsity(sparsity)
    if not weights:
        raise SparseRepairError("lamp needs at least one prunable layer")
    names = list(weights)
    scores = np.concatenate([lamp_scores(weights[n]).ravel() for n in names])
    layer_ids = np.concatenate(
        [np.full(weights[n].size, i, dtype=np.int64) for i, n in enumerate(names)]
    )
    flat_ids = np.concatenate(
        [np.arange(weights[n].size, dtype=np.int64) for n in names]
    )
    n_prune = math.ceil(sparsity * scores.size)
    order = np.lexsort((flat_ids, layer_ids, scores))
    pruned = order[:n_prune]
    keep = np.ones(scores.size, dtype=np.float32)
    keep[pruned] = 0.0
    masks = {}
    pos = 0
    for n in names:
        size = weights[n].size
        masks[n] = keep[pos : pos + size].reshape(weights[n].shape).copy()
        pos += size
    return masks


def apply_mask(weights: dict[str, np.ndarray], masks: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = dict(weights)
    for name, mask in masks.items():
        if weights[name].shape != mask.shape:
            raise ShapeMismatch(f"mask for {name!r}: {mask.shape} vs {weights[name].shape}")
        out[name] = (weights[name] * mask).astype(np.float32)
    return out


def global_sparsity(masks: dict[str, np.ndarray]) -> float:
    """Fraction of weights zeroed across the masked (prunable) set."""
    if not masks:
        raise SparseRepairError("no masks to measure")
    total = sum(m.size for m in masks.values())
    kept = sum(int(m.sum()) for m in masks.values())
    return 1.0 - kept / total


def prune_model(model: Model, allocation: str, sparsity: float) -> Model:
    """Mask the model's prunable weights at the target global sparsity and
    store the masks alongside the weights under '<name>.mask'."""
    weights = prunable_weights(model)
    if allocation == ERK:
        plan = erk_allocation({n: w.shape for n, w in weights.items()}, sparsity)
        masks = magnitude_mask(weights, plan)
    elif allocation == UNIFORM:
        plan = uniform_allocation({n: w.shape for n, w in weights.items()}, sparsity)
        masks = magnitude_mask(weights, plan)
    elif allocation == LAMP:
        masks = lamp_mask(weights, sparsity)
    else:
        raise SparseRepairError(f"unknown allocation {allocation!r}")
    pruned = model.copy()
    for name, mask in masks.items():
        pruned.weights[name] = (pruned.weights[name] * mask).astype(np.float32)
        pruned.weights[f"{name}.mask"] = mask
    return pruned


def model_masks(model: Model) -> dict[str, np.ndarray]:
    """Masks stored in the container ('<name>.mask'), if any."""
    return {
        name[: -len(".mask")]: arr
        for name, arr in model.weights.items()
        if name.endswith(".mask")
    }
