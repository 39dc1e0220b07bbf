"""Label-free repair of pruned models from channelwise activation statistics.

Variants:
  none      -- return the pruned model untouched
  bn_only   -- batchnorm recalibration only
  bias_bn   -- per-channel mean-shift correction, then recalibration
  affine_bn -- per-channel least-squares output map, then recalibration
  asr_q50   -- variance-matching scale with median-variance shrinkage
  asr_clip  -- asr_q50 with the scale clamped to [clip_lo, clip_hi]

Every operation is forward-only and never sees labels; there is no backward
pass anywhere in this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, SparseRepairError
from .graph import INPUT, Model, _eval_node
from .stats import ChannelAccumulator, ChannelStats, NodeStats, paired_stats

NONE = "none"
BN_ONLY = "bn_only"
BIAS_BN = "bias_bn"
AFFINE_BN = "affine_bn"
ASR_Q50 = "asr_q50"
ASR_CLIP = "asr_clip"
VARIANTS = (NONE, BN_ONLY, BIAS_BN, AFFINE_BN, ASR_Q50, ASR_CLIP)


@dataclass
class RepairConfig:
    variant: str = ASR_Q50
    eps: float = 1e-8
    clip_lo: float = 0.5
    clip_hi: float = 2.0
    bn_recal_batches: int = 20
    sequential: bool = False
    batch_size: int = 32

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SparseRepairError(f"unknown repair variant {self.variant!r}")
        if self.eps <= 0:
            raise SparseRepairError(f"eps must be positive, got {self.eps}")
        if not 0 < self.clip_lo <= 1 <= self.clip_hi:
            raise SparseRepairError(
                f"clip bounds must satisfy 0 < lo <= 1 <= hi, got "
                f"[{self.clip_lo}, {self.clip_hi}]"
            )
        if self.bn_recal_batches < 1:
            raise SparseRepairError("bn_recal_batches must be >= 1")


@dataclass
class NodePlan:
    gamma_raw: np.ndarray
    rho: np.ndarray
    gamma_q50: np.ndarray
    gamma_final: np.ndarray
    bias_adjust: np.ndarray  # additive term mean_dense - gamma_final * mean_pruned


@dataclass
class RepairPlan:
    variant: str
    nodes: dict[str, NodePlan] = field(default_factory=dict)


def gamma_raw(var_dense, var_pruned, eps: float) -> np.ndarray:
    """Variance-matching scale: sqrt(var_dense / (var_pruned + eps))."""
    vd = np.asarray(var_dense, dtype=np.float64)
    vp = np.asarray(var_pruned, dtype=np.float64)
    if eps <= 0:
        raise SparseRepairError(f"eps must be positive, got {eps}")
    if np.any(vd < 0) or np.any(vp < 0):
        raise SparseRepairError("negative variance input (upstream bug)")
    return np.sqrt(vd / (vp + eps))


def asr_shrinkage(g_raw, var_pruned, lam: float):
    """Shrink the raw scale toward 1 with weight rho = v / (v + lam).

    rho -> 0 for the most damaged channels (no correction at the collapsed
    extreme) and -> 1 when the pruned variance dominates the prior lam.
    Channels with v = 0 take rho = 0 even when lam = 0 (the limit).
    """
    g = np.asarray(g_raw, dtype=np.float64)
    vp = np.asarray(var_pruned, dtype=np.float64)
    denom = vp + lam
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0.0, vp / denom, 0.0)
    return rho, rho * g + (1.0 - rho)


def shrink_q50(g_raw, var_pruned):
    """Median-variance shrinkage: lam is the median pruned variance across
    the node's channels (even count: mean of the two middle values)."""
    vp = np.asarray(var_pruned, dtype=np.float64)
    if vp.size < 1:
        raise SparseRepairError("shrinkage needs at least one channel")
    lam = float(np.median(vp))
    rho, g_q50 = asr_shrinkage(g_raw, vp, lam)
    return lam, rho, g_q50


def clip_gamma(g, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise SparseRepairError(f"clip bounds inverted: [{lo}, {hi}]")
    return np.clip(np.asarray(g, dtype=np.float64), lo, hi)


def apply_channel_repair(weight, bias, gamma, mean_dense, mean_pruned):
    """Rescale each output channel's surviving weights by gamma and adjust
    the bias so the repaired activation mean matches the dense mean:
    w' = gamma * w, b' = gamma * b + mean_dense - gamma * mean_pruned.
    A missing bias is treated as zero and the repaired bias inserted.
    Masked (zero) weights stay exactly zero."""
    gamma = np.asarray(gamma, dtype=np.float64)
    out_ch = weight.shape[0]
    if gamma.shape != (out_ch,):
        raise ShapeMismatch(
            f"gamma has {gamma.shape} entries for {out_ch} output channels"
        )
    if bias is None:
        bias = np.zeros(out_ch, dtype=np.float32)
    elif bias.shape != (out_ch,):
        raise ShapeMismatch(f"bias has {bias.shape} entries for {out_ch} channels")
    shape = (out_ch,) + (1,) * (weight.ndim - 1)
    new_w = (weight.astype(np.float64) * gamma.reshape(shape)).astype(np.float32)
    new_b = (
        gamma * bias.astype(np.float64)
        + np.asarray(mean_dense, dtype=np.float64)
        - gamma * np.asarray(mean_pruned, dtype=np.float64)
    ).astype(np.float32)
    return new_w, new_b


def affine_calibration(dense_acts, pruned_acts, eps: float = 1e-8):
    """Per-channel least squares fit of dense = a * pruned + b over paired
    NCHW activations: a = Cov(p, d) / (Var(p) + eps), b = mean_d - a * mean_p.
    Degenerate channels (Var(p) = 0) take a = 0, b = mean_d."""
    if dense_acts.shape != pruned_acts.shape:
        raise ShapeMismatch("paired activations must have identical dims")
    acc = ChannelAccumulator(dense_acts.shape[1], paired=True)
    acc.update(dense_acts, pruned_acts)
    mean_d, _, mean_p, var_p, cov = acc.paired_moments()
    return _affine_from_moments(mean_d, mean_p, var_p, cov, eps)


def _affine_from_moments(mean_d, mean_p, var_p, cov, eps):
    a = np.where(var_p > 0.0, cov / (var_p + eps), 0.0)
    b = mean_d - a * mean_p
    return a, b


def _repair_conv(model: Model, node_name: str, gamma, mean_d, mean_p) -> None:
    node = model.graph.node(node_name)
    wname = node.weight_refs["weight"]
    bias_ref = node.weight_refs.get("bias")
    bias = model.weights[bias_ref] if bias_ref else None
    new_w, new_b = apply_channel_repair(
        model.weights[wname], bias, gamma, mean_d, mean_p
    )
    model.weights[wname] = new_w
    if bias_ref is None:
        bias_ref = f"{node_name}.bias"
        if bias_ref in model.weights:
            raise SparseRepairError(f"cannot insert bias: {bias_ref!r} already exists")
        model.graph.replace_node(
            node_name, weight_refs={**node.weight_refs, "bias": bias_ref}
        )
    model.weights[bias_ref] = new_b


def bn_recalibrate(model: Model, calib: np.ndarray, num_batches: int = 20) -> Model:
    """Replace every batchnorm node's running statistics with the exact
    aggregate mean / population variance of its input over the calibration
    pool, presented as num_batches mini-batches. Each statistic is computed
    with all upstream batchnorms already recalibrated, so the stored values
    are consistent with the network's post-recalibration behavior. Learned
    scale/shift are untouched."""
    if not any(n.kind == "batchnorm2d" for n in model.graph.nodes):
        raise SparseRepairError("model has no batchnorm nodes to recalibrate")
    if num_batches < 1:
        raise SparseRepairError("num_batches must be >= 1")
    n = calib.shape[0]
    if n < num_batches:
        raise SparseRepairError(
            f"{n} calibration images cannot fill {num_batches} batches"
        )
    bounds = [i * n // num_batches for i in range(num_batches + 1)]
    out = model.copy()
    graph, weights = out.graph, out.weights

    last_use: dict[str, int] = {}
    for i, node in enumerate(graph.nodes):
        for src in node.inputs:
            last_use[src] = i

    envs = [{INPUT: calib[lo:hi]} for lo, hi in zip(bounds, bounds[1:])]
    for i, node in enumerate(graph.nodes):
        if node.kind == "batchnorm2d":
            src = node.inputs[0]
            acc = ChannelAccumulator(envs[0][src].shape[1])
            for env in envs:
                acc.update(env[src])
            mean, var = acc.moments()
            weights[node.weight_refs["running_mean"]] = mean.astype(np.float32)
            weights[node.weight_refs["running_var"]] = var.astype(np.float32)
        for env in envs:
            env[node.name] = _eval_node(node, [env[s] for s in node.inputs], weights)
            for src in node.inputs:
                if last_use.get(src) == i:
                    env.pop(src, None)
        if i == len(graph.nodes) - 1 or last_use.get(node.name, i) == i:
            for env in envs:
                env.pop(node.name, None)
    return out


def bias_correction(model: Model, stats: ChannelStats) -> Model:
    """Pure per-channel mean shift: b' = b + (mean_dense - mean_pruned)."""
    out = model.copy()
    for name, ns in stats.nodes.items():
        _repair_conv(out, name, np.ones_like(ns.mean_dense), ns.mean_dense, ns.mean_pruned)
    return out


def _asr_gammas(ns: NodeStats, config: RepairConfig):
    g_raw = gamma_raw(ns.var_dense, ns.var_pruned, config.eps)
    _, rho, g_q50 = shrink_q50(g_raw, ns.var_pruned)
    if config.variant == ASR_CLIP:
        g_final = clip_gamma(g_q50, config.clip_lo, config.clip_hi)
    else:
        g_final = g_q50
    return NodePlan(
        g_raw, rho, g_q50, g_final, ns.mean_dense - g_final * ns.mean_pruned
    )


def repair(dense_model: Model, pruned_model: Model, calib: np.ndarray,
           config: RepairConfig) -> tuple[Model, RepairPlan | None]:
    """Dispatch on config.variant. Inputs are untouched; returns a repaired
    copy plus the per-channel plan for ASR variants (None otherwise)."""
    if config.variant == NONE:
        return pruned_model.copy(), None
    if config.variant == BN_ONLY:
        return bn_recalibrate(pruned_model, calib, config.bn_recal_batches), None

    repaired = pruned_model.copy()
    plan = None
    if config.variant in (ASR_Q50, ASR_CLIP):
        plan = RepairPlan(config.variant)
        conv_names = [n.name for n in pruned_model.graph.conv_nodes()]
        if config.sequential:
            # Recompute pruned statistics after each node's correction so a
            # repaired layer feeds the measurement of the next one.
            for name in conv_names:
                stats = paired_stats(dense_model, repaired, calib, config.batch_size)
                node_plan = _asr_gammas(stats.nodes[name], config)
                plan.nodes[name] = node_plan
                ns = stats.nodes[name]
                _repair_conv(repaired, name, node_plan.gamma_final,
                             ns.mean_dense, ns.mean_pruned)
        else:
            stats = paired_stats(dense_model, pruned_model, calib, config.batch_size)
            for name in conv_names:
                ns = stats.nodes[name]
                node_plan = _asr_gammas(ns, config)
                plan.nodes[name] = node_plan
                _repair_conv(repaired, name, node_plan.gamma_final,
                             ns.mean_dense, ns.mean_pruned)
    elif config.variant == BIAS_BN:
        stats = paired_stats(dense_model, pruned_model, calib, config.batch_size)
        repaired = bias_correction(repaired, stats)
    elif config.variant == AFFINE_BN:
        stats = paired_stats(dense_model, pruned_model, calib, config.batch_size)
        for name, ns in stats.nodes.items():
            a, _ = _affine_from_moments(
                ns.mean_dense, ns.mean_pruned, ns.var_pruned, ns.cov, config.eps
            )
            _repair_conv(repaired, name, a, ns.mean_dense, ns.mean_pruned)

    repaired = bn_recalibrate(repaired, calib, config.bn_recal_batches)
    return repaired, plan


def dump_plan(plan: RepairPlan) -> str:
    """Structured-text dump of the per-channel scale factors."""
    lines = ["node,channel,gamma_raw,rho,gamma_q50,gamma_final"]
    for name, np_ in plan.nodes.items():
        for c in range(np_.gamma_raw.size):
            lines.append(
                f"{name},{c},{np_.gamma_raw[c]:.9g},{np_.rho[c]:.9g},"
                f"{np_.gamma_q50[c]:.9g},{np_.gamma_final[c]:.9g}"
            )
    return "\n".join(lines) + "\n"
