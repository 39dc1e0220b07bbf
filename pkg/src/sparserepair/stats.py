"""Per-channel pre-batchnorm activation statistics over a calibration set.

Moments are accumulated streaming in float64 (chunked Welford merges), so the
result is independent of batch size. Variances are population variances over
all (image, spatial) positions of a channel, matching the batchnorm convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, SparseRepairError
from .graph import Model, forward


class ChannelAccumulator:
    """Streaming mean/variance per channel, with an optional paired stream
    for the cross moment needed by affine calibration."""

    def __init__(self, channels: int, paired: bool = False):
        self.count = 0
        self.mean = np.zeros(channels, dtype=np.float64)
        self.m2 = np.zeros(channels, dtype=np.float64)
        self.paired = paired
        if paired:
            self.mean_b = np.zeros(channels, dtype=np.float64)
            self.m2_b = np.zeros(channels, dtype=np.float64)
            self.c2 = np.zeros(channels, dtype=np.float64)

    @staticmethod
    def _batch_moments(x: np.ndarray):
        # x: (N, C, H, W) -> per-channel n, mean, sum of squared deviations
        a = x.astype(np.float64).transpose(1, 0, 2, 3).reshape(x.shape[1], -1)
        n = a.shape[1]
        mean = a.mean(axis=1)
        m2 = ((a - mean[:, None]) ** 2).sum(axis=1)
        return n, mean, m2, a

    def update(self, x: np.ndarray, y: np.ndarray | None = None) -> None:
        n_b, mean_b, m2_b, a = self._batch_moments(x)
        if self.paired:
            if y is None or y.shape != x.shape:
                raise ShapeMismatch("paired accumulator needs matching activations")
            _, ymean_b, ym2_b, b = self._batch_moments(y)
            c2_b = ((a - mean_b[:, None]) * (b - ymean_b[:, None])).sum(axis=1)
        n = self.count
        tot = n + n_b
        delta = mean_b - self.mean
        self.mean += delta * (n_b / tot)
        self.m2 += m2_b + delta**2 * (n * n_b / tot)
        if self.paired:
            delta_b = ymean_b - self.mean_b
            self.mean_b += delta_b * (n_b / tot)
            self.m2_b += ym2_b + delta_b**2 * (n * n_b / tot)
            self.c2 += c2_b + delta * delta_b * (n * n_b / tot)
        self.count = tot

    def moments(self):
        if self.count < 1:
            raise SparseRepairError("no samples accumulated")
        return self.mean.copy(), self.m2 / self.count

    def paired_moments(self):
        mean, var = self.moments()
        return mean, var, self.mean_b.copy(), self.m2_b / self.count, self.c2 / self.count


@dataclass
class NodeStats:
    count: int
    mean_dense: np.ndarray
    var_dense: np.ndarray
    mean_pruned: np.ndarray
    var_pruned: np.ndarray
    cov: np.ndarray  # population Cov(dense, pruned) per channel


@dataclass
class ChannelStats:
    """Paired dense/pruned moments keyed by conv node name."""

    nodes: dict[str, NodeStats] = field(default_factory=dict)


def _check_calib(calib: np.ndarray) -> None:
    if calib.ndim != 4:
        raise ShapeMismatch(f"calibration set must be (n, C, H, W), got {calib.shape}")
    if calib.shape[0] < 2:
        raise SparseRepairError(
            f"calibration set has {calib.shape[0]} images; variance needs at least 2"
        )


def _batches(n: int, batch_size: int):
    for lo in range(0, n, batch_size):
        yield lo, min(lo + batch_size, n)


def collect_stats(model: Model, calib: np.ndarray, batch_size: int = 32, nodes=None):
    """Mean and population variance of every conv2d node's output channels,
    streamed over the calibration set. Returns {node: (count, mean, var)}."""
    _check_calib(calib)
    taps = list(nodes) if nodes is not None else [n.name for n in model.graph.conv_nodes()]
    accs: dict[str, ChannelAccumulator] = {}
    for lo, hi in _batches(calib.shape[0], batch_size):
        _, tapped = forward(model, calib[lo:hi], taps=taps)
        for name, act in tapped.items():
            if np.isnan(act).any():
                raise SparseRepairError(f"NaN activations at node {name!r}")
            if name not in accs:
                accs[name] = ChannelAccumulator(act.shape[1])
            accs[name].update(act)
    out = {}
    for name in taps:
        mean, var = accs[name].moments()
        out[name] = (accs[name].count, mean, var)
    return out


def paired_stats(dense_model: Model, pruned_model: Model, calib: np.ndarray,
                 batch_size: int = 32) -> ChannelStats:
    """Dense and pruned moments over identical calibration batches in
    identical order, merged under identical (node, channel) keys."""
    _check_calib(calib)
    d_nodes = [(n.name, n.kind) for n in dense_model.graph.nodes]
    p_nodes = [(n.name, n.kind) for n in pruned_model.graph.nodes]
    if d_nodes != p_nodes:
        raise SparseRepairError("dense and pruned models have different topologies")
    taps = [n.name for n in dense_model.graph.conv_nodes()]
    accs: dict[str, ChannelAccumulator] = {}
    for lo, hi in _batches(calib.shape[0], batch_size):
        batch = calib[lo:hi]
        _, tap_d = forward(dense_model, batch, taps=taps)
        _, tap_p = forward(pruned_model, batch, taps=taps)
        for name in taps:
            ad, ap = tap_d[name], tap_p[name]
            if np.isnan(ad).any() or np.isnan(ap).any():
                raise SparseRepairError(f"NaN activations at node {name!r}")
            if name not in accs:
                accs[name] = ChannelAccumulator(ad.shape[1], paired=True)
            accs[name].update(ad, ap)
    stats = ChannelStats()
    for name in taps:
        mean_d, var_d, mean_p, var_p, cov = accs[name].paired_moments()
        stats.nodes[name] = NodeStats(
            accs[name].count, mean_d, var_d, mean_p, var_p, cov
        )
    return stats


def dump_stats(stats: ChannelStats) -> str:
    """Structured-text dump: one line per (node, channel)."""
    lines = ["node,channel,mean_dense,var_dense,mean_pruned,var_pruned"]
    for name, ns in stats.nodes.items():
        for c in range(ns.mean_dense.size):
            lines.append(
                f"{name},{c},{ns.mean_dense[c]:.9g},{ns.var_dense[c]:.9g},"
                f"{ns.mean_pruned[c]:.9g},{ns.var_pruned[c]:.9g}"
            )
    return "\n".join(lines) + "\n"
