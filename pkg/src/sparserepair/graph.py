"""Dense-tensor numerics and deterministic forward evaluation.

Activations are float32 numpy arrays in NCHW order; conv weights are OIHW.
All dot-product accumulation (conv, linear, pooling means) runs in float64
and is stored back as float32, so repeated forward calls are bit-identical
and downstream statistics stay stable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GraphError, ShapeMismatch

SUPPORTED_KINDS = (
    "conv2d",
    "batchnorm2d",
    "relu",
    "maxpool2d",
    "avgpool2d",
    "globalavgpool",
    "add",
    "flatten",
    "linear",
)

# Reserved predecessor name for the network input batch.
INPUT = "input"


@dataclass(frozen=True)
class LayerNode:
    name: str
    kind: str
    inputs: tuple[str, ...]
    params: dict = field(default_factory=dict)
    weight_refs: dict = field(default_factory=dict)


@dataclass
class ModelGraph:
    nodes: list[LayerNode]
    output: str
    metadata: dict = field(default_factory=dict)

    def node(self, name: str) -> LayerNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise GraphError(f"no node named {name!r}")

    def conv_nodes(self) -> list[LayerNode]:
        return [n for n in self.nodes if n.kind == "conv2d"]

    def replace_node(self, name: str, **changes) -> None:
        for i, n in enumerate(self.nodes):
            if n.name == name:
                self.nodes[i] = dataclasses.replace(n, **changes)
                return
        raise GraphError(f"no node named {name!r}")


@dataclass
class Model:
    """A graph plus its weight tensors, ready for forward evaluation."""

    graph: ModelGraph
    weights: dict[str, np.ndarray]

    def copy(self) -> "Model":
        g = ModelGraph(list(self.graph.nodes), self.graph.output, dict(self.graph.metadata))
        return Model(g, {k: v.copy() for k, v in self.weights.items()})

    @property
    def num_classes(self) -> int:
        return int(self.graph.metadata["num_classes"])


def _as_pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def validate_model(model: Model) -> None:
    """Check graph invariants: supported kinds, resolvable inputs/weights,
    topological order, exactly one output, sane weight shapes."""
    graph, weights = model.graph, model.weights
    if not graph.nodes:
        raise GraphError("graph has no nodes")
    seen: set[str] = set()
    for node in graph.nodes:
        if node.kind not in SUPPORTED_KINDS:
            raise GraphError(f"node {node.name!r}: unsupported kind {node.kind!r}")
        if node.name in seen or node.name == INPUT:
            raise GraphError(f"duplicate or reserved node name {node.name!r}")
        for src in node.inputs:
            if src != INPUT and src not in seen:
                raise GraphError(
                    f"node {node.name!r}: input {src!r} is not an earlier node"
                )
        for role, tname in node.weight_refs.items():
            if tname not in weights:
                raise GraphError(
                    f"node {node.name!r}: weight_ref {role}={tname!r} does not resolve"
                )
        if node.kind == "conv2d":
            w = weights[node.weight_refs["weight"]]
            if w.ndim != 4:
                raise GraphError(f"node {node.name!r}: conv weight must be 4-d (OIHW)")
        if node.kind == "batchnorm2d":
            lens = set()
            for role in ("scale", "shift", "running_mean", "running_var"):
                if role not in node.weight_refs:
                    raise GraphError(f"node {node.name!r}: batchnorm missing {role!r}")
                lens.add(weights[node.weight_refs[role]].shape)
            if len(lens) != 1:
                raise GraphError(f"node {node.name!r}: batchnorm tensor lengths differ")
        if node.kind == "add" and len(node.inputs) != 2:
            raise GraphError(f"node {node.name!r}: add takes exactly two inputs")
        seen.add(node.name)
    if graph.output not in seen:
        raise GraphError(f"output {graph.output!r} is not a node")
    for arr in weights.values():
        if arr.size == 0 or any(d < 1 for d in arr.shape):
            raise GraphError("weight tensor with zero extent")


def conv2d_forward(x, weight, bias=None, stride=1, padding=0, node="conv2d"):
    """Standard cross-correlation. x: (N,Cin,H,W), weight: (Cout,Cin,kh,kw)."""
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(padding)
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ShapeMismatch(
            f"node {node!r}: input has {cin} channels, weight expects {cin_w}", node
        )
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if oh <= 0 or ow <= 0:
        raise ShapeMismatch(
            f"node {node!r}: non-positive output dims {oh}x{ow} "
            f"for input {h}x{w}, kernel {kh}x{kw}, stride {sh}, padding {ph}",
            node,
        )
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # (N, Cin, oh, ow, kh, kw) view, then one f64 matmul over Cin*kh*kw.
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, cin * kh * kw)
    wmat = weight.reshape(cout, cin * kh * kw).astype(np.float64)
    out = cols.astype(np.float64) @ wmat.T
    if bias is not None:
        out += bias.astype(np.float64)
    return out.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2).astype(np.float32)


def linear_forward(x, weight, bias=None):
    out = x.astype(np.float64) @ weight.astype(np.float64).T
    if bias is not None:
        out += bias.astype(np.float64)
    return out.astype(np.float32)


def batchnorm_forward(x, scale, shift, running_mean, running_var, eps):
    m = running_mean.astype(np.float64)[:, None, None]
    v = running_var.astype(np.float64)[:, None, None]
    s = scale.astype(np.float64)[:, None, None]
    b = shift.astype(np.float64)[:, None, None]
    y = (x.astype(np.float64) - m) / np.sqrt(v + eps) * s + b
    return y.astype(np.float32)


def _pool_windows(x, kernel, stride, padding, fill):
    kh, kw = _as_pair(kernel)
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(padding)
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=fill)
    h, w = x.shape[2], x.shape[3]
    if h < kh or w < kw:
        raise ShapeMismatch(f"pool kernel {kh}x{kw} larger than input {h}x{w}")
    return sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]


def maxpool2d_forward(x, kernel, stride=None, padding=0):
    stride = kernel if stride is None else stride
    win = _pool_windows(x, kernel, stride, padding, np.float32(-np.inf))
    return win.max(axis=(4, 5))


def avgpool2d_forward(x, kernel, stride=None, padding=0):
    # Divisor is always kh*kw (padded zeros count), matching the usual default.
    stride = kernel if stride is None else stride
    win = _pool_windows(x, kernel, stride, padding, np.float32(0.0))
    return win.astype(np.float64).mean(axis=(4, 5)).astype(np.float32)


def globalavgpool_forward(x):
    return x.astype(np.float64).mean(axis=(2, 3), keepdims=True).astype(np.float32)


def _eval_node(node: LayerNode, inputs: list[np.ndarray], weights) -> np.ndarray:
    kind = node.kind
    p = node.params
    if kind == "conv2d":
        bias_ref = node.weight_refs.get("bias")
        return conv2d_forward(
            inputs[0],
            weights[node.weight_refs["weight"]],
            weights[bias_ref] if bias_ref else None,
            stride=p.get("stride", 1),
            padding=p.get("padding", 0),
            node=node.name,
        )
    if kind == "batchnorm2d":
        r = node.weight_refs
        x = inputs[0]
        if x.shape[1] != weights[r["scale"]].shape[0]:
            raise ShapeMismatch(
                f"node {node.name!r}: {x.shape[1]} channels vs "
                f"{weights[r['scale']].shape[0]} batchnorm parameters",
                node.name,
            )
        return batchnorm_forward(
            x, weights[r["scale"]], weights[r["shift"]],
            weights[r["running_mean"]], weights[r["running_var"]],
            p.get("eps", 1e-5),
        )
    if kind == "relu":
        return np.maximum(inputs[0], np.float32(0.0))
    if kind == "maxpool2d":
        return maxpool2d_forward(
            inputs[0], p["kernel"], p.get("stride"), p.get("padding", 0)
        )
    if kind == "avgpool2d":
        return avgpool2d_forward(
            inputs[0], p["kernel"], p.get("stride"), p.get("padding", 0)
        )
    if kind == "globalavgpool":
        return globalavgpool_forward(inputs[0])
    if kind == "add":
        a, b = inputs
        if a.shape != b.shape:
            raise ShapeMismatch(
                f"node {node.name!r}: add inputs {a.shape} vs {b.shape}", node.name
            )
        return a + b
    if kind == "flatten":
        return np.ascontiguousarray(inputs[0].reshape(inputs[0].shape[0], -1))
    if kind == "linear":
        x = inputs[0]
        w = weights[node.weight_refs["weight"]]
        if x.ndim != 2 or x.shape[1] != w.shape[1]:
            raise ShapeMismatch(
                f"node {node.name!r}: linear expects (N,{w.shape[1]}), got {x.shape}",
                node.name,
            )
        bias_ref = node.weight_refs.get("bias")
        return linear_forward(x, w, weights[bias_ref] if bias_ref else None)
    raise GraphError(f"node {node.name!r}: unsupported kind {kind!r}")


def forward(model: Model, batch: np.ndarray, taps=()):
    """Evaluate the graph on a batch.

    Returns (logits, tapped) where tapped maps each requested conv2d node name
    to its output (the pre-batchnorm activation when a batchnorm follows).
    """
    graph, weights = model.graph, model.weights
    taps = set(taps)
    known = {n.name: n for n in graph.nodes}
    for t in taps:
        if t not in known:
            raise GraphError(f"unknown tap name {t!r}")
        if known[t].kind != "conv2d":
            raise GraphError(f"tap {t!r} is a {known[t].kind} node, not conv2d")

    if batch.ndim != 4:
        raise ShapeMismatch(f"input batch must be 4-d NCHW, got {batch.shape}")
    expect = graph.metadata.get("input_dims")
    if expect is not None and tuple(batch.shape[1:]) != tuple(expect):
        raise ShapeMismatch(
            f"input dims {tuple(batch.shape[1:])} do not match model spec {tuple(expect)}"
        )
    if batch.dtype != np.float32:
        batch = batch.astype(np.float32)

    # Free intermediate activations after their last consumer.
    last_use: dict[str, int] = {}
    for i, node in enumerate(graph.nodes):
        for src in node.inputs:
            last_use[src] = i

    env: dict[str, np.ndarray] = {INPUT: batch}
    tapped: dict[str, np.ndarray] = {}
    for i, node in enumerate(graph.nodes):
        ins = [env[s] for s in node.inputs]
        out = _eval_node(node, ins, weights)
        env[node.name] = out
        if node.name in taps:
            tapped[node.name] = out
        for src in node.inputs:
            if last_use.get(src) == i and src != graph.output:
                env.pop(src, None)
    return env[graph.output], tapped
