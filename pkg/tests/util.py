"""Shared builders for small randomized test models."""

from __future__ import annotations

import numpy as np

from sparserepair import LayerNode, Model, ModelGraph


def _bn_tensors(prefix, ch, rng):
    return {
        f"{prefix}.scale": (0.5 + rng.random(ch)).astype(np.float32),
        f"{prefix}.shift": rng.normal(size=ch).astype(np.float32),
        f"{prefix}.running_mean": rng.normal(size=ch).astype(np.float32),
        f"{prefix}.running_var": (0.5 + rng.random(ch)).astype(np.float32),
    }


def _bn_node(name, src, ch):
    return LayerNode(name, "batchnorm2d", (src,), {"eps": 1e-5}, {
        "scale": f"{name}.scale", "shift": f"{name}.shift",
        "running_mean": f"{name}.running_mean", "running_var": f"{name}.running_var",
    })


def two_block_cnn(seed=0, in_ch=3, c1=6, c2=8, classes=4, hw=8, bias=True,
                  scale=1.0):
    """conv-bn-relu, conv-bn-relu (stride 2), gap, flatten, linear."""
    rng = np.random.default_rng(seed)
    nodes = [
        LayerNode("conv1", "conv2d", ("input",), {"stride": 1, "padding": 1},
                  {"weight": "conv1.weight"} | ({"bias": "conv1.bias"} if bias else {})),
        _bn_node("bn1", "conv1", c1),
        LayerNode("relu1", "relu", ("bn1",)),
        LayerNode("conv2", "conv2d", ("relu1",), {"stride": 2, "padding": 1},
                  {"weight": "conv2.weight"} | ({"bias": "conv2.bias"} if bias else {})),
        _bn_node("bn2", "conv2", c2),
        LayerNode("relu2", "relu", ("bn2",)),
        LayerNode("gap", "globalavgpool", ("relu2",)),
        LayerNode("flat", "flatten", ("gap",)),
        LayerNode("fc", "linear", ("flat",), {}, {"weight": "fc.weight", "bias": "fc.bias"}),
    ]
    weights = {
        "conv1.weight": (scale * rng.normal(size=(c1, in_ch, 3, 3))).astype(np.float32),
        "conv2.weight": (scale * rng.normal(size=(c2, c1, 3, 3))).astype(np.float32),
        "fc.weight": rng.normal(size=(classes, c2)).astype(np.float32),
        "fc.bias": rng.normal(size=classes).astype(np.float32),
    }
    if bias:
        weights["conv1.bias"] = rng.normal(size=c1).astype(np.float32)
        weights["conv2.bias"] = rng.normal(size=c2).astype(np.float32)
    weights |= _bn_tensors("bn1", c1, rng)
    weights |= _bn_tensors("bn2", c2, rng)
    graph = ModelGraph(nodes, "fc", {
        "num_classes": classes, "input_dims": [in_ch, hw, hw],
        "arch": "twoblock", "dataset": "synth",
    })
    return Model(graph, weights)


def residual_cnn(seed=0, in_ch=3, ch=6, classes=4, hw=8):
    """One residual add plus both pooling kinds, for full-kind coverage."""
    rng = np.random.default_rng(seed)
    nodes = [
        LayerNode("conv1", "conv2d", ("input",), {"stride": 1, "padding": 1},
                  {"weight": "conv1.weight", "bias": "conv1.bias"}),
        _bn_node("bn1", "conv1", ch),
        LayerNode("relu1", "relu", ("bn1",)),
        LayerNode("conv2", "conv2d", ("relu1",), {"stride": 1, "padding": 1},
                  {"weight": "conv2.weight"}),
        _bn_node("bn2", "conv2", ch),
        LayerNode("add1", "add", ("bn2", "relu1")),
        LayerNode("relu2", "relu", ("add1",)),
        LayerNode("maxp", "maxpool2d", ("relu2",), {"kernel": 2}),
        LayerNode("avgp", "avgpool2d", ("maxp",), {"kernel": 2, "stride": 1, "padding": 1}),
        LayerNode("gap", "globalavgpool", ("avgp",)),
        LayerNode("flat", "flatten", ("gap",)),
        LayerNode("fc", "linear", ("flat",), {}, {"weight": "fc.weight", "bias": "fc.bias"}),
    ]
    weights = {
        "conv1.weight": rng.normal(size=(ch, in_ch, 3, 3)).astype(np.float32),
        "conv1.bias": rng.normal(size=ch).astype(np.float32),
        "conv2.weight": rng.normal(size=(ch, ch, 3, 3)).astype(np.float32),
        "fc.weight": rng.normal(size=(classes, ch)).astype(np.float32),
        "fc.bias": rng.normal(size=classes).astype(np.float32),
    }
    weights |= _bn_tensors("bn1", ch, rng)
    weights |= _bn_tensors("bn2", ch, rng)
    graph = ModelGraph(nodes, "fc", {
        "num_classes": classes, "input_dims": [in_ch, hw, hw],
        "arch": "resblock", "dataset": "synth",
    })
    return Model(graph, weights)


def bn_free_cnn(seed=0, in_ch=3, ch=6, classes=4, hw=8):
    """conv-relu-gap-flatten-linear classifier with no batchnorm anywhere."""
    rng = np.random.default_rng(seed)
    nodes = [
        LayerNode("conv1", "conv2d", ("input",), {"stride": 1, "padding": 1},
                  {"weight": "conv1.weight", "bias": "conv1.bias"}),
        LayerNode("relu1", "relu", ("conv1",)),
        LayerNode("gap", "globalavgpool", ("relu1",)),
        LayerNode("flat", "flatten", ("gap",)),
        LayerNode("fc", "linear", ("flat",), {}, {"weight": "fc.weight", "bias": "fc.bias"}),
    ]
    weights = {
        "conv1.weight": rng.normal(size=(ch, in_ch, 3, 3)).astype(np.float32),
        "conv1.bias": rng.normal(size=ch).astype(np.float32),
        "fc.weight": rng.normal(size=(classes, ch)).astype(np.float32),
        "fc.bias": rng.normal(size=classes).astype(np.float32),
    }
    graph = ModelGraph(nodes, "fc", {
        "num_classes": classes, "input_dims": [in_ch, hw, hw],
        "arch": "bnfree", "dataset": "synth",
    })
    return Model(graph, weights)


def single_conv_model(seed=0, in_ch=3, out_ch=8, hw=16, bias=True, padding=1):
    """Bare conv whose output is the network output, for layer-local tests."""
    rng = np.random.default_rng(seed)
    refs = {"weight": "conv.weight"} | ({"bias": "conv.bias"} if bias else {})
    nodes = [LayerNode("conv", "conv2d", ("input",),
                       {"stride": 1, "padding": padding}, refs)]
    weights = {"conv.weight": rng.normal(size=(out_ch, in_ch, 3, 3)).astype(np.float32)}
    if bias:
        weights["conv.bias"] = rng.normal(size=out_ch).astype(np.float32)
    graph = ModelGraph(nodes, "conv", {"input_dims": [in_ch, hw, hw]})
    return Model(graph, weights)


def rand_images(seed, n, ch=3, hw=8):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, ch, hw, hw)).astype(np.float32)
