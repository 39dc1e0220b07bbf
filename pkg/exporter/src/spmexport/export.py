"""Export trained models plus data splits and recorded ground truth."""

from __future__ import annotations

import json
import os

import numpy as np

from . import formats, task
from .fixture import FixtureCNN, accuracy, predict, reestimate_bn, train_fixture

SIDECAR_VERSION = 1
NUM_PROBES = 16


def fixture_graph(model: FixtureCNN) -> tuple[list[dict], str, dict, dict]:
    """Describe the fixture net in container terms: node list, output node,
    metadata, and the tensor dictionary (torch BN weight/bias become
    scale/shift)."""
    t = {name: p.detach().numpy().astype(np.float32)
         for name, p in model.state_dict().items()}
    tensors = {
        "conv1.weight": t["conv1.weight"], "conv1.bias": t["conv1.bias"],
        "conv2.weight": t["conv2.weight"], "conv2.bias": t["conv2.bias"],
        "fc.weight": t["fc.weight"], "fc.bias": t["fc.bias"],
    }
    for bn in ("bn1", "bn2"):
        tensors[f"{bn}.scale"] = t[f"{bn}.weight"]
        tensors[f"{bn}.shift"] = t[f"{bn}.bias"]
        tensors[f"{bn}.running_mean"] = t[f"{bn}.running_mean"]
        tensors[f"{bn}.running_var"] = t[f"{bn}.running_var"]

    def bn_node(name, src):
        return {"name": name, "kind": "batchnorm2d", "inputs": [src],
                "params": {"eps": 1e-5},
                "weight_refs": {k: f"{name}.{k}" for k in
                                ("scale", "shift", "running_mean", "running_var")}}

    nodes = [
        {"name": "conv1", "kind": "conv2d", "inputs": ["input"],
         "params": {"stride": 1, "padding": 1},
         "weight_refs": {"weight": "conv1.weight", "bias": "conv1.bias"}},
        bn_node("bn1", "conv1"),
        {"name": "relu1", "kind": "relu", "inputs": ["bn1"]},
        {"name": "conv2", "kind": "conv2d", "inputs": ["relu1"],
         "params": {"stride": 2, "padding": 1},
         "weight_refs": {"weight": "conv2.weight", "bias": "conv2.bias"}},
        bn_node("bn2", "conv2"),
        {"name": "relu2", "kind": "relu", "inputs": ["bn2"]},
        {"name": "gap", "kind": "globalavgpool", "inputs": ["relu2"]},
        {"name": "flat", "kind": "flatten", "inputs": ["gap"]},
        {"name": "fc", "kind": "linear", "inputs": ["flat"],
         "weight_refs": {"weight": "fc.weight", "bias": "fc.bias"}},
    ]
    metadata = {"arch": "fixturecnn", "dataset": "gratings10",
                "num_classes": task.NUM_CLASSES,
                "input_dims": [3, task.IMAGE_HW, task.IMAGE_HW]}
    return nodes, "fc", metadata, tensors


def export_fixture(out_dir, seed: int = 0, epochs: int = 6,
                   train_n: int = 8000, test_n: int = 2000,
                   calib_n: int = 128, min_accuracy: float = 95.0) -> dict:
    """Train the fixture CNN on the grating task and write the full artifact
    set: model container, calibration/test/probe tensors, and a sidecar with
    recorded accuracy and probe logits. Returns the sidecar dict."""
    os.makedirs(out_dir, exist_ok=True)
    train_raw, train_y = task.make_split(seed, train_n)
    test_raw, test_y = task.make_split(seed + 1, test_n)
    calib_raw, _ = task.make_split(seed + 2, calib_n)

    mean, std = task.fit_preprocessing(train_raw)
    train_x = task.standardize(train_raw, mean, std)
    test_x = task.standardize(test_raw, mean, std)
    calib_x = task.standardize(calib_raw, mean, std)
    probes = test_x[:NUM_PROBES]

    model = train_fixture(train_x, train_y, seed=seed, epochs=epochs)
    reestimate_bn(model, calib_x)
    test_acc = accuracy(model, test_x, test_y)
    if test_acc < min_accuracy:
        raise RuntimeError(
            f"fixture training reached {test_acc:.2f}%, below the "
            f"{min_accuracy:.1f}% floor; adjust the recipe")

    nodes, output, metadata, tensors = fixture_graph(model)
    formats.write_spm(os.path.join(out_dir, "fixture_cnn.spm"),
                      nodes, output, metadata, tensors)
    formats.write_tns(calib_x, os.path.join(out_dir, "calib.tns"))
    formats.write_tns(test_x, os.path.join(out_dir, "test_images.tns"))
    formats.write_tns(test_y.astype(np.uint32), os.path.join(out_dir, "test_labels.tns"))
    formats.write_tns(probes, os.path.join(out_dir, "probe_inputs.tns"))

    probe_logits = predict(model, probes)
    if not np.all(np.isfinite(probe_logits)):
        raise RuntimeError("probe logits are not finite")
    sidecar = {
        "format_version": SIDECAR_VERSION,
        "source": f"FixtureCNN trained {epochs} epochs on gratings10 (seed {seed})",
        "arch": metadata["arch"],
        "dataset": metadata["dataset"],
        "accuracy": round(test_acc, 4),
        "counts": {"train": train_n, "test": test_n, "calib": calib_n,
                   "probes": NUM_PROBES},
        "preprocessing": {"mean": [round(v, 8) for v in mean],
                          "std": [round(v, 8) for v in std]},
        "probes": {"inputs_file": "probe_inputs.tns",
                   "logits": [[float(v) for v in row] for row in probe_logits]},
        "seed": seed,
    }
    with open(os.path.join(out_dir, "sidecar.json"), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return sidecar
