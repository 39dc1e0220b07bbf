"""Best-effort full-scale path: export a torchvision ResNet-18.

Gated behind an explicit flag because it needs torchvision plus a
checkpoint (or tolerates random weights for plumbing checks); the fixture
path is the supported artifact.
"""

from __future__ import annotations

import numpy as np
import torch

from . import formats


def _tensors_of(module, prefix, names):
    state = module.state_dict()
    return {f"{prefix}.{new}": state[old].detach().numpy().astype(np.float32)
            for new, old in names.items()}


def _conv_node(name, src, conv, tensors, weight):
    tensors[f"{name}.weight"] = weight
    refs = {"weight": f"{name}.weight"}
    return {"name": name, "kind": "conv2d", "inputs": [src],
            "params": {"stride": int(conv.stride[0]),
                       "padding": int(conv.padding[0])},
            "weight_refs": refs}


def _bn_node(name, src, bn, tensors):
    state = bn.state_dict()
    for new, old in (("scale", "weight"), ("shift", "bias"),
                     ("running_mean", "running_mean"),
                     ("running_var", "running_var")):
        tensors[f"{name}.{new}"] = state[old].detach().numpy().astype(np.float32)
    return {"name": name, "kind": "batchnorm2d", "inputs": [src],
            "params": {"eps": float(bn.eps)},
            "weight_refs": {k: f"{name}.{k}" for k in
                            ("scale", "shift", "running_mean", "running_var")}}


def export_resnet18(out_path, checkpoint=None, num_classes: int = 10,
                    input_hw: int = 32, dataset: str = "cifar10") -> None:
    try:
        from torchvision.models import resnet18
    except ImportError as exc:
        raise RuntimeError("full-scale export needs torchvision installed") from exc
    net = resnet18(num_classes=num_classes)
    if checkpoint is not None:
        net.load_state_dict(torch.load(checkpoint, map_location="cpu"))
    net.eval()

    nodes: list[dict] = []
    tensors: dict[str, np.ndarray] = {}

    def conv(name, src, mod):
        nodes.append(_conv_node(name, src, mod, tensors,
                                mod.weight.detach().numpy().astype(np.float32)))
        return name

    def bn(name, src, mod):
        nodes.append(_bn_node(name, src, mod, tensors))
        return name

    def relu(name, src):
        nodes.append({"name": name, "kind": "relu", "inputs": [src]})
        return name

    cur = conv("conv1", "input", net.conv1)
    cur = bn("bn1", cur, net.bn1)
    cur = relu("relu1", cur)
    nodes.append({"name": "maxpool", "kind": "maxpool2d", "inputs": [cur],
                  "params": {"kernel": 3, "stride": 2, "padding": 1}})
    cur = "maxpool"

    for li, layer in enumerate((net.layer1, net.layer2, net.layer3, net.layer4), 1):
        for bi, block in enumerate(layer):
            p = f"layer{li}.{bi}"
            skip = cur
            x = conv(f"{p}.conv1", cur, block.conv1)
            x = bn(f"{p}.bn1", x, block.bn1)
            x = relu(f"{p}.relu1", x)
            x = conv(f"{p}.conv2", x, block.conv2)
            x = bn(f"{p}.bn2", x, block.bn2)
            if block.downsample is not None:
                skip = conv(f"{p}.down", cur, block.downsample[0])
                skip = bn(f"{p}.downbn", skip, block.downsample[1])
            nodes.append({"name": f"{p}.add", "kind": "add", "inputs": [x, skip]})
            cur = relu(f"{p}.relu2", f"{p}.add")
    nodes.append({"name": "gap", "kind": "globalavgpool", "inputs": [cur]})
    nodes.append({"name": "flat", "kind": "flatten", "inputs": ["gap"]})
    tensors["fc.weight"] = net.fc.weight.detach().numpy().astype(np.float32)
    tensors["fc.bias"] = net.fc.bias.detach().numpy().astype(np.float32)
    nodes.append({"name": "fc", "kind": "linear", "inputs": ["flat"],
                  "weight_refs": {"weight": "fc.weight", "bias": "fc.bias"}})

    metadata = {"arch": "resnet18", "dataset": dataset,
                "num_classes": num_classes, "input_dims": [3, input_hw, input_hw]}
    formats.write_spm(out_path, nodes, "fc", metadata, tensors)


@torch.no_grad()
def resnet18_logits(checkpoint, images: np.ndarray, num_classes: int = 10) -> np.ndarray:
    from torchvision.models import resnet18
    net = resnet18(num_classes=num_classes)
    if checkpoint is not None:
        net.load_state_dict(torch.load(checkpoint, map_location="cpu"))
    net.eval()
    return net(torch.from_numpy(images)).numpy()
