"""Standalone SPM/TNS writers and a TNS reader.

These deliberately re-implement the container layout rather than importing
the consumer library: the bytes on disk are the boundary contract between
the two ecosystems, and an independent writer is what makes round-trip
tests meaningful.

SPM: [8-byte magic "SPMODEL1"][u64 LE manifest length][UTF-8 JSON manifest]
[tensor blob]. The manifest carries the layer graph and a tensor directory
of {dtype, dims, offset, nbytes}; tensors are laid out in sorted-name order
and stored as little-endian float32.

TNS: [4-byte magic "TNS1"][u32 dtype code][u32 ndim][u32 x ndim dims]
[little-endian payload]. dtype codes: 1 = f32, 2 = u32.
"""

from __future__ import annotations

import json
import struct

import numpy as np

SPM_MAGIC = b"SPMODEL1"
SPM_VERSION = 1
TNS_MAGIC = b"TNS1"
TNS_CODES = {np.dtype("float32"): 1, np.dtype("uint32"): 2}


def write_spm(path, nodes: list[dict], output: str, metadata: dict,
              tensors: dict[str, np.ndarray]) -> None:
    """Write a model container. `nodes` entries carry name/kind/inputs and
    optional params/weight_refs; every weight_refs value must name a tensor."""
    for node in nodes:
        for ref in node.get("weight_refs", {}).values():
            if ref not in tensors:
                raise ValueError(f"node {node['name']!r} references missing tensor {ref!r}")
    directory = {}
    chunks = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        directory[name] = {
            "dtype": "f32",
            "dims": list(arr.shape),
            "offset": offset,
            "nbytes": arr.nbytes,
        }
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {
        "version": SPM_VERSION,
        "graph": {
            "nodes": [
                {
                    "name": n["name"],
                    "kind": n["kind"],
                    "inputs": list(n["inputs"]),
                    "params": dict(n.get("params", {})),
                    "weight_refs": dict(n.get("weight_refs", {})),
                }
                for n in nodes
            ],
            "output": output,
            "metadata": metadata,
        },
        "tensors": directory,
    }
    payload = json.dumps(manifest, sort_keys=True, indent=1).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SPM_MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for c in chunks:
            fh.write(c)


def read_spm_manifest(path) -> dict:
    """Parse just the manifest; enough to sanity-check our own output."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:8] != SPM_MAGIC:
            raise ValueError(f"{path}: not an SPM container")
        (mlen,) = struct.unpack("<Q", head[8:16])
        return json.loads(fh.read(mlen).decode("utf-8"))


def write_tns(arr: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(arr)
    code = TNS_CODES.get(arr.dtype)
    if code is None:
        raise ValueError(f"unsupported tensor dtype {arr.dtype} (want f32 or u32)")
    with open(path, "wb") as fh:
        fh.write(TNS_MAGIC)
        fh.write(struct.pack("<II", code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_tns(path) -> np.ndarray:
    decode = {v: k for k, v in TNS_CODES.items()}
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != TNS_MAGIC:
        raise ValueError(f"{path}: not a TNS file")
    code, ndim = struct.unpack("<II", raw[4:12])
    dims = struct.unpack(f"<{ndim}I", raw[12:12 + 4 * ndim])
    dtype = decode[code].newbyteorder("<")
    arr = np.frombuffer(raw[12 + 4 * ndim:], dtype=dtype).reshape(dims)
    return arr.astype(dtype.newbyteorder("="))
