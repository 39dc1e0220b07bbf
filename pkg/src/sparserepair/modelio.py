"""Portable model container (SPM) and raw tensor files (TNS).

SPM layout: [8-byte magic "SPMODEL1"][u64 LE manifest length][manifest][blob].
The manifest is UTF-8 JSON describing the graph and a tensor directory of
{dtype, dims, offset, nbytes} entries; offsets are relative to the blob start.
All tensor payloads are little-endian float32, including the 0/1 pruning
masks stored under "<weight name>.mask".

TNS layout: [4-byte magic "TNS1"][u32 dtype code][u32 ndim][u32 x ndim dims]
[raw little-endian payload]. dtype codes: 1 = f32, 2 = u32.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError, GraphError
from .graph import LayerNode, Model, ModelGraph, validate_model

SPM_MAGIC = b"SPMODEL1"
SPM_VERSION = 1
TNS_MAGIC = b"TNS1"
TNS_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<u4")}
TNS_CODES = {"float32": 1, "uint32": 2}


def _graph_to_json(graph: ModelGraph) -> dict:
    return {
        "nodes": [
            {
                "name": n.name,
                "kind": n.kind,
                "inputs": list(n.inputs),
                "params": n.params,
                "weight_refs": n.weight_refs,
            }
            for n in graph.nodes
        ],
        "output": graph.output,
        "metadata": graph.metadata,
    }


def _graph_from_json(obj: dict) -> ModelGraph:
    try:
        nodes = [
            LayerNode(
                name=n["name"],
                kind=n["kind"],
                inputs=tuple(n["inputs"]),
                params=dict(n.get("params", {})),
                weight_refs=dict(n.get("weight_refs", {})),
            )
            for n in obj["nodes"]
        ]
        return ModelGraph(nodes, obj["output"], dict(obj.get("metadata", {})))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"manifest graph malformed: {exc}") from exc


def save_model(model: Model, path) -> None:
    """Serialize deterministically: tensors laid out in sorted-name order."""
    validate_model(model)
    names = sorted(model.weights)
    directory = {}
    chunks = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(model.weights[name], dtype="<f4")
        nbytes = arr.nbytes
        directory[name] = {
            "dtype": "f32",
            "dims": list(arr.shape),
            "offset": offset,
            "nbytes": nbytes,
        }
        chunks.append(arr.tobytes())
        offset += nbytes
    manifest = {
        "version": SPM_VERSION,
        "graph": _graph_to_json(model.graph),
        "tensors": directory,
    }
    payload = json.dumps(manifest, sort_keys=True, indent=1).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SPM_MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for c in chunks:
            fh.write(c)


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:8] != SPM_MAGIC:
        raise FormatError("bad magic, not an SPM container", path=path, offset=0)
    (mlen,) = struct.unpack("<Q", raw[8:16])
    if 16 + mlen > len(raw):
        raise FormatError(
            f"manifest length {mlen} overruns file of {len(raw)} bytes",
            path=path,
            offset=8,
        )
    try:
        manifest = json.loads(raw[16 : 16 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        off = 16 + getattr(exc, "pos", 0)
        raise FormatError(f"corrupt manifest: {exc}", path=path, offset=off) from exc
    if manifest.get("version") != SPM_VERSION:
        raise FormatError(
            f"unsupported container version {manifest.get('version')!r}", path=path
        )
    graph = _graph_from_json(manifest.get("graph", {}))

    blob = raw[16 + mlen :]
    weights = {}
    spans = []
    for name, entry in manifest.get("tensors", {}).items():
        if entry.get("dtype") != "f32":
            raise FormatError(f"tensor {name!r}: unsupported dtype", path=path)
        dims = entry["dims"]
        if not dims or any(int(d) < 1 for d in dims):
            raise FormatError(f"tensor {name!r}: zero extent dims {dims}", path=path)
        off, nbytes = int(entry["offset"]), int(entry["nbytes"])
        want = int(np.prod(dims)) * 4
        if nbytes != want:
            raise FormatError(
                f"tensor {name!r}: nbytes {nbytes} != product(dims)*4 = {want}",
                path=path,
            )
        if off < 0 or off + nbytes > len(blob):
            raise FormatError(
                f"tensor {name!r}: blob span [{off}, {off + nbytes}) out of bounds "
                f"(blob is {len(blob)} bytes)",
                path=path,
                offset=16 + mlen + off,
            )
        spans.append((off, off + nbytes, name))
        arr = np.frombuffer(blob, dtype="<f4", count=want // 4, offset=off)
        weights[name] = arr.reshape([int(d) for d in dims]).astype(np.float32)
    spans.sort()
    for (a0, a1, aname), (b0, b1, bname) in zip(spans, spans[1:]):
        if b0 < a1:
            raise FormatError(
                f"tensors {aname!r} and {bname!r} overlap in the blob", path=path
            )

    model = Model(graph, weights)
    try:
        validate_model(model)
    except GraphError as exc:
        raise FormatError(f"invalid model: {exc}", path=path) from exc
    return model


def save_tns(arr: np.ndarray, path) -> None:
    if arr.dtype == np.float32:
        code = TNS_CODES["float32"]
    elif arr.dtype == np.uint32:
        code = TNS_CODES["uint32"]
    else:
        raise FormatError(f"unsupported tensor dtype {arr.dtype} (want f32 or u32)")
    arr = np.ascontiguousarray(arr)
    with open(path, "wb") as fh:
        fh.write(TNS_MAGIC)
        fh.write(struct.pack("<II", code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def load_tns(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != TNS_MAGIC:
        raise FormatError("bad magic, not a TNS file", path=path, offset=0)
    code, ndim = struct.unpack("<II", raw[4:12])
    if code not in TNS_DTYPES:
        raise FormatError(f"unknown dtype code {code}", path=path, offset=4)
    if ndim < 1 or len(raw) < 12 + 4 * ndim:
        raise FormatError(f"bad ndim {ndim}", path=path, offset=8)
    dims = struct.unpack(f"<{ndim}I", raw[12 : 12 + 4 * ndim])
    if any(d < 1 for d in dims):
        raise FormatError(f"zero extent in dims {dims}", path=path, offset=12)
    dtype = TNS_DTYPES[code]
    want = int(np.prod(dims)) * dtype.itemsize
    payload = raw[12 + 4 * ndim :]
    if len(payload) != want:
        raise FormatError(
            f"payload is {len(payload)} bytes, expected {want} for dims {dims}",
            path=path,
            offset=12 + 4 * ndim,
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    return arr.astype(dtype.newbyteorder("="))
