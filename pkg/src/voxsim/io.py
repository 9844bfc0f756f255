"""Columnar serialization for tensors, weights, maps and stats.

JSON layout (used by the tests) mirrors the binary layout:

* tensor: header ``{"shape": [nx, ny, nz], "n": N, "c": C}``, body
  ``coords`` as N*3 flat ints in canonical order and ``features`` as N*C
  flat row-major reals.
* weights: header ``{"k": K, "c1": C1, "c2": C2, "dtype": ..., "scale": s}``
  plus ``data`` as K^3*C1*C2 flat row-major values.

Binary files carry a 4-byte magic (``VXT1`` / ``VXW1``), a little-endian
uint32 header length, the UTF-8 JSON header, then the raw body arrays:
coords as int32 LE, real features/weights as float64 LE, quantized weights
as int64 LE.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .core import GridShape, SparseTensor
from .mapsearch import AccessStats, InOutMap
from .spconv import WeightTensor

TENSOR_MAGIC = b"VXT1"
WEIGHT_MAGIC = b"VXW1"


def tensor_to_json(tensor: SparseTensor) -> dict:
    return {
        "header": {
            "shape": list(tensor.shape.as_tuple()),
            "n": tensor.n,
            "c": tensor.channels,
        },
        "coords": tensor.coords.astype(int).ravel().tolist(),
        "features": tensor.features.astype(float).ravel().tolist(),
    }


def tensor_from_json(doc: dict) -> SparseTensor:
    h = doc["header"]
    n, c = int(h["n"]), int(h["c"])
    coords = np.asarray(doc["coords"], dtype=np.int32).reshape(n, 3)
    feats = np.asarray(doc["features"], dtype=np.float64).reshape(n, c)
    return SparseTensor(coords, feats, GridShape(*h["shape"]))


def _write_framed(path, magic: bytes, header: dict, arrays: list[np.ndarray]):
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def _read_framed(path, magic: bytes) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        got = fh.read(4)
        if got != magic:
            raise ValueError(f"bad magic {got!r} in {path}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        body = fh.read()
    return header, body


def save_tensor(path, tensor: SparseTensor):
    """Write a tensor; '.json' extension selects JSON, otherwise binary."""
    if str(path).endswith(".json"):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(tensor_to_json(tensor), fh, sort_keys=True)
        return
    header = {
        "shape": list(tensor.shape.as_tuple()),
        "n": tensor.n,
        "c": tensor.channels,
    }
    _write_framed(
        path,
        TENSOR_MAGIC,
        header,
        [tensor.coords.astype(np.int32), tensor.features.astype(np.float64)],
    )


def load_tensor(path) -> SparseTensor:
    if str(path).endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            return tensor_from_json(json.load(fh))
    header, body = _read_framed(path, TENSOR_MAGIC)
    n, c = int(header["n"]), int(header["c"])
    coords_bytes = n * 3 * 4
    coords = np.frombuffer(body[:coords_bytes], dtype="<i4").reshape(n, 3)
    feats = np.frombuffer(body[coords_bytes:], dtype="<f8").reshape(n, c)
    return SparseTensor(
        coords.astype(np.int32), feats.astype(np.float64), GridShape(*header["shape"])
    )


def weights_to_json(weights: WeightTensor) -> dict:
    dtype = "int64" if weights.quantized else "float64"
    return {
        "header": {
            "k": weights.kernel_size,
            "c1": weights.c1,
            "c2": weights.c2,
            "dtype": dtype,
            "scale": float(weights.scale),
        },
        "data": weights.data.ravel().tolist(),
    }


def weights_from_json(doc: dict) -> WeightTensor:
    h = doc["header"]
    k, c1, c2 = int(h["k"]), int(h["c1"]), int(h["c2"])
    dtype = np.int64 if h["dtype"] == "int64" else np.float64
    data = np.asarray(doc["data"], dtype=dtype).reshape(k**3, c1, c2)
    return WeightTensor(data, k, float(h.get("scale", 1.0)))


def save_weights(path, weights: WeightTensor):
    if str(path).endswith(".json"):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(weights_to_json(weights), fh, sort_keys=True)
        return
    doc = weights_to_json(weights)
    dtype = np.int64 if doc["header"]["dtype"] == "int64" else np.float64
    _write_framed(path, WEIGHT_MAGIC, doc["header"], [weights.data.astype(dtype)])


def load_weights(path) -> WeightTensor:
    if str(path).endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            return weights_from_json(json.load(fh))
    header, body = _read_framed(path, WEIGHT_MAGIC)
    k, c1, c2 = int(header["k"]), int(header["c1"]), int(header["c2"])
    dtype = "<i8" if header["dtype"] == "int64" else "<f8"
    data = np.frombuffer(body, dtype=dtype).reshape(k**3, c1, c2)
    return WeightTensor(
        data.astype(np.int64 if header["dtype"] == "int64" else np.float64),
        k,
        float(header.get("scale", 1.0)),
    )


def map_to_json(imap: InOutMap) -> dict:
    return imap.to_dict()


def map_from_json(doc: dict) -> InOutMap:
    entries = np.asarray(doc["entries"], dtype=np.int64).reshape(-1, 3)
    return InOutMap(entries, int(doc["num_offsets"]))


def stats_to_json(stats: AccessStats) -> dict:
    return stats.to_dict()
