"""Sparse convolution execution from in-out maps, with a dense oracle.

Gather-multiply-scatter over map entries: ``out[o] += W[k] @ feat[i]`` for
every entry ``(i, o, k)``.  Entries are processed in (offset, output, input)
sorted order so results are bit-identical no matter which search method
produced the map.  No bias, no activation — layers are pure convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    GridShape,
    KernelSpec,
    SparseTensor,
    Variant,
    derive_output_coords,
    kernel_offsets,
    output_grid_shape,
)
from .errors import MapIndexError, OracleScaleError, ShapeError
from .mapsearch import InOutMap, oracle_search

DENSE_ORACLE_MAX_VOLUME = 2**24


@dataclass(frozen=True)
class WeightTensor:
    """Per-offset weight matrices, shape (K^3, C1, C2).

    Integer data marks quantized mode: accumulation runs in int64 and the
    single ``scale`` is applied to the finished outputs (symmetric
    per-tensor quantization).
    """

    data: np.ndarray
    kernel_size: int
    scale: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3:
            raise ShapeError("weights must have shape (K^3, C1, C2)")
        if d.shape[0] != self.kernel_size**3:
            raise ShapeError(
                f"expected {self.kernel_size ** 3} offset matrices, got {d.shape[0]}"
            )
        object.__setattr__(self, "data", d)

    @property
    def c1(self) -> int:
        return self.data.shape[1]

    @property
    def c2(self) -> int:
        return self.data.shape[2]

    @property
    def quantized(self) -> bool:
        return np.issubdtype(self.data.dtype, np.integer)

    @classmethod
    def random(cls, spec: KernelSpec, c1: int, c2: int, rng: np.random.Generator):
        return cls(rng.standard_normal((spec.num_offsets, c1, c2)), spec.size)

    @classmethod
    def random_quantized(
        cls, spec: KernelSpec, c1: int, c2: int, rng: np.random.Generator, scale=1.0
    ):
        data = rng.integers(-128, 128, size=(spec.num_offsets, c1, c2), dtype=np.int64)
        return cls(data, spec.size, scale)


def execute_spconv(
    input_tensor: SparseTensor,
    out_coords: np.ndarray,
    imap: InOutMap,
    weights: WeightTensor,
    out_shape: GridShape | None = None,
) -> SparseTensor:
    """Run the convolution described by an in-out map.

    Outputs with no entries keep zero features.  ``out_shape`` defaults to
    the input grid (correct for submanifold layers).
    """
    if weights.c1 != input_tensor.channels:
        raise ShapeError(
            f"weights expect C1={weights.c1}, input has C={input_tensor.channels}"
        )
    out_coords = np.asarray(out_coords)
    n_out = len(out_coords)
    e = imap.canonical()
    if len(e):
        if e[:, 0].max() >= input_tensor.n:
            raise MapIndexError("map references a missing input index")
        if e[:, 1].max() >= n_out:
            raise MapIndexError("map references a missing output index")

    feats = input_tensor.features
    if weights.quantized:
        feats = feats.astype(np.int64)
        acc = np.zeros((n_out, weights.c2), dtype=np.int64)
        wdata = weights.data.astype(np.int64)
    else:
        feats = feats.astype(np.float64)
        acc = np.zeros((n_out, weights.c2), dtype=np.float64)
        wdata = weights.data.astype(np.float64)

    # per offset, entries stay (out, in)-sorted: deterministic accumulation
    for k in range(imap.num_offsets):
        sel = e[e[:, 2] == k]
        if not len(sel):
            continue
        contrib = feats[sel[:, 0]] @ wdata[k]
        np.add.at(acc, sel[:, 1], contrib)

    out_feats = acc * weights.scale if weights.quantized else acc
    shape = out_shape if out_shape is not None else input_tensor.shape
    return SparseTensor(out_coords, out_feats, shape)


def densify(tensor: SparseTensor) -> np.ndarray:
    """Dense (nx, ny, nz, C) feature volume."""
    shape = tensor.shape
    if shape.volume > DENSE_ORACLE_MAX_VOLUME:
        raise OracleScaleError(f"grid volume {shape.volume} too large to densify")
    vol = np.zeros((shape.nx, shape.ny, shape.nz, tensor.channels))
    c = tensor.coords
    if len(c):
        vol[c[:, 0], c[:, 1], c[:, 2]] = tensor.features
    return vol


def _axis_ranges(out_dim, in_dim, stride, delta):
    """Valid output index range [q_lo, q_hi] with in = q*stride + delta."""
    q_lo = max(0, -(-(-delta) // stride))  # ceil(-delta / stride)
    q_hi = min(out_dim - 1, (in_dim - 1 - delta) // stride)
    return q_lo, q_hi


def dense_oracle(
    input_tensor: SparseTensor,
    spec: KernelSpec,
    weights: WeightTensor,
    target_coords: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Direct dense convolution masked to the variant's output coordinates.

    Returns (output coords, dense output volume).  Independent of the map
    machinery: works on the densified grid with explicit strided slicing.
    """
    if input_tensor.shape.volume > DENSE_ORACLE_MAX_VOLUME:
        raise OracleScaleError("input grid too large for the dense oracle")
    vol = densify(input_tensor)
    if weights.quantized:
        vol = vol.astype(np.int64)
        wdata = weights.data.astype(np.int64)
    else:
        wdata = weights.data.astype(np.float64)
    offsets = kernel_offsets(spec)
    in_shape = input_tensor.shape

    if spec.variant is Variant.TRANSPOSED:
        out_coords = derive_output_coords(input_tensor, spec, target_coords)
        if len(out_coords):
            ox = int(out_coords[:, 0].max()) + 1
            oy = int(out_coords[:, 1].max()) + 1
            oz = int(out_coords[:, 2].max()) + 1
        else:
            ox = oy = oz = 1
        out_vol = np.zeros((ox, oy, oz, weights.c2), dtype=vol.dtype)
        s = spec.stride
        for k, (dx, dy, dz) in enumerate(offsets):
            # out position p = q * s + delta for every input q
            xr = _axis_ranges(in_shape.nx, ox, s, int(dx))
            yr = _axis_ranges(in_shape.ny, oy, s, int(dy))
            zr = _axis_ranges(in_shape.nz, oz, s, int(dz))
            if xr[0] > xr[1] or yr[0] > yr[1] or zr[0] > zr[1]:
                continue
            block = vol[xr[0] : xr[1] + 1, yr[0] : yr[1] + 1, zr[0] : zr[1] + 1]
            out_vol[
                xr[0] * s + dx : xr[1] * s + dx + 1 : s,
                yr[0] * s + dy : yr[1] * s + dy + 1 : s,
                zr[0] * s + dz : zr[1] * s + dz + 1 : s,
            ] += block @ wdata[k]
    else:
        out_coords = derive_output_coords(input_tensor, spec)
        out_shape = output_grid_shape(in_shape, spec)
        ox, oy, oz = out_shape.nx, out_shape.ny, out_shape.nz
        out_vol = np.zeros((ox, oy, oz, weights.c2), dtype=vol.dtype)
        s = spec.stride
        for k, (dx, dy, dz) in enumerate(offsets):
            xr = _axis_ranges(ox, in_shape.nx, s, int(dx))
            yr = _axis_ranges(oy, in_shape.ny, s, int(dy))
            zr = _axis_ranges(oz, in_shape.nz, s, int(dz))
            if xr[0] > xr[1] or yr[0] > yr[1] or zr[0] > zr[1]:
                continue
            src = vol[
                xr[0] * s + dx : xr[1] * s + dx + 1 : s,
                yr[0] * s + dy : yr[1] * s + dy + 1 : s,
                zr[0] * s + dz : zr[1] * s + dz + 1 : s,
            ]
            out_vol[xr[0] : xr[1] + 1, yr[0] : yr[1] + 1, zr[0] : zr[1] + 1] += (
                src @ wdata[k]
            )

    # mask to the sparse output coordinate set
    mask = np.zeros(out_vol.shape[:3], dtype=bool)
    if len(out_coords):
        mask[out_coords[:, 0], out_coords[:, 1], out_coords[:, 2]] = True
    out_vol = np.where(mask[..., None], out_vol, 0)
    if weights.quantized:
        out_vol = out_vol * weights.scale
    return out_coords, out_vol


@dataclass
class LayerRun:
    """Bookkeeping for one executed layer in a chain."""

    spec: KernelSpec
    map_reused: bool
    imap: InOutMap


def chain_layers(
    layers: list[tuple[KernelSpec, WeightTensor]],
    input_tensor: SparseTensor,
) -> tuple[SparseTensor, list[LayerRun]]:
    """Execute a layer stack, reusing maps between consecutive submanifold layers.

    Generalized layers push their pre-downsample coordinates on a stack;
    transposed layers pop them, restoring the encoder-side coordinate sets
    (Unet-style).  Map search runs once per coordinate-changing layer.
    """
    tensor = input_tensor
    runs: list[LayerRun] = []
    saved: list[tuple[np.ndarray, GridShape]] = []
    cached: tuple[KernelSpec, InOutMap] | None = None

    for spec, weights in layers:
        if spec.variant is Variant.SUBMANIFOLD:
            out_coords = tensor.coords
            out_shape = tensor.shape
            reuse = (
                cached is not None
                and cached[0].variant is Variant.SUBMANIFOLD
                and cached[0].size == spec.size
                and cached[0].stride == spec.stride
            )
            if reuse:
                imap = cached[1]
            else:
                imap = oracle_search(tensor, out_coords, spec)
            cached = (spec, imap)
        elif spec.variant is Variant.GENERALIZED:
            saved.append((tensor.coords.copy(), tensor.shape))
            out_coords = derive_output_coords(tensor, spec)
            out_shape = output_grid_shape(tensor.shape, spec)
            imap = oracle_search(tensor, out_coords, spec)
            cached = (spec, imap)
            reuse = False
        else:
            if not saved:
                raise ValueError("transposed layer without a saved coordinate set")
            target, out_shape = saved.pop()
            out_coords = derive_output_coords(tensor, spec, target)
            imap = oracle_search(tensor, out_coords, spec)
            cached = (spec, imap)
            reuse = False
        tensor = execute_spconv(tensor, out_coords, imap, weights, out_shape)
        runs.append(LayerRun(spec, reuse, imap))
    return tensor, runs
