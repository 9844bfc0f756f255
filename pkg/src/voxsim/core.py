"""Sparse voxel tensors, kernel-offset arithmetic and output-coordinate rules.

Coordinates are rows ``(x, y, z)`` of an int32 array.  The canonical storage
order is lexicographic by ``(z, y, x)``: every depth (fixed z) is a contiguous
slice of the stream and every row (fixed z, y) a contiguous run, which is what
the depth-table machinery in :mod:`voxsim.mapsearch` relies on.

Offset convention used everywhere: an in-out pair ``(i, o, k)`` relates
coordinates by ``in[i] = out[o] * stride + offsets[k]`` (for the transposed
variant the roles of the two sides swap, see :func:`variant_partner_coord`).
Odd kernels use centered offsets ``{-(K-1)/2 .. (K-1)/2}``; even kernels are
anchored at the window origin, ``{0 .. K-1}``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateVoxel, UnsupportedSymmetry

INT32_MAX = 2**31 - 1


class Variant(enum.Enum):
    SUBMANIFOLD = "submanifold"
    GENERALIZED = "generalized"
    TRANSPOSED = "transposed"


@dataclass(frozen=True)
class GridShape:
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for dim in (self.nx, self.ny, self.nz):
            if dim < 1:
                raise ValueError(f"grid dimensions must be >= 1, got {self}")
            if dim > INT32_MAX:
                raise ValueError(f"grid dimension {dim} exceeds 32-bit range")
        if self.nx * self.ny * self.nz > 2**62:
            raise ValueError("grid volume exceeds supported key range")

    @property
    def volume(self) -> int:
        return self.nx * self.ny * self.nz

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @classmethod
    def parse(cls, text: str) -> "GridShape":
        parts = [int(p) for p in text.lower().replace("x", " ").split()]
        if len(parts) != 3:
            raise ValueError(f"expected NXxNYxNZ, got {text!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return f"{self.nx}x{self.ny}x{self.nz}"


@dataclass(frozen=True)
class KernelSpec:
    size: int
    stride: int = 1
    variant: Variant = Variant.SUBMANIFOLD

    def __post_init__(self):
        if self.size < 1 or self.stride < 1:
            raise ValueError("kernel size and stride must be >= 1")
        if self.variant is Variant.SUBMANIFOLD and self.stride != 1:
            raise ValueError("submanifold kernels require stride 1")

    @property
    def num_offsets(self) -> int:
        return self.size**3


def subm3() -> KernelSpec:
    return KernelSpec(3, 1, Variant.SUBMANIFOLD)


def gconv2() -> KernelSpec:
    return KernelSpec(2, 2, Variant.GENERALIZED)


def tconv2() -> KernelSpec:
    return KernelSpec(2, 2, Variant.TRANSPOSED)


def coords_array(coords) -> np.ndarray:
    """Coerce any (N, 3) coordinate collection to an int32 array."""
    arr = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    if arr.size and (arr.min() < -INT32_MAX or arr.max() > INT32_MAX):
        raise ValueError("coordinates exceed 32-bit range")
    return arr.astype(np.int32)


def coord_keys(coords: np.ndarray, shape: GridShape) -> np.ndarray:
    """Canonical int64 key per coordinate: (z * ny + y) * nx + x."""
    c = np.asarray(coords, dtype=np.int64)
    return (c[:, 2] * shape.ny + c[:, 1]) * shape.nx + c[:, 0]


def canonical_sort(coords) -> tuple[np.ndarray, np.ndarray]:
    """Sort coordinates by (z, y, x) and return (sorted, permutation).

    ``permutation[old_index] = new_index``.  Raises :class:`DuplicateVoxel`
    naming the first repeated coordinate.
    """
    arr = coords_array(coords)
    if len(arr) == 0:
        return arr, np.empty(0, dtype=np.int64)
    order = np.lexsort((arr[:, 0], arr[:, 1], arr[:, 2]))
    out = arr[order]
    dup = np.all(out[1:] == out[:-1], axis=1)
    if dup.any():
        where = int(np.argmax(dup))
        coord = tuple(int(v) for v in out[where])
        raise DuplicateVoxel(f"duplicate voxel coordinate {coord}")
    perm = np.empty(len(arr), dtype=np.int64)
    perm[order] = np.arange(len(arr))
    return out, perm


def is_canonical(coords: np.ndarray) -> bool:
    """True when rows are strictly increasing in (z, y, x) lex order."""
    arr = np.asarray(coords, dtype=np.int64)
    if len(arr) < 2:
        return True
    z, y, x = arr[:, 2], arr[:, 1], arr[:, 0]
    dz, dy, dx = np.diff(z), np.diff(y), np.diff(x)
    ok = (dz > 0) | ((dz == 0) & ((dy > 0) | ((dy == 0) & (dx > 0))))
    return bool(ok.all())


@dataclass(frozen=True)
class SparseTensor:
    """Sorted voxel coordinates plus per-voxel feature vectors."""

    coords: np.ndarray
    features: np.ndarray
    shape: GridShape

    def __post_init__(self):
        coords = coords_array(self.coords)
        feats = np.asarray(self.features)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D (N, C) matrix")
        if len(feats) != len(coords):
            raise ValueError(
                f"feature rows ({len(feats)}) != voxel count ({len(coords)})"
            )
        if len(coords):
            lo = coords.min(axis=0)
            hi = coords.max(axis=0)
            bounds = np.array(self.shape.as_tuple())
            if (lo < 0).any() or (hi >= bounds).any():
                raise ValueError("coordinates fall outside the grid shape")
        if not is_canonical(coords):
            raise ValueError("coordinates are not in canonical (z, y, x) order")
        keys = coord_keys(coords, self.shape)
        if len(keys) > 1 and (np.diff(keys) == 0).any():
            idx = int(np.argmax(np.diff(keys) == 0))
            coord = tuple(int(v) for v in coords[idx])
            raise DuplicateVoxel(f"duplicate voxel coordinate {coord}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "features", feats)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def keys(self) -> np.ndarray:
        return coord_keys(self.coords, self.shape)

    @classmethod
    def from_unsorted(cls, coords, features, shape: GridShape) -> "SparseTensor":
        arr = coords_array(coords)
        feats = np.asarray(features)
        sorted_coords, perm = canonical_sort(arr)
        out_feats = np.empty_like(feats)
        if len(arr):
            out_feats[perm] = feats
        return cls(sorted_coords, out_feats, shape)

    @classmethod
    def from_coords(cls, coords, shape: GridShape, channels: int = 1) -> "SparseTensor":
        arr = coords_array(coords)
        sorted_coords, _ = canonical_sort(arr)
        return cls(sorted_coords, np.zeros((len(arr), channels)), shape)


def kernel_offsets(spec: KernelSpec) -> np.ndarray:
    """All K^3 offsets as an (K^3, 3) array of (dx, dy, dz) rows.

    Deterministic (dz, dy, dx)-lexicographic order; for odd K the center
    offset sits exactly in the middle of the list.
    """
    k = spec.size
    if k % 2 == 1:
        rng = np.arange(-(k // 2), k // 2 + 1)
    else:
        rng = np.arange(k)
    dz, dy, dx = np.meshgrid(rng, rng, rng, indexing="ij")
    return np.stack([dx.ravel(), dy.ravel(), dz.ravel()], axis=1).astype(np.int32)


def center_offset_index(spec: KernelSpec) -> int:
    if spec.size % 2 == 0:
        raise UnsupportedSymmetry("even kernels have no center offset")
    return spec.size**3 // 2


def half_offsets(spec: KernelSpec) -> np.ndarray:
    """The (K^3 - 1) / 2 lexicographically positive offsets of an odd kernel.

    An offset is positive when the first nonzero component of (dz, dy, dx)
    is positive; the center is excluded.  For K=3 these 13 positions span
    rows ``y0 .. y0+1`` of the same depth and ``y0-1 .. y0+1`` of the next.
    """
    if spec.size % 2 == 0:
        raise UnsupportedSymmetry(
            f"half-offset enumeration requires odd K, got K={spec.size}"
        )
    if spec.variant is not Variant.SUBMANIFOLD:
        raise UnsupportedSymmetry("half offsets are defined for submanifold kernels")
    offs = kernel_offsets(spec)
    keys = np.stack([offs[:, 2], offs[:, 1], offs[:, 0]], axis=1)
    positive = np.zeros(len(offs), dtype=bool)
    for i, row in enumerate(keys):
        nz = np.nonzero(row)[0]
        positive[i] = len(nz) > 0 and row[nz[0]] > 0
    return offs[positive]


def offset_index_map(spec: KernelSpec) -> dict[tuple[int, int, int], int]:
    return {tuple(int(v) for v in off): i for i, off in enumerate(kernel_offsets(spec))}


def negate_offset_indices(spec: KernelSpec) -> np.ndarray:
    """index -> index of the negated offset (odd kernels only)."""
    offs = kernel_offsets(spec)
    lookup = offset_index_map(spec)
    neg = np.empty(len(offs), dtype=np.int64)
    for i, off in enumerate(offs):
        neg[i] = lookup[tuple(int(-v) for v in off)]
    return neg


def output_grid_shape(shape: GridShape, spec: KernelSpec) -> GridShape:
    if spec.variant is Variant.SUBMANIFOLD:
        return shape
    s = spec.stride
    return GridShape(-(-shape.nx // s), -(-shape.ny // s), -(-shape.nz // s))


def derive_output_coords(
    input_tensor: SparseTensor,
    spec: KernelSpec,
    target_coords: np.ndarray | None = None,
) -> np.ndarray:
    """Output coordinate list for a convolution variant, canonical order.

    Submanifold outputs are the input coordinates.  Generalized outputs are
    the downsampled positions whose kernel window contains at least one
    input.  Transposed outputs must be supplied by the caller (the encoder
    path retains them); the result is that list restricted to positions
    actually reachable from the inputs.
    """
    coords = input_tensor.coords
    if spec.variant is Variant.SUBMANIFOLD:
        return coords.copy()

    if spec.variant is Variant.GENERALIZED:
        if len(coords) == 0:
            return coords.copy()
        out_shape = output_grid_shape(input_tensor.shape, spec)
        offs = kernel_offsets(spec).astype(np.int64)
        s = spec.stride
        c = coords.astype(np.int64)
        found: list[np.ndarray] = []
        for off in offs:
            q, rem = np.divmod(c - off, s)
            ok = (rem == 0).all(axis=1)
            ok &= (q >= 0).all(axis=1)
            ok &= (
                (q[:, 0] < out_shape.nx)
                & (q[:, 1] < out_shape.ny)
                & (q[:, 2] < out_shape.nz)
            )
            if ok.any():
                found.append(q[ok])
        if not found:
            return np.empty((0, 3), dtype=np.int32)
        allq = np.concatenate(found, axis=0)
        keys = coord_keys(allq, out_shape)
        uniq = np.unique(keys)
        qz, rest = np.divmod(uniq, out_shape.ny * out_shape.nx)
        qy, qx = np.divmod(rest, out_shape.nx)
        return np.stack([qx, qy, qz], axis=1).astype(np.int32)

    # Transposed: expansion targets come from the caller.
    if target_coords is None:
        raise ValueError("transposed convolution requires the target coordinate list")
    targets, _ = canonical_sort(coords_array(target_coords))
    if len(coords) == 0 or len(targets) == 0:
        return np.empty((0, 3), dtype=np.int32)
    up_shape = GridShape(
        max(int(targets[:, 0].max()) + 1, input_tensor.shape.nx * spec.stride),
        max(int(targets[:, 1].max()) + 1, input_tensor.shape.ny * spec.stride),
        max(int(targets[:, 2].max()) + 1, input_tensor.shape.nz * spec.stride),
    )
    offs = kernel_offsets(spec).astype(np.int64)
    reach = (
        coords.astype(np.int64)[:, None, :] * spec.stride + offs[None, :, :]
    ).reshape(-1, 3)
    ok = (reach >= 0).all(axis=1)
    reach = reach[ok]
    reach_keys = np.unique(coord_keys(reach, up_shape))
    target_keys = coord_keys(targets, up_shape)
    keep = np.isin(target_keys, reach_keys)
    return targets[keep]
