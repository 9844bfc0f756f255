"""Map-search algorithms for sparse voxel tensors plus their access models.

Four methods build the in-out pair map for a sparse convolution:

* :func:`oracle_search` — exhaustive hash-index lookup, ground truth.
* :func:`weight_major_search` — one pass over the voxel stream per kernel
  offset; off-chip traffic approaches ``K^3 * N`` when the on-chip pool is
  small.
* :func:`output_major_search` — symmetric half search over a single sliding
  window of the sorted stream; needs roughly two depths of residency to stay
  at ``N`` reads.
* :func:`doms_search` / :func:`block_doms_search` — half search driven by a
  depth-encoding table that allows direct seeks to each depth (per block for
  the blocked variant), bounding traffic between ``N`` and ``2N``.

Pair discovery itself is exact (sorted-key joins over the method's query
set); buffer capacities never change the produced map, only the reported
:class:`AccessStats`.  Traffic is modeled with *graded residency*: a stream
pass re-fetches only the part of a depth that could not remain resident in
the relevant FIFO, so shrinking buffers degrade cost smoothly and enlarging
them never increases it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    GridShape,
    KernelSpec,
    SparseTensor,
    Variant,
    center_offset_index,
    coord_keys,
    half_offsets,
    kernel_offsets,
    negate_offset_indices,
)
from .errors import InvalidPartition, TableMismatch, UnsupportedVariant


@dataclass(frozen=True)
class BufferConfig:
    """On-chip buffer sizes, in voxel-coordinate slots."""

    sorter_len: int = 64
    fifo_capacity_i: int = 64
    fifo_capacity_ii: int = 64
    backup_capacity: int = 0

    def __post_init__(self):
        if self.sorter_len < 2 or self.sorter_len & (self.sorter_len - 1):
            raise ValueError("sorter_len must be a power of two >= 2")
        if self.fifo_capacity_i < 1 or self.fifo_capacity_ii < 1:
            raise ValueError("FIFO capacities must be positive")
        if self.backup_capacity < 0:
            raise ValueError("backup capacity must be >= 0")

    @property
    def pool(self) -> int:
        """Total coordinate slots when both FIFOs act as one window."""
        return self.fifo_capacity_i + self.fifo_capacity_ii


@dataclass
class AccessStats:
    """Off-chip traffic and sorter counters for one search run."""

    offchip_coord_reads: int = 0
    normalized_access: float = 0.0
    sorter_invocations: int = 0
    table_reads: int = 0
    table_size_entries: int = 0
    replicated_voxels: int = 0
    peak_fifo_occupancy: int = 0

    def finalize(self, n_voxels: int) -> "AccessStats":
        self.normalized_access = (
            self.offchip_coord_reads / n_voxels if n_voxels else 0.0
        )
        return self

    def to_dict(self) -> dict:
        return {
            "offchip_coord_reads": int(self.offchip_coord_reads),
            "normalized_access": float(self.normalized_access),
            "sorter_invocations": int(self.sorter_invocations),
            "table_reads": int(self.table_reads),
            "table_size_entries": int(self.table_size_entries),
            "replicated_voxels": int(self.replicated_voxels),
            "peak_fifo_occupancy": int(self.peak_fifo_occupancy),
        }


@dataclass(frozen=True)
class InOutMap:
    """Set of (input index, output index, kernel-offset index) triples."""

    entries: np.ndarray
    num_offsets: int

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.int64).reshape(-1, 3)
        if len(e):
            if e.min() < 0:
                raise ValueError("map entries must be non-negative indices")
            if e[:, 2].max() >= self.num_offsets:
                raise ValueError("offset index out of range")
            uniq = np.unique(e, axis=0)
            if len(uniq) != len(e):
                raise ValueError("duplicate (in, out, offset) triple")
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return len(self.entries)

    def canonical(self) -> np.ndarray:
        """Entries sorted by (out, offset, in); fixes accumulation order."""
        if not len(self.entries):
            return self.entries
        e = self.entries
        order = np.lexsort((e[:, 0], e[:, 2], e[:, 1]))
        return e[order]

    def set_equal(self, other: "InOutMap") -> bool:
        a, b = self.canonical(), other.canonical()
        return a.shape == b.shape and bool(np.array_equal(a, b))

    def to_dict(self) -> dict:
        return {
            "num_offsets": int(self.num_offsets),
            "entries": self.entries.tolist(),
        }


@dataclass(frozen=True)
class DepthEncodingTable:
    """Per-block start offsets of every depth in the block's voxel stream."""

    block_grid: tuple[int, int]
    x_bounds: np.ndarray
    y_bounds: np.ndarray
    starts: np.ndarray  # (num_blocks, nz)
    counts: np.ndarray  # (num_blocks, nz)

    @property
    def num_blocks(self) -> int:
        return self.block_grid[0] * self.block_grid[1]

    @property
    def num_depths(self) -> int:
        return self.starts.shape[1]

    @property
    def size_entries(self) -> int:
        return self.num_blocks * self.num_depths

    def validate(self):
        if (np.diff(self.starts, axis=1) < 0).any():
            raise TableMismatch("depth start offsets must be non-decreasing")
        stream_lens = self.starts[:, -1] + self.counts[:, -1]
        recomputed = self.counts.sum(axis=1)
        if not np.array_equal(stream_lens, recomputed + self.starts[:, 0]):
            raise TableMismatch("counts do not tile the block streams")


def block_bounds(dim: int, splits: int) -> np.ndarray:
    if splits < 1 or splits > dim:
        raise InvalidPartition(f"cannot split extent {dim} into {splits} blocks")
    return np.round(np.linspace(0, dim, splits + 1)).astype(np.int64)


def block_ids(coords: np.ndarray, table: DepthEncodingTable) -> np.ndarray:
    """Linear block id (i * n + j) per coordinate row."""
    bi = np.searchsorted(table.x_bounds, coords[:, 0], side="right") - 1
    bj = np.searchsorted(table.y_bounds, coords[:, 1], side="right") - 1
    return bi * table.block_grid[1] + bj


def build_depth_table(
    input_tensor: SparseTensor, block_grid: tuple[int, int] = (1, 1)
) -> DepthEncodingTable:
    """One pass over the canonical stream; per block, per depth (start, count)."""
    m, n = block_grid
    shape = input_tensor.shape
    xb = block_bounds(shape.nx, m)
    yb = block_bounds(shape.ny, n)
    nz = shape.nz
    nblocks = m * n
    coords = input_tensor.coords
    table = DepthEncodingTable(
        (m, n),
        xb,
        yb,
        np.zeros((nblocks, nz), dtype=np.int64),
        np.zeros((nblocks, nz), dtype=np.int64),
    )
    if len(coords):
        bid = block_ids(coords, table)
        cell = bid * nz + coords[:, 2].astype(np.int64)
        counts = np.bincount(cell, minlength=nblocks * nz).reshape(nblocks, nz)
        starts = np.concatenate(
            [np.zeros((nblocks, 1), dtype=np.int64), np.cumsum(counts, axis=1)[:, :-1]],
            axis=1,
        )
        object.__setattr__(table, "starts", starts)
        object.__setattr__(table, "counts", counts)
    return table


# ---------------------------------------------------------------------------
# pair discovery
# ---------------------------------------------------------------------------


def _lookup_sorted(sorted_keys: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Index of each key within a sorted unique key array, -1 when absent."""
    if len(sorted_keys) == 0 or len(keys) == 0:
        return np.full(len(keys), -1, dtype=np.int64)
    pos = np.searchsorted(sorted_keys, keys)
    pos_c = np.clip(pos, 0, len(sorted_keys) - 1)
    return np.where(sorted_keys[pos_c] == keys, pos_c, -1)


def _partner_coords(
    out_coords: np.ndarray, offset: np.ndarray, spec: KernelSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Input-side coordinates paired with each output for one offset.

    Relation: ``in = out * stride + offset`` (transposed swaps the roles:
    ``in * stride + offset = out``).  Returns (coords, valid_mask); invalid
    rows are not meaningful.
    """
    q = out_coords.astype(np.int64)
    off = offset.astype(np.int64)
    if spec.variant is Variant.TRANSPOSED:
        p, rem = np.divmod(q - off, spec.stride)
        valid = (rem == 0).all(axis=1) & (p >= 0).all(axis=1)
        return p, valid
    p = q * spec.stride + off
    valid = (p >= 0).all(axis=1)
    return p, valid


def _as_coords(out_coords) -> np.ndarray:
    return np.asarray(out_coords, dtype=np.int64).reshape(-1, 3)


def _join_entries(
    input_tensor: SparseTensor,
    out_coords: np.ndarray,
    spec: KernelSpec,
    offsets: np.ndarray,
    offset_indices: np.ndarray,
) -> np.ndarray:
    """Sorted-key join of the query set against the input stream."""
    shape = input_tensor.shape
    out_coords = _as_coords(out_coords)
    in_keys = input_tensor.keys()  # canonical order == ascending keys
    bounds = np.array(shape.as_tuple(), dtype=np.int64)
    chunks = []
    out_idx_all = np.arange(len(out_coords), dtype=np.int64)
    for off, k in zip(offsets, offset_indices):
        p, valid = _partner_coords(out_coords, off, spec)
        valid &= (p < bounds).all(axis=1)
        if not valid.any():
            continue
        p_v = p[valid]
        keys = coord_keys(p_v, shape)
        in_idx = _lookup_sorted(in_keys, keys)
        hit = in_idx >= 0
        if hit.any():
            o_idx = out_idx_all[valid][hit]
            chunk = np.stack(
                [in_idx[hit], o_idx, np.full(hit.sum(), k, dtype=np.int64)], axis=1
            )
            chunks.append(chunk)
    if not chunks:
        return np.empty((0, 3), dtype=np.int64)
    return np.concatenate(chunks, axis=0)


def oracle_search(
    input_tensor: SparseTensor, out_coords: np.ndarray, spec: KernelSpec
) -> InOutMap:
    """Exhaustive map: per output, probe every kernel offset in a hash index.

    Ground truth for all streaming methods; no access statistics.
    """
    shape = input_tensor.shape
    out_coords = _as_coords(out_coords)
    index = {int(k): i for i, k in enumerate(input_tensor.keys())}
    offsets = kernel_offsets(spec)
    bounds = np.array(shape.as_tuple(), dtype=np.int64)
    entries = []
    for k, off in enumerate(offsets):
        p, valid = _partner_coords(out_coords, off, spec)
        valid &= (p < bounds).all(axis=1)
        if not valid.any():
            continue
        keys = coord_keys(p[valid], shape)
        out_ids = np.nonzero(valid)[0]
        for key, o in zip(keys.tolist(), out_ids.tolist()):
            i = index.get(key)
            if i is not None:
                entries.append((i, o, k))
    arr = (
        np.array(entries, dtype=np.int64)
        if entries
        else np.empty((0, 3), dtype=np.int64)
    )
    return InOutMap(arr, spec.num_offsets)


def expand_symmetric(half_map: InOutMap, spec: KernelSpec) -> InOutMap:
    """Symmetric closure: adds (j, i, -offset) for every non-center entry.

    Idempotent — applying it to an already-full submanifold map returns the
    same set.
    """
    neg = negate_offset_indices(spec)
    center = center_offset_index(spec)
    e = half_map.entries
    if len(e) == 0:
        return InOutMap(e, spec.num_offsets)
    noncenter = e[e[:, 2] != center]
    mirrored = np.stack(
        [noncenter[:, 1], noncenter[:, 0], neg[noncenter[:, 2]]], axis=1
    )
    merged = np.unique(np.concatenate([e, mirrored], axis=0), axis=0)
    return InOutMap(merged, spec.num_offsets)


def _require_submanifold(input_tensor: SparseTensor, out_coords, spec, who: str):
    if spec.variant is not Variant.SUBMANIFOLD:
        raise UnsupportedVariant(f"{who} supports submanifold kernels only")
    if spec.size % 2 == 0:
        raise UnsupportedVariant(f"{who} requires an odd kernel size")
    if not np.array_equal(np.asarray(out_coords), input_tensor.coords):
        raise UnsupportedVariant(
            f"{who}: submanifold outputs must equal the input coordinates"
        )


def _half_map(input_tensor: SparseTensor, spec: KernelSpec) -> InOutMap:
    """Half-offset discoveries plus the trivial center self-pairs."""
    offs = half_offsets(spec)
    lookup = {tuple(int(v) for v in o): i for i, o in enumerate(kernel_offsets(spec))}
    idx = np.array([lookup[tuple(int(v) for v in o)] for o in offs], dtype=np.int64)
    found = _join_entries(input_tensor, input_tensor.coords, spec, offs, idx)
    n = input_tensor.n
    center = center_offset_index(spec)
    self_pairs = np.stack(
        [
            np.arange(n, dtype=np.int64),
            np.arange(n, dtype=np.int64),
            np.full(n, center, dtype=np.int64),
        ],
        axis=1,
    )
    return InOutMap(np.concatenate([self_pairs, found], axis=0), spec.num_offsets)


# ---------------------------------------------------------------------------
# occupancy helpers for the access models
# ---------------------------------------------------------------------------


def _depth_occupancy(coords: np.ndarray, nz: int) -> np.ndarray:
    if len(coords) == 0:
        return np.zeros(nz + 1, dtype=np.int64)
    v = np.bincount(coords[:, 2].astype(np.int64), minlength=nz)
    return np.concatenate([v, [0]])  # sentinel depth nz


def _row_occupancy(coords: np.ndarray, shape: GridShape) -> np.ndarray:
    """(nz + 1, ny) occupancy matrix; trailing all-zero depth as sentinel."""
    occ = np.zeros((shape.nz + 1, shape.ny), dtype=np.int64)
    if len(coords):
        cell = coords[:, 2].astype(np.int64) * shape.ny + coords[:, 1]
        counts = np.bincount(cell, minlength=shape.nz * shape.ny)
        occ[: shape.nz] = counts.reshape(shape.nz, shape.ny)
    return occ


def _window_max(row_occ: np.ndarray, width: int) -> np.ndarray:
    """Per depth, the largest sum over `width` consecutive rows."""
    nz, ny = row_occ.shape
    if ny == 0:
        return np.zeros(nz, dtype=np.int64)
    c = np.concatenate([np.zeros((nz, 1), dtype=np.int64), np.cumsum(row_occ, axis=1)], axis=1)
    w = min(width, ny)
    windows = c[:, w:] - c[:, :-w]
    if windows.shape[1] == 0:
        return c[:, -1]
    return windows.max(axis=1)


def _graded_depth_loads(v: np.ndarray, w3max: np.ndarray, cap_ii: int) -> int:
    """Total reads for the two-FIFO depth-pair schedule.

    Depth z streams through FIFO II while targets sweep depth z-1, then is
    needed again as the target depth itself.  FIFO II retains what fits
    (keeping a 3-row sliding window free while over capacity); only the
    shortfall is re-fetched.
    """
    nz = len(v) - 1
    reads = 0
    for z in range(nz):
        if v[z] == 0:
            continue
        if v[z] <= cap_ii:
            retained = int(v[z])
        else:
            retained = max(0, cap_ii - int(w3max[z]))
        streamed_as_next = z > 0 and v[z - 1] > 0
        if streamed_as_next:
            reads += int(v[z])  # FIFO II pass during targets at z-1
            reads += int(v[z]) - min(retained, int(v[z]))  # re-fetch shortfall
        else:
            reads += int(v[z])  # first touched by its own target sweep
    return reads


def _ceil_div(a, b):
    return -(-a // b)


# ---------------------------------------------------------------------------
# search methods
# ---------------------------------------------------------------------------


def weight_major_search(
    input_tensor: SparseTensor,
    out_coords: np.ndarray,
    spec: KernelSpec,
    buf: BufferConfig,
) -> tuple[InOutMap, AccessStats]:
    """Per-offset streaming: every kernel offset re-streams the voxel list.

    The first pass loads the stream once; each further offset re-fetches
    only what the on-chip pool could not keep, so reads grow from ``N``
    (everything resident) toward ``K^3 * N`` (no reuse).
    """
    offsets = kernel_offsets(spec)
    idx = np.arange(len(offsets), dtype=np.int64)
    entries = _join_entries(input_tensor, np.asarray(out_coords), spec, offsets, idx)
    imap = InOutMap(entries, spec.num_offsets)

    n = input_tensor.n
    n_out = len(out_coords)
    k3 = spec.num_offsets
    stats = AccessStats()
    if n:
        if spec.variant is Variant.SUBMANIFOLD:
            # output records are the input records; one stream feeds both sides
            stats.offchip_coord_reads = n + (k3 - 1) * max(0, n - buf.pool)
            stats.peak_fifo_occupancy = min(n, buf.pool)
        else:
            stats.offchip_coord_reads = (
                n
                + (k3 - 1) * max(0, n - buf.fifo_capacity_i)
                + n_out
                + (k3 - 1) * max(0, n_out - buf.fifo_capacity_ii)
            )
            stats.peak_fifo_occupancy = min(n, buf.fifo_capacity_i) + min(
                n_out, buf.fifo_capacity_ii
            )
        stats.sorter_invocations = k3 * _ceil_div(n + n_out, buf.sorter_len)
    return imap, stats.finalize(n)


def output_major_search(
    input_tensor: SparseTensor,
    out_coords: np.ndarray,
    spec: KernelSpec,
    buf: BufferConfig,
) -> tuple[InOutMap, AccessStats]:
    """Half search over one sliding window of the sorted stream.

    Without a depth table the candidates for an output at depth z live in a
    contiguous stream span covering depths z and z+1.  Both FIFOs pool into
    a single window; whenever a target depth's two-depth span exceeds the
    pool the evicted portion is re-streamed once for that depth.

    Returns the half map (center self-pairs plus positive offsets); apply
    :func:`expand_symmetric` for the full map.
    """
    _require_submanifold(input_tensor, out_coords, spec, "output_major_search")
    imap = _half_map(input_tensor, spec)

    shape = input_tensor.shape
    v = _depth_occupancy(input_tensor.coords, shape.nz)
    n = input_tensor.n
    c_pool = buf.pool
    n_half = len(half_offsets(spec))
    stats = AccessStats()
    if n:
        reads = n
        invocations = 0
        peak = 0
        for z in range(shape.nz):
            if v[z] == 0:
                continue
            span = int(v[z] + v[z + 1])
            penalty = max(0, span - c_pool)
            reads += penalty
            invocations += _ceil_div(n_half * int(v[z]) + span + penalty, buf.sorter_len)
            peak = max(peak, min(span, c_pool))
        stats.offchip_coord_reads = reads
        stats.sorter_invocations = invocations
        stats.peak_fifo_occupancy = peak
    return imap, stats.finalize(n)


def _doms_sorter_and_peak(
    coords: np.ndarray,
    row_occ: np.ndarray,
    v: np.ndarray,
    buf: BufferConfig,
    n_half: int,
) -> tuple[int, int]:
    """Sorter windows per output and modeled FIFO residency."""
    if len(coords) == 0:
        return 0, 0
    ny = row_occ.shape[1]
    z = coords[:, 2].astype(np.int64)
    y = coords[:, 1].astype(np.int64)

    def occ(zz, yy):
        ok = (yy >= 0) & (yy < ny)
        out = np.zeros(len(zz), dtype=np.int64)
        out[ok] = row_occ[zz[ok], yy[ok]]
        return out

    window = (
        occ(z, y)
        + occ(z, y + 1)
        + occ(z + 1, y - 1)
        + occ(z + 1, y)
        + occ(z + 1, y + 1)
    )
    invocations = int(np.sum((n_half + window + buf.sorter_len - 1) // buf.sorter_len))

    w2 = _window_max(row_occ[:-1], 2)
    nz = len(v) - 1
    peak = 0
    for zz in range(nz):
        if v[zz] == 0:
            continue
        occ_i = min(int(w2[zz]), buf.fifo_capacity_i)
        occ_ii = min(int(v[zz + 1]), buf.fifo_capacity_ii)
        peak = max(peak, occ_i + occ_ii)
    return invocations, peak


def doms_search(
    input_tensor: SparseTensor,
    out_coords: np.ndarray,
    spec: KernelSpec,
    buf: BufferConfig,
    table: DepthEncodingTable,
) -> tuple[InOutMap, AccessStats]:
    """Depth-table-driven half search with two row-granular FIFOs.

    FIFO I slides a two-row window over the target depth; FIFO II streams a
    three-row window of the next depth located directly via the table.  If
    FIFO II can hold a whole depth it is reused when the target advances,
    giving ~N reads; otherwise each depth is fetched at most twice.

    Returns the half map; apply :func:`expand_symmetric` for the full map.
    """
    _require_submanifold(input_tensor, out_coords, spec, "doms_search")
    if table.block_grid != (1, 1):
        raise TableMismatch("doms_search expects an unpartitioned (1,1) table")
    table.validate()
    expected = build_depth_table(input_tensor, (1, 1))
    if not (
        np.array_equal(table.starts, expected.starts)
        and np.array_equal(table.counts, expected.counts)
    ):
        raise TableMismatch("table does not describe the input coordinate stream")

    imap = _half_map(input_tensor, spec)

    shape = input_tensor.shape
    coords = input_tensor.coords
    v = _depth_occupancy(coords, shape.nz)
    row_occ = _row_occupancy(coords, shape)
    w3 = _window_max(row_occ, 3)
    n = input_tensor.n
    n_half = len(half_offsets(spec))

    stats = AccessStats(table_size_entries=table.size_entries)
    if n:
        stats.offchip_coord_reads = _graded_depth_loads(v, w3, buf.fifo_capacity_ii)
        target_depths = int((v[:-1] > 0).sum())
        stats.table_reads = 2 * target_depths
        stats.sorter_invocations, stats.peak_fifo_occupancy = _doms_sorter_and_peak(
            coords, row_occ, v, buf, n_half
        )
    return imap, stats.finalize(n)


def replicated_border_mask(
    coords: np.ndarray, table: DepthEncodingTable
) -> np.ndarray:
    """Voxels copied into their x- neighbor block's backup store.

    A block receives copies of the first x-column of its x+ neighbor, which
    is exactly the set of positions its outputs can query across the block
    boundary without a y crossing.
    """
    first_cols = table.x_bounds[1:-1]
    if len(first_cols) == 0 or len(coords) == 0:
        return np.zeros(len(coords), dtype=bool)
    return np.isin(coords[:, 0].astype(np.int64), first_cols)


def block_doms_search(
    input_tensor: SparseTensor,
    out_coords: np.ndarray,
    spec: KernelSpec,
    buf: BufferConfig,
    block_grid: tuple[int, int],
) -> tuple[InOutMap, AccessStats]:
    """Blocked depth-table search with x+ border replication.

    The (x, y) plane splits into ``m x n`` blocks, each with its own table,
    which downsizes every depth so the next-depth FIFO can retain it.  Rows
    of y-neighbor blocks are seeked directly (they sit at a depth stream's
    ends); x+ border columns are pre-copied into the backup store, and the
    copies also act as outputs in the host block so that cross-boundary
    pairs on the x- side are recovered by symmetry.

    Returns the half map; apply :func:`expand_symmetric` for the full map.
    """
    _require_submanifold(input_tensor, out_coords, spec, "block_doms_search")
    m, n_blocks_y = block_grid
    table = build_depth_table(input_tensor, block_grid)

    imap = _half_map(input_tensor, spec)

    shape = input_tensor.shape
    coords = input_tensor.coords
    n = input_tensor.n
    n_half = len(half_offsets(spec))
    nz = shape.nz
    ny = shape.ny
    nb = table.num_blocks

    stats = AccessStats(table_size_entries=table.size_entries)
    if n == 0:
        return imap, stats.finalize(n)

    bid = block_ids(coords, table)
    copies = replicated_border_mask(coords, table)
    stats.replicated_voxels = int(copies.sum())

    # augmented per-block streams: own voxels plus copies shifted one block -x
    aug_bid = np.concatenate([bid, bid[copies] - n_blocks_y])
    aug_coords = np.concatenate([coords, coords[copies]], axis=0)

    # per (block, depth) and per (block, depth, row) occupancy
    v_b = np.zeros((nb, nz + 1), dtype=np.int64)
    cell = aug_bid * nz + aug_coords[:, 2].astype(np.int64)
    v_b[:, :nz] = np.bincount(cell, minlength=nb * nz).reshape(nb, nz)

    rows = np.zeros((nb, nz + 1, ny), dtype=np.int64)
    cell3 = (aug_bid * nz + aug_coords[:, 2]) * ny + aug_coords[:, 1]
    rows[:, :nz, :] = np.bincount(cell3, minlength=nb * nz * ny).reshape(nb, nz, ny)

    reads = 0
    table_reads = 0
    peak = 0
    for b in range(nb):
        w3 = _window_max(rows[b], 3)
        reads += _graded_depth_loads(v_b[b], w3, buf.fifo_capacity_ii)
        target_depths = int((v_b[b, :-1] > 0).sum())
        table_reads += 2 * target_depths
        w2 = _window_max(rows[b, :-1], 2)
        for z in range(nz):
            if v_b[b, z] == 0:
                continue
            occ_i = min(int(w2[z]), buf.fifo_capacity_i)
            occ_ii = min(int(v_b[b, z + 1]), buf.fifo_capacity_ii)
            peak = max(peak, occ_i + occ_ii)

    # cross-block row loads in the y direction, located via neighbor tables
    cross_reads, cross_table_reads = _cross_block_reads(
        coords, bid, rows, v_b, table, shape
    )
    reads += cross_reads
    table_reads += cross_table_reads

    # sorter windows: in-block five-row window per output (copies included
    # as outputs of the host block)
    aug_z = aug_coords[:, 2].astype(np.int64)
    aug_y = aug_coords[:, 1].astype(np.int64)

    def occ(zz, yy):
        ok = (yy >= 0) & (yy < ny)
        out = np.zeros(len(zz), dtype=np.int64)
        out[ok] = rows[aug_bid[ok], zz[ok], yy[ok]]
        return out

    window = (
        occ(aug_z, aug_y)
        + occ(aug_z, aug_y + 1)
        + occ(aug_z + 1, aug_y - 1)
        + occ(aug_z + 1, aug_y)
        + occ(aug_z + 1, aug_y + 1)
    )
    stats.sorter_invocations = int(
        np.sum((n_half + window + buf.sorter_len - 1) // buf.sorter_len)
    )

    stats.offchip_coord_reads = int(reads)
    stats.table_reads = int(table_reads)
    stats.peak_fifo_occupancy = int(peak)
    return imap, stats.finalize(n)


def _cross_block_reads(
    coords: np.ndarray,
    bid: np.ndarray,
    rows: np.ndarray,
    v_b: np.ndarray,
    table: DepthEncodingTable,
    shape: GridShape,
) -> tuple[int, int]:
    """Rows fetched from y-neighbor blocks for edge-row outputs.

    A neighbor row sits at the start or end of that block's depth stream,
    so it is fetched once per (block, target depth, neighbor) when at least
    one output sits in the block's edge row.  Each fetch pays one boundary
    probe record on top of the row itself (the stream is read until a
    record outside the row shows up), so probing an empty row of a
    non-empty depth still costs one read.  The x-diagonal neighbors trigger
    only for outputs in the edge row's corner columns.
    """
    m, n = table.block_grid
    if n == 1 and m == 1:
        return 0, 0
    nz = shape.nz
    ny = shape.ny
    xb, yb = table.x_bounds, table.y_bounds

    z = coords[:, 2].astype(np.int64)
    y = coords[:, 1].astype(np.int64)
    x = coords[:, 0].astype(np.int64)
    bi = bid // n
    bj = bid % n

    y_lo = yb[bj]
    y_hi = yb[bj + 1] - 1
    x_lo = xb[bi]
    x_hi = xb[bi + 1] - 1

    reads = 0
    table_reads = 0
    for side, on_edge in (("-", y == y_lo), ("+", y == y_hi)):
        dj = -1 if side == "-" else 1
        edge = on_edge & ((bj + dj >= 0) & (bj + dj < n))
        if not edge.any():
            continue
        target_row = np.where(dj < 0, y - 1, y + 1)
        for dx, mask in (
            (0, edge),
            (-1, edge & (x == x_lo) & (bi - 1 >= 0)),
            (1, edge & (x == x_hi) & (bi + 1 < m)),
        ):
            if not mask.any():
                continue
            nb_id = (bi[mask] + dx) * n + (bj[mask] + dj)
            trips = np.stack([nb_id, z[mask], target_row[mask]], axis=1)
            trips = trips[(trips[:, 2] >= 0) & (trips[:, 2] < ny)]
            if not len(trips):
                continue
            uniq = np.unique(trips, axis=0)
            for nb, zz, yy in uniq:
                for depth in (zz, zz + 1):
                    if depth <= nz and v_b[nb, depth] > 0:
                        reads += int(rows[nb, depth, yy]) + 1
                table_reads += 1
    return reads, table_reads
