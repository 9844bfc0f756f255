"""Compute-in-memory core model: weight layouts, workload balance, cycles.

Weights live in memory-array tiles; a tile splits into PEs and each PE can
hold one weight sub-matrix.  Two layout schemes are modeled:

* traditional — every output channel's kernel unrolls into one long column;
* sub-matrix — each kernel offset's C1 x C2 block occupies its own PE so
  offsets activate or idle independently.

Workload balancing replicates heavily-used offsets ("extra copies") so the
per-copy normalized workload (pairs / copies) levels out.  The cycle model
is abstract: one cycle is one parallel MAC wave across all active PEs, so
reported speedups are geometry-independent.  Energy is exposed only as raw
event counters (waves, feature fetches).
"""

from __future__ import annotations

import enum
import heapq
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, CapacityError
from .mapsearch import InOutMap


class MappingScheme(enum.Enum):
    TRADITIONAL = "traditional"
    SUBMATRIX = "submatrix"


@dataclass(frozen=True)
class Conv2dKernel:
    """Dense 2-D kernel descriptor for the RPN-style layout path."""

    size: int
    stride: int = 1

    @property
    def num_offsets(self) -> int:
        return self.size**2


@dataclass(frozen=True)
class CimGeometry:
    tile_rows: int = 1024
    tile_cols: int = 1024
    cell_bits: int = 1
    weight_bits: int = 8
    pe_rows: int = 128
    pe_cols: int = 128
    num_tiles: int = 1

    def __post_init__(self):
        for v in (
            self.tile_rows,
            self.tile_cols,
            self.cell_bits,
            self.weight_bits,
            self.pe_rows,
            self.pe_cols,
            self.num_tiles,
        ):
            if v < 1:
                raise ValueError("geometry values must be positive")
        if self.tile_rows % self.pe_rows or self.tile_cols % self.pe_cols:
            raise ValueError("PE dimensions must divide the tile dimensions")
        if self.weight_bits % self.cell_bits:
            raise ValueError("weight_bits must be a multiple of cell_bits")

    @property
    def cells_per_weight(self) -> int:
        return self.weight_bits // self.cell_bits

    @property
    def total_cells(self) -> int:
        return self.num_tiles * self.tile_rows * self.tile_cols

    @property
    def pe_slots(self) -> int:
        return (
            self.num_tiles
            * (self.tile_rows // self.pe_rows)
            * (self.tile_cols // self.pe_cols)
        )


@dataclass(frozen=True)
class Placement:
    offset_idx: int  # -1 for the traditional unrolled block
    copy_index: int
    pe_slot: int
    rows: int
    cols: int


@dataclass(frozen=True)
class CimLayout:
    scheme: MappingScheme
    placements: tuple[Placement, ...]
    copy_factors: np.ndarray
    geometry: CimGeometry

    @property
    def occupied_cells(self) -> int:
        return sum(p.rows * p.cols for p in self.placements)

    def copies_of(self, offset_idx: int) -> int:
        return int(self.copy_factors[offset_idx])

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "occupied_cells": int(self.occupied_cells),
            "copy_factors": [int(c) for c in self.copy_factors],
            "placements": [
                {
                    "offset_idx": p.offset_idx,
                    "copy_index": p.copy_index,
                    "pe_slot": p.pe_slot,
                    "rows": p.rows,
                    "cols": p.cols,
                }
                for p in self.placements
            ],
        }


@dataclass
class WorkloadHistogram:
    """Per-offset in-out pair counts for one layer's map."""

    pairs: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.pairs.sum())

    def normalized(self, copy_factors: np.ndarray) -> np.ndarray:
        c = np.asarray(copy_factors, dtype=np.float64)
        out = np.zeros(len(self.pairs), dtype=np.float64)
        active = c > 0
        out[active] = self.pairs[active] / c[active]
        return out

    def max_min_ratio(self, copy_factors: np.ndarray | None = None) -> float:
        """Max/min ratio over offsets with nonzero workload."""
        if copy_factors is None:
            copy_factors = np.ones(len(self.pairs), dtype=np.int64)
        norm = self.normalized(copy_factors)
        nz = norm[self.pairs > 0]
        if len(nz) == 0:
            return 0.0
        return float(nz.max() / nz.min())


def workload_histogram(imap: InOutMap, spec) -> WorkloadHistogram:
    """Exact per-offset pair counts; sums to the map size."""
    n_off = spec.num_offsets
    if len(imap.entries):
        pairs = np.bincount(imap.entries[:, 2], minlength=n_off)
    else:
        pairs = np.zeros(n_off, dtype=np.int64)
    return WorkloadHistogram(pairs)


def layout_traditional(spec, c1: int, c2: int, geom: CimGeometry) -> CimLayout:
    """Unrolled-column mapping: one C1*K^3-tall logical column per C2 channel.

    Columns taller than a tile wrap ("fold") into adjacent physical columns
    with external accumulation, so height never fails by itself — only total
    column capacity does.
    """
    n_off = spec.num_offsets
    height = c1 * n_off
    folds = -(-height // geom.tile_rows)
    col_width = geom.cells_per_weight
    phys_cols = c2 * col_width * folds
    available_cols = geom.num_tiles * geom.tile_cols
    if phys_cols > available_cols:
        deficit = (phys_cols - available_cols) * geom.tile_rows
        raise CapacityError(
            f"traditional layout needs {phys_cols} columns, have {available_cols}",
            deficit=deficit,
        )
    placements = []
    remaining = height
    for f in range(folds):
        rows = min(geom.tile_rows, remaining)
        remaining -= rows
        placements.append(Placement(-1, f, f, rows, c2 * col_width))
    return CimLayout(
        MappingScheme.TRADITIONAL,
        tuple(placements),
        np.ones(n_off, dtype=np.int64),
        geom,
    )


def layout_submatrix(
    spec,
    c1: int,
    c2: int,
    geom: CimGeometry,
    copy_factors: np.ndarray | None = None,
) -> CimLayout:
    """PE-granular sub-matrix mapping; one placement per weight copy.

    ``spec`` may be a 3-D :class:`KernelSpec` (K^3 sub-matrices) or a
    :class:`Conv2dKernel` (K^2 sub-matrices).  Each copy is independently
    activatable.
    """
    n_off = spec.num_offsets
    if copy_factors is None:
        copy_factors = np.ones(n_off, dtype=np.int64)
    copy_factors = np.asarray(copy_factors, dtype=np.int64)
    if len(copy_factors) != n_off:
        raise ValueError("copy_factors length must match the offset count")
    if (copy_factors < 0).any():
        raise ValueError("copy factors must be non-negative")

    sub_rows = c1
    sub_cols = c2 * geom.cells_per_weight
    pes_per_sub = (-(-sub_rows // geom.pe_rows)) * (-(-sub_cols // geom.pe_cols))
    needed = int(copy_factors.sum()) * pes_per_sub
    if needed > geom.pe_slots:
        deficit = (needed - geom.pe_slots) * geom.pe_rows * geom.pe_cols
        raise CapacityError(
            f"sub-matrix layout needs {needed} PE slots, have {geom.pe_slots}",
            deficit=deficit,
        )
    placements = []
    slot = 0
    for k in range(n_off):
        for c in range(int(copy_factors[k])):
            placements.append(Placement(k, c, slot, sub_rows, sub_cols))
            slot += pes_per_sub
    return CimLayout(MappingScheme.SUBMATRIX, tuple(placements), copy_factors, geom)


def w2b_optimize(hist: WorkloadHistogram, pe_budget: int) -> np.ndarray:
    """Copy factors minimizing the maximum normalized workload.

    Every offset with pairs gets one copy; the remaining budget goes
    greedily to the offset with the current largest pairs/copies, ties
    broken by the lowest offset index.  Offsets with zero workload get no
    copy.
    """
    pairs = hist.pairs
    nonzero = np.nonzero(pairs > 0)[0]
    copies = np.zeros(len(pairs), dtype=np.int64)
    if len(nonzero) == 0:
        return copies
    if pe_budget < len(nonzero):
        raise BudgetError(
            f"budget {pe_budget} below the {len(nonzero)} offsets with workload"
        )
    copies[nonzero] = 1
    remaining = pe_budget - len(nonzero)
    heap = [(-float(pairs[k]), int(k)) for k in nonzero]
    heapq.heapify(heap)
    for _ in range(remaining):
        _, k = heap[0]
        heapq.heapreplace(heap, (-float(pairs[k]) / (copies[k] + 1), k))
        copies[k] += 1
    return copies


def w2b_bruteforce(hist: WorkloadHistogram, pe_budget: int) -> float:
    """Exact optimum of the max normalized workload, by threshold search.

    Independent of the greedy path: a target T is feasible iff
    sum(ceil(pairs/T)) fits the budget; the optimum is the smallest
    feasible candidate pairs[k]/c.
    """
    pairs = hist.pairs[hist.pairs > 0]
    if len(pairs) == 0:
        return 0.0
    if pe_budget < len(pairs):
        raise BudgetError("budget below active offset count")
    candidates = sorted(
        {float(p) / c for p in pairs.tolist() for c in range(1, pe_budget + 1)}
    )
    best = float(pairs.max())
    for t in candidates:
        need = int(np.ceil(pairs / t).sum())
        if need <= pe_budget:
            best = t
            break
    return best


@dataclass
class CycleReport:
    cycles: int
    utilization: float
    gather_fetches: int
    naive_fetches: int
    active_copies: int

    def to_dict(self) -> dict:
        return {
            "cycles": int(self.cycles),
            "utilization": float(self.utilization),
            "gather_fetches": int(self.gather_fetches),
            "naive_fetches": int(self.naive_fetches),
            "active_copies": int(self.active_copies),
        }


def spconv_cycles(
    imap: InOutMap,
    hist: WorkloadHistogram,
    layout: CimLayout,
    batching: bool = True,
) -> CycleReport:
    """Weight-stationary cycle estimate for one sparse layer.

    Pairs distribute round-robin over an offset's copies; each wave every
    active copy consumes one pair, so cycles = max over copies of its queue
    length.  With ``batching`` the per-wave pair choice greedily reuses
    inputs gathered for the previous wave (ties: smallest input index) and
    the fetch counter only charges newly gathered features.
    """
    entries = imap.canonical()
    total_pairs = len(entries)
    copy_factors = layout.copy_factors
    if total_pairs:
        used = np.unique(entries[:, 2])
        missing = used[(copy_factors[used] <= 0)]
        if len(missing):
            raise ValueError(f"layout places no copy for offset {int(missing[0])}")
    active_copies = int(copy_factors.sum())
    if total_pairs == 0 or active_copies == 0:
        return CycleReport(0, 0.0, 0, 0, active_copies)

    # round-robin split of each offset's pairs over its copies
    queues: list[np.ndarray] = []
    for k in np.unique(entries[:, 2]):
        ins = entries[entries[:, 2] == k, 0]
        c = int(copy_factors[k])
        for r in range(c):
            q = np.sort(ins[r::c])
            if len(q):
                queues.append(q)
    cycles = max(len(q) for q in queues)

    naive = total_pairs
    if not batching:
        gather = total_pairs
        util = total_pairs / (cycles * active_copies)
        return CycleReport(cycles, util, gather, naive, active_copies)

    # wave walk with reuse credit against the previous wave's batch
    pend = [Counter(q.tolist()) for q in queues]
    ptrs = [0] * len(queues)
    sorted_q = [q for q in queues]
    prev_batch: set[int] = set()
    gather = 0
    for _ in range(cycles):
        batch = set()
        for ci in range(len(queues)):
            if not pend[ci]:
                continue
            pick = None
            for candidate in sorted(prev_batch):
                if pend[ci].get(candidate, 0) > 0:
                    pick = candidate
                    break
            if pick is None:
                q = sorted_q[ci]
                p = ptrs[ci]
                while p < len(q) and pend[ci].get(int(q[p]), 0) == 0:
                    p += 1
                ptrs[ci] = p
                pick = int(q[p])
            pend[ci][pick] -= 1
            if pend[ci][pick] == 0:
                del pend[ci][pick]
            batch.add(pick)
        gather += len(batch - prev_batch)
        prev_batch = batch
    util = total_pairs / (cycles * active_copies)
    return CycleReport(cycles, util, gather, naive, active_copies)


def abstract_event_cost(
    report: CycleReport,
    cost_per_wave: float = 1.0,
    cost_per_fetch: float = 1.0,
    cost_per_map_read: float = 0.0,
    map_reads: int = 0,
) -> float:
    """Weighted sum of the abstract counters; unit costs are the caller's.

    No absolute energy claim is made — this just lets a user bind their own
    per-event costs to the wave/fetch/map-read counts.
    """
    return (
        cost_per_wave * report.cycles
        + cost_per_fetch * report.gather_fetches
        + cost_per_map_read * map_reads
    )


@dataclass
class Conv2dReport:
    cycles: int
    fetches: int
    naive_fetches: int

    def to_dict(self) -> dict:
        return {
            "cycles": int(self.cycles),
            "fetches": int(self.fetches),
            "naive_fetches": int(self.naive_fetches),
        }


def conv2d_reuse_cycles(
    height: int, width: int, c1: int, c2: int, k: int, layout: CimLayout | None = None
) -> Conv2dReport:
    """Sliding-window schedule for a dense 2-D layer on sub-matrix PEs.

    A K-row line buffer keeps every input feature vector on chip for all
    K^2 sub-matrices that touch it, so each vector is fetched once; the
    naive counter re-fetches the whole window per output position.
    """
    if k > height or k > width:
        raise ValueError("kernel larger than the feature map")
    out_h, out_w = height - k + 1, width - k + 1
    fetched = np.zeros((height, width), dtype=bool)
    fetches = 0
    for r in range(out_h):
        rows = range(k) if r == 0 else (r + k - 1,)
        for rr in rows:
            for cc in range(width):
                if not fetched[rr, cc]:
                    fetched[rr, cc] = True
                    fetches += 1
    fetches *= c1
    naive = k * k * out_h * out_w * c1
    cycles = out_h * out_w + (k * k - 1)  # pipeline fill
    return Conv2dReport(cycles, fetches, naive)
