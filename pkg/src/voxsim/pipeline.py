"""Hybrid map-search / compute pipeline scheduling over a layer chain.

The search core and the computing core run concurrently: layer i+1's map
search starts as soon as layer i's finishes (it does not depend on layer
i's convolution results), and a layer's convolution may start once a
configurable fraction of its own map search is done.  Consecutive
submanifold layers with the same kernel share one map, so the second
layer's search costs nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import KernelSpec, Variant


@dataclass(frozen=True)
class LayerNode:
    """One layer's abstract latencies, in user-chosen time units."""

    layer_id: str
    spec: KernelSpec
    ms_latency: float
    compute_latency: float
    map_shared_with_prev: bool = False

    def __post_init__(self):
        if self.ms_latency < 0 or self.compute_latency < 0:
            raise ValueError("latencies must be non-negative")


@dataclass
class StageInterval:
    layer_id: str
    ms_start: float
    ms_end: float
    compute_start: float
    compute_end: float


@dataclass
class Schedule:
    intervals: list[StageInterval]
    makespan: float
    sequential_baseline: float

    def gantt_rows(self) -> list[tuple[str, str, float, float]]:
        rows = []
        for iv in self.intervals:
            rows.append((iv.layer_id, "map_search", iv.ms_start, iv.ms_end))
            rows.append((iv.layer_id, "compute", iv.compute_start, iv.compute_end))
        return rows


def validate_sharing(layers: list[LayerNode]) -> None:
    for i, node in enumerate(layers):
        if not node.map_shared_with_prev:
            continue
        if i == 0:
            raise ValueError(f"layer {node.layer_id}: nothing before it to share with")
        prev = layers[i - 1]
        same = (
            node.spec.variant is Variant.SUBMANIFOLD
            and prev.spec.variant is Variant.SUBMANIFOLD
            and node.spec.size == prev.spec.size
            and node.spec.stride == prev.spec.stride
        )
        if not same:
            raise ValueError(
                f"layer {node.layer_id}: map sharing requires consecutive "
                "submanifold layers with identical kernel size and stride"
            )


def schedule_hybrid(
    layers: list[LayerNode], overlap_threshold: float = 0.25
) -> Schedule:
    """Two-core schedule: chained map searches, partially overlapped compute.

    ``overlap_threshold`` is the fraction of a layer's own map search that
    must complete before its convolution may begin (0 = start together,
    1 = wait for the full map).  Compute stages additionally serialize on
    the computing core.
    """
    if not 0.0 <= overlap_threshold <= 1.0:
        raise ValueError("overlap_threshold must lie in [0, 1]")
    validate_sharing(layers)

    intervals: list[StageInterval] = []
    ms_clock = 0.0
    compute_clock = 0.0
    for node in layers:
        ms_latency = 0.0 if node.map_shared_with_prev else node.ms_latency
        ms_start = ms_clock
        ms_end = ms_start + ms_latency
        ready = ms_start + overlap_threshold * ms_latency
        compute_start = max(compute_clock, ready)
        compute_end = compute_start + node.compute_latency
        intervals.append(
            StageInterval(node.layer_id, ms_start, ms_end, compute_start, compute_end)
        )
        ms_clock = ms_end
        compute_clock = compute_end

    makespan = max((iv.compute_end for iv in intervals), default=0.0)
    sequential = sum(
        (0.0 if n.map_shared_with_prev else n.ms_latency) + n.compute_latency
        for n in layers
    )
    return Schedule(intervals, makespan, sequential)
