"""voxsim: sparse-voxel map-search and CIM dataflow simulator."""

from .core import (
    GridShape,
    KernelSpec,
    SparseTensor,
    Variant,
    canonical_sort,
    derive_output_coords,
    gconv2,
    half_offsets,
    kernel_offsets,
    subm3,
    tconv2,
)
from .mapsearch import (
    AccessStats,
    BufferConfig,
    DepthEncodingTable,
    InOutMap,
    block_doms_search,
    build_depth_table,
    doms_search,
    expand_symmetric,
    oracle_search,
    output_major_search,
    weight_major_search,
)
from .spconv import WeightTensor, chain_layers, dense_oracle, execute_spconv
from .cimmodel import (
    CimGeometry,
    CimLayout,
    Conv2dKernel,
    WorkloadHistogram,
    conv2d_reuse_cycles,
    layout_submatrix,
    layout_traditional,
    spconv_cycles,
    w2b_optimize,
    workload_histogram,
)
from .pipeline import LayerNode, Schedule, schedule_hybrid
from .toolkit import Distribution, SceneSpec, generate_scene, run_sweep, voxelize

__version__ = "0.1.0"

__all__ = [
    "AccessStats",
    "BufferConfig",
    "CimGeometry",
    "CimLayout",
    "Conv2dKernel",
    "DepthEncodingTable",
    "Distribution",
    "GridShape",
    "InOutMap",
    "KernelSpec",
    "LayerNode",
    "SceneSpec",
    "Schedule",
    "SparseTensor",
    "Variant",
    "WeightTensor",
    "WorkloadHistogram",
    "block_doms_search",
    "build_depth_table",
    "canonical_sort",
    "chain_layers",
    "conv2d_reuse_cycles",
    "dense_oracle",
    "derive_output_coords",
    "doms_search",
    "execute_spconv",
    "expand_symmetric",
    "gconv2",
    "generate_scene",
    "half_offsets",
    "kernel_offsets",
    "layout_submatrix",
    "layout_traditional",
    "oracle_search",
    "output_major_search",
    "run_sweep",
    "schedule_hybrid",
    "spconv_cycles",
    "subm3",
    "tconv2",
    "voxelize",
    "w2b_optimize",
    "weight_major_search",
    "workload_histogram",
]
