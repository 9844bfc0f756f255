"""Scene generation, point-cloud voxelization, run configs and sweeps.

Scenes are synthetic: uniform random occupancy, Gaussian clusters (dense
partial regions), or a noisy 2-D manifold that mimics LiDAR returns.  A
sweep runs a grid of (method, scene, buffer) combinations and emits one CSV
row per run; reruns with the same config are byte-identical.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import GridShape, SparseTensor, subm3
from .errors import ConfigError, EmptySceneWarning
from .mapsearch import (
    BufferConfig,
    block_doms_search,
    block_ids,
    build_depth_table,
    doms_search,
    output_major_search,
    replicated_border_mask,
    weight_major_search,
)

SEARCH_METHODS = ("weight_major", "output_major", "doms", "block_doms")

SWEEP_COLUMNS = (
    "method",
    "grid",
    "sparsity",
    "seed",
    "n_voxels",
    "block_grid",
    "sorter_len",
    "fifo_i",
    "fifo_ii",
    "normalized_access",
    "offchip_coord_reads",
    "sorter_invocations",
    "table_reads",
    "table_size_entries",
    "replicated_voxels",
    "replicated_fraction",
    "peak_fifo_occupancy",
)


@dataclass(frozen=True)
class Distribution:
    kind: str  # uniform | clustered | surface
    num_clusters: int = 8
    spread: float = 3.0
    noise: float = 1.0

    @classmethod
    def parse(cls, text: str) -> "Distribution":
        parts = text.strip().lower().split(":")
        kind = parts[0]
        if kind == "uniform":
            return cls("uniform")
        if kind == "clustered":
            args = parts[1].split(",") if len(parts) > 1 else []
            num = int(args[0]) if args else 8
            spread = float(args[1]) if len(args) > 1 else 3.0
            return cls("clustered", num_clusters=num, spread=spread)
        if kind == "surface":
            noise = float(parts[1]) if len(parts) > 1 else 1.0
            return cls("surface", noise=noise)
        raise ConfigError(f"unknown distribution {text!r}")

    def __str__(self) -> str:
        if self.kind == "clustered":
            return f"clustered:{self.num_clusters},{self.spread:g}"
        if self.kind == "surface":
            return f"surface:{self.noise:g}"
        return "uniform"


@dataclass(frozen=True)
class SceneSpec:
    shape: GridShape
    sparsity: float
    distribution: Distribution = Distribution("uniform")
    seed: int = 0
    channels: int = 1

    def __post_init__(self):
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in (0, 1]")
        if self.channels < 1:
            raise ValueError("channels must be positive")


def _keys_to_coords(keys: np.ndarray, shape: GridShape) -> np.ndarray:
    z, rest = np.divmod(keys, shape.ny * shape.nx)
    y, x = np.divmod(rest, shape.nx)
    return np.stack([x, y, z], axis=1).astype(np.int32)


def _draw_unique_keys(rng, volume: int, n: int) -> np.ndarray:
    """n distinct cell keys, uniform over the grid.

    Small grids use an exact no-replacement draw; huge grids (where a
    permutation will not fit) use rejection over raw 64-bit draws, which is
    cheap at the sparsities this regime implies.
    """
    if n >= volume:
        return np.arange(volume, dtype=np.int64)
    if volume <= 4_000_000:
        return rng.choice(volume, size=n, replace=False).astype(np.int64)
    uniq = np.empty(0, dtype=np.int64)
    while len(uniq) < n:
        extra = rng.integers(0, volume, size=max(64, int((n - len(uniq)) * 1.2)))
        uniq = np.unique(np.concatenate([uniq, extra]))
    return rng.choice(uniq, size=n, replace=False)


def generate_scene(spec: SceneSpec) -> SparseTensor:
    """Deterministic synthetic scene for a (shape, sparsity, seed) triple."""
    rng = np.random.default_rng(spec.seed)
    shape = spec.shape
    volume = shape.volume
    expected = spec.sparsity * volume
    if expected < 1.0:
        warnings.warn(
            f"expected occupancy {expected:.3f} < 1 voxel", EmptySceneWarning
        )
        return SparseTensor(
            np.empty((0, 3), dtype=np.int32),
            np.empty((0, spec.channels)),
            shape,
        )

    dist = spec.distribution
    if dist.kind == "uniform":
        n = int(rng.binomial(volume, spec.sparsity))
        n = max(1, min(n, volume))
        keys = _draw_unique_keys(rng, volume, n)
    elif dist.kind == "clustered":
        target = max(1, int(round(expected)))
        centers = rng.uniform(0, 1, size=(dist.num_clusters, 3)) * np.array(
            shape.as_tuple()
        )
        which = rng.integers(0, dist.num_clusters, size=target * 4)
        pts = centers[which] + rng.normal(0, dist.spread, size=(target * 4, 3))
        cells = np.floor(pts).astype(np.int64)
        ok = (cells >= 0).all(axis=1)
        for axis, dim in enumerate(shape.as_tuple()):
            ok &= cells[:, axis] < dim
        cells = cells[ok]
        keys = np.unique(
            (cells[:, 2] * shape.ny + cells[:, 1]) * shape.nx + cells[:, 0]
        )
        if len(keys) > target:
            keys = rng.choice(keys, size=target, replace=False)
    else:  # surface
        target = max(1, int(round(expected)))
        amp = np.array([0.25, 0.15]) * shape.nz
        freq = rng.uniform(1.0, 2.5, size=2)
        phase = rng.uniform(0, 2 * np.pi, size=2)
        base = 0.5 * shape.nz
        xy = rng.uniform(0, 1, size=(target * 4, 2)) * np.array(
            [shape.nx, shape.ny]
        )
        zf = (
            base
            + amp[0] * np.sin(2 * np.pi * freq[0] * xy[:, 0] / shape.nx + phase[0])
            + amp[1] * np.cos(2 * np.pi * freq[1] * xy[:, 1] / shape.ny + phase[1])
            + rng.normal(0, dist.noise, size=len(xy))
        )
        cells = np.stack(
            [np.floor(xy[:, 0]), np.floor(xy[:, 1]), np.round(zf)], axis=1
        ).astype(np.int64)
        ok = (cells >= 0).all(axis=1)
        for axis, dim in enumerate(shape.as_tuple()):
            ok &= cells[:, axis] < dim
        cells = cells[ok]
        keys = np.unique(
            (cells[:, 2] * shape.ny + cells[:, 1]) * shape.nx + cells[:, 0]
        )
        if len(keys) > target:
            keys = rng.choice(keys, size=target, replace=False)

    keys = np.sort(keys)
    coords = _keys_to_coords(keys, shape)
    features = rng.standard_normal((len(coords), spec.channels))
    return SparseTensor(coords, features, shape)


def voxelize(
    points: np.ndarray,
    origin: tuple[float, float, float],
    voxel_size: float,
    shape: GridShape,
    features: np.ndarray | None = None,
) -> SparseTensor:
    """Floor-quantize world points to the grid, averaging duplicate cells."""
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if features is None:
        feats = np.ones((len(pts), 1))
    else:
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
    cells = np.floor((pts - np.asarray(origin)) / voxel_size).astype(np.int64)
    ok = (cells >= 0).all(axis=1)
    for axis, dim in enumerate(shape.as_tuple()):
        ok &= cells[:, axis] < dim
    cells, feats = cells[ok], feats[ok]
    if len(cells) == 0:
        return SparseTensor(
            np.empty((0, 3), dtype=np.int32), np.empty((0, feats.shape[1])), shape
        )
    keys = (cells[:, 2] * shape.ny + cells[:, 1]) * shape.nx + cells[:, 0]
    uniq, inverse = np.unique(keys, return_inverse=True)
    sums = np.zeros((len(uniq), feats.shape[1]))
    np.add.at(sums, inverse, feats)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    means = sums / counts[:, None]
    return SparseTensor(_keys_to_coords(uniq, shape), means, shape)


def devoxelize_centers(
    tensor: SparseTensor, origin: tuple[float, float, float], voxel_size: float
) -> np.ndarray:
    """Cell-center world coordinates of each voxel."""
    return (tensor.coords.astype(np.float64) + 0.5) * voxel_size + np.asarray(origin)


# ---------------------------------------------------------------------------
# buffer sizing helpers used by the stability experiments
# ---------------------------------------------------------------------------


def max_depth_occupancy(tensor: SparseTensor) -> int:
    if tensor.n == 0:
        return 0
    return int(np.bincount(tensor.coords[:, 2], minlength=tensor.shape.nz).max())


def max_block_depth_occupancy(
    tensor: SparseTensor, block_grid: tuple[int, int]
) -> int:
    """Largest per-(block, depth) stream size, replicated borders included."""
    if tensor.n == 0:
        return 0
    table = build_depth_table(tensor, block_grid)
    coords = tensor.coords
    bid = block_ids(coords, table)
    copies = replicated_border_mask(coords, table)
    aug_bid = np.concatenate([bid, bid[copies] - block_grid[1]])
    aug_z = np.concatenate([coords[:, 2], coords[copies, 2]]).astype(np.int64)
    nz = tensor.shape.nz
    counts = np.bincount(aug_bid * nz + aug_z, minlength=table.num_blocks * nz)
    return int(counts.max())


def resolve_fifo(setting, tensor: SparseTensor, block_grid: tuple[int, int]) -> int:
    """Interpret a FIFO size setting: an integer, 'fit-depth', or 'fit-block-depth'."""
    if isinstance(setting, int):
        return setting
    text = str(setting).strip().lower()
    if text == "fit-depth":
        return max(1, max_depth_occupancy(tensor))
    if text == "fit-block-depth":
        return max(1, max_block_depth_occupancy(tensor, block_grid))
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"bad FIFO size {setting!r}") from None


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _split_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def parse_block_grids(text: str) -> list[tuple[int, int]]:
    grids = []
    for token in _split_list(text):
        a, b = token.lower().split("x")
        grids.append((int(a), int(b)))
    return grids


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepJob:
    method: str
    shape: GridShape
    sparsity: float
    seed: int
    distribution: Distribution
    sorter_len: int
    fifo_i: object
    fifo_ii: object
    block_grid: tuple[int, int]
    # 'fit-block-depth' FIFO settings resolve against this partition so a
    # comparison sweep gives every method the same buffer
    fifo_grid: tuple[int, int] = (1, 1)


def _run_search(method: str, tensor: SparseTensor, buf: BufferConfig, block_grid):
    spec = subm3()
    out_coords = tensor.coords
    if method == "weight_major":
        return weight_major_search(tensor, out_coords, spec, buf)
    if method == "output_major":
        return output_major_search(tensor, out_coords, spec, buf)
    if method == "doms":
        table = build_depth_table(tensor, (1, 1))
        return doms_search(tensor, out_coords, spec, buf, table)
    if method == "block_doms":
        return block_doms_search(tensor, out_coords, spec, buf, block_grid)
    raise ConfigError(f"unknown search method {method!r}")


def run_search_method(
    method: str, tensor: SparseTensor, buf: BufferConfig, block_grid=(1, 1)
):
    """Map + stats for one named method (maps from the half-search methods
    are in half form; expand with :func:`voxsim.mapsearch.expand_symmetric`)."""
    if method not in SEARCH_METHODS:
        raise ConfigError(f"unknown search method {method!r}")
    return _run_search(method, tensor, buf, block_grid)


def _sweep_job_rows(job: SweepJob) -> list[dict]:
    scene = generate_scene(
        SceneSpec(job.shape, job.sparsity, job.distribution, job.seed)
    )
    fifo_i = resolve_fifo(job.fifo_i, scene, job.fifo_grid)
    fifo_ii = resolve_fifo(job.fifo_ii, scene, job.fifo_grid)
    buf = BufferConfig(job.sorter_len, fifo_i, fifo_ii)
    _, stats = run_search_method(job.method, scene, buf, job.block_grid)
    n = scene.n
    return [
        {
            "method": job.method,
            "grid": str(job.shape),
            "sparsity": f"{job.sparsity:g}",
            "seed": job.seed,
            "n_voxels": n,
            "block_grid": f"{job.block_grid[0]}x{job.block_grid[1]}"
            if job.method == "block_doms"
            else "",
            "sorter_len": job.sorter_len,
            "fifo_i": fifo_i,
            "fifo_ii": fifo_ii,
            "normalized_access": f"{stats.normalized_access:.6f}",
            "offchip_coord_reads": stats.offchip_coord_reads,
            "sorter_invocations": stats.sorter_invocations,
            "table_reads": stats.table_reads,
            "table_size_entries": stats.table_size_entries,
            "replicated_voxels": stats.replicated_voxels,
            "replicated_fraction": f"{stats.replicated_voxels / n if n else 0.0:.6f}",
            "peak_fifo_occupancy": stats.peak_fifo_occupancy,
        }
    ]


def build_sweep_jobs(cfg: dict[str, str]) -> list[SweepJob]:
    try:
        methods = _split_list(cfg.get("methods", "doms"))
        for mth in methods:
            if mth not in SEARCH_METHODS:
                raise ConfigError(f"unknown search method {mth!r}")
        shape = GridShape.parse(cfg.get("grid", "64x64x16"))
        sparsities = [float(s) for s in _split_list(cfg.get("sparsities", "0.005"))]
        seeds = [int(s) for s in _split_list(cfg.get("seeds", "0"))]
        distribution = Distribution.parse(cfg.get("distribution", "uniform"))
        sorter_len = int(cfg.get("sorter_len", "64"))
        fifo_i = cfg.get("fifo_i", str(sorter_len))
        fifo_ii = cfg.get("fifo_ii", str(sorter_len))
        block_grids = parse_block_grids(cfg.get("block_grids", cfg.get("block_grid", "1x1")))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad sweep config: {exc}") from None

    jobs = []
    fifo_grid = block_grids[0]
    for seed in seeds:
        for sparsity in sparsities:
            for method in methods:
                grids = block_grids if method == "block_doms" else [(1, 1)]
                for bg in grids:
                    jobs.append(
                        SweepJob(
                            method,
                            shape,
                            sparsity,
                            seed,
                            distribution,
                            sorter_len,
                            fifo_i,
                            fifo_ii,
                            bg,
                            fifo_grid,
                        )
                    )
    return jobs


def run_sweep(cfg: dict[str, str], workers: int = 1) -> list[dict]:
    """All sweep rows, in deterministic config order."""
    jobs = build_sweep_jobs(cfg)
    workers = max(1, int(cfg.get("workers", str(workers))))
    if workers == 1 or len(jobs) <= 1:
        nested = [_sweep_job_rows(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(_sweep_job_rows, jobs))
    return [row for rows in nested for row in rows]


def sweep_rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"
