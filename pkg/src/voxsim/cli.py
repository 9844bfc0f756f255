"""Command-line driver: scene generation, searches, conv, CIM reports, sweeps.

Every subcommand reads one flat ``key = value`` config file (see
``configs/`` for the shipped presets) and accepts ``--set key=value``
overrides.  Results go to stdout or ``--out``.  Exit codes: 0 success,
2 config error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io as vio
from .core import (
    GridShape,
    KernelSpec,
    SparseTensor,
    Variant,
    derive_output_coords,
    kernel_offsets,
    output_grid_shape,
)
from .errors import ConfigError, VoxsimError
from .cimmodel import (
    CimGeometry,
    layout_submatrix,
    layout_traditional,
    spconv_cycles,
    w2b_optimize,
    workload_histogram,
)
from .mapsearch import BufferConfig, expand_symmetric, oracle_search
from .pipeline import LayerNode, schedule_hybrid
from .spconv import execute_spconv
from .toolkit import (
    Distribution,
    SceneSpec,
    generate_scene,
    load_config,
    resolve_fifo,
    run_search_method,
    run_sweep,
    sweep_rows_to_csv,
)


def _merged_config(args) -> dict[str, str]:
    cfg: dict[str, str] = {}
    if args.config:
        cfg.update(load_config(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip().lower()] = value.strip()
    return cfg


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _scene_from_cfg(cfg: dict[str, str]) -> SparseTensor:
    if "input" in cfg:
        return vio.load_tensor(cfg["input"])
    try:
        shape = GridShape.parse(cfg.get("grid", "64x64x16"))
        spec = SceneSpec(
            shape,
            float(cfg.get("sparsity", "0.005")),
            Distribution.parse(cfg.get("distribution", "uniform")),
            int(cfg.get("seed", "0")),
            int(cfg.get("channels", "1")),
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad scene config: {exc}") from None
    return generate_scene(spec)


def _kernel_from_cfg(cfg: dict[str, str]) -> KernelSpec:
    variant = {
        "submanifold": Variant.SUBMANIFOLD,
        "generalized": Variant.GENERALIZED,
        "transposed": Variant.TRANSPOSED,
    }.get(cfg.get("variant", "submanifold"))
    if variant is None:
        raise ConfigError(f"unknown variant {cfg.get('variant')!r}")
    try:
        return KernelSpec(
            int(cfg.get("kernel_size", "3")), int(cfg.get("stride", "1")), variant
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _buffer_from_cfg(cfg: dict[str, str], scene, block_grid) -> BufferConfig:
    sorter = int(cfg.get("sorter_len", "64"))
    fifo_i = resolve_fifo(cfg.get("fifo_i", str(sorter)), scene, block_grid)
    fifo_ii = resolve_fifo(cfg.get("fifo_ii", str(sorter)), scene, block_grid)
    backup = int(cfg.get("backup_capacity", "0"))
    try:
        return BufferConfig(sorter, fifo_i, fifo_ii, backup)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _block_grid_from_cfg(cfg: dict[str, str]) -> tuple[int, int]:
    text = cfg.get("block_grid", "1x1").lower()
    a, b = text.split("x")
    return int(a), int(b)


def cmd_gen(args) -> int:
    cfg = _merged_config(args)
    scene = _scene_from_cfg(cfg)
    if args.out:
        vio.save_tensor(args.out, scene)
    else:
        json.dump(vio.tensor_to_json(scene), sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def cmd_search(args) -> int:
    cfg = _merged_config(args)
    scene = _scene_from_cfg(cfg)
    method = cfg.get("method", "doms")
    block_grid = _block_grid_from_cfg(cfg)
    buf = _buffer_from_cfg(cfg, scene, block_grid)
    if method == "oracle":
        imap = oracle_search(scene, scene.coords, _kernel_from_cfg(cfg))
        doc = {"method": method, "map_entries": len(imap)}
        if args.emit_map:
            doc["map"] = vio.map_to_json(imap)
    else:
        imap, stats = run_search_method(method, scene, buf, block_grid)
        full = expand_symmetric(imap, _kernel_from_cfg(cfg))
        doc = {
            "method": method,
            "map_entries": len(full),
            "stats": vio.stats_to_json(stats),
        }
        if args.emit_map:
            doc["map"] = vio.map_to_json(full)
    _emit(json.dumps(doc, sort_keys=True) + "\n", args.out)
    return 0


def cmd_conv(args) -> int:
    cfg = _merged_config(args)
    scene = _scene_from_cfg(cfg)
    if "weights" not in cfg:
        raise ConfigError("conv requires weights = <path>")
    weights = vio.load_weights(cfg["weights"])
    spec = _kernel_from_cfg(cfg)
    if spec.variant is Variant.TRANSPOSED:
        if "targets" not in cfg:
            raise ConfigError("transposed conv requires targets = <tensor path>")
        targets = vio.load_tensor(cfg["targets"]).coords
        out_coords = derive_output_coords(scene, spec, targets)
    else:
        out_coords = derive_output_coords(scene, spec)
    imap = oracle_search(scene, out_coords, spec)
    out_shape = (
        scene.shape
        if spec.variant is Variant.SUBMANIFOLD
        else output_grid_shape(scene.shape, spec)
    )
    if spec.variant is Variant.TRANSPOSED:
        mx = out_coords.max(axis=0) + 1 if len(out_coords) else [1, 1, 1]
        out_shape = GridShape(int(mx[0]), int(mx[1]), int(mx[2]))
    result = execute_spconv(scene, out_coords, imap, weights, out_shape)
    if args.out:
        vio.save_tensor(args.out, result)
    else:
        json.dump(vio.tensor_to_json(result), sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
    return 0


def _geometry_from_cfg(cfg: dict[str, str]) -> CimGeometry:
    try:
        return CimGeometry(
            tile_rows=int(cfg.get("tile_rows", "1024")),
            tile_cols=int(cfg.get("tile_cols", "1024")),
            cell_bits=int(cfg.get("cell_bits", "1")),
            weight_bits=int(cfg.get("weight_bits", "8")),
            pe_rows=int(cfg.get("pe_rows", "128")),
            pe_cols=int(cfg.get("pe_cols", "128")),
            num_tiles=int(cfg.get("num_tiles", "1")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_cim(args) -> int:
    cfg = _merged_config(args)
    scene = _scene_from_cfg(cfg)
    spec = _kernel_from_cfg(cfg)
    geom = _geometry_from_cfg(cfg)
    c1 = int(cfg.get("c1", str(scene.channels)))
    c2 = int(cfg.get("c2", "16"))
    imap = oracle_search(scene, scene.coords, spec)
    hist = workload_histogram(imap, spec)
    scheme = cfg.get("scheme", "submatrix")
    if scheme == "traditional":
        layout = layout_traditional(spec, c1, c2, geom)
    elif scheme == "submatrix":
        layout = layout_submatrix(spec, c1, c2, geom)
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    report = spconv_cycles(imap, hist, layout)
    doc = {
        "histogram": [int(p) for p in hist.pairs],
        "layout": layout.to_dict(),
        "cycles": report.to_dict(),
    }
    _emit(json.dumps(doc, sort_keys=True) + "\n", args.out)
    return 0


def cmd_w2b(args) -> int:
    cfg = _merged_config(args)
    scene = _scene_from_cfg(cfg)
    spec = _kernel_from_cfg(cfg)
    geom = _geometry_from_cfg(cfg)
    imap = oracle_search(scene, scene.coords, spec)
    hist = workload_histogram(imap, spec)
    budget = int(cfg.get("budget", str(2 * spec.num_offsets)))
    copies = w2b_optimize(hist, budget)
    ones = np.where(hist.pairs > 0, 1, 0).astype(np.int64)
    before = spconv_cycles(imap, hist, layout_submatrix(spec, 1, 1, geom, ones))
    after = spconv_cycles(imap, hist, layout_submatrix(spec, 1, 1, geom, copies))
    offs = kernel_offsets(spec)
    lines = ["dx,dy,dz,pairs,copies,normalized_workload"]
    norm = hist.normalized(copies)
    for k in range(spec.num_offsets):
        lines.append(
            f"{offs[k][0]},{offs[k][1]},{offs[k][2]},{hist.pairs[k]},"
            f"{copies[k]},{norm[k]:.6f}"
        )
    summary = (
        f"# cycles_before={before.cycles} cycles_after={after.cycles} "
        f"speedup={before.cycles / after.cycles if after.cycles else 0.0:.3f}\n"
    )
    _emit(summary + "\n".join(lines) + "\n", args.out)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _merged_config(args)
    threshold = float(cfg.get("overlap_threshold", "0.25"))
    layers = []
    idx = 1
    while f"layer{idx}" in cfg:
        parts = [p.strip() for p in cfg[f"layer{idx}"].split(",")]
        if len(parts) < 3:
            raise ConfigError(
                f"layer{idx}: expected 'kernel,ms_latency,compute_latency[,shared]'"
            )
        kname = parts[0]
        spec = {
            "subm3": KernelSpec(3, 1, Variant.SUBMANIFOLD),
            "gconv2": KernelSpec(2, 2, Variant.GENERALIZED),
            "tconv2": KernelSpec(2, 2, Variant.TRANSPOSED),
        }.get(kname)
        if spec is None:
            raise ConfigError(f"layer{idx}: unknown kernel {kname!r}")
        shared = len(parts) > 3 and parts[3] == "shared"
        layers.append(
            LayerNode(f"layer{idx}", spec, float(parts[1]), float(parts[2]), shared)
        )
        idx += 1
    if not layers:
        raise ConfigError("pipeline config needs layer1, layer2, ... entries")
    try:
        schedule = schedule_hybrid(layers, threshold)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    lines = ["layer,stage,start,end"]
    for layer_id, stage, start, end in schedule.gantt_rows():
        lines.append(f"{layer_id},{stage},{start:.6f},{end:.6f}")
    lines.append(f"# makespan={schedule.makespan:.6f}")
    lines.append(f"# sequential={schedule.sequential_baseline:.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _merged_config(args)
    rows = run_sweep(cfg)
    _emit(sweep_rows_to_csv(rows), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxsim",
        description="sparse-voxel map-search and CIM dataflow simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "gen": cmd_gen,
        "search": cmd_search,
        "conv": cmd_conv,
        "cim": cmd_cim,
        "w2b": cmd_w2b,
        "pipeline": cmd_pipeline,
        "sweep": cmd_sweep,
    }
    for name, handler in handlers.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config entry",
        )
        p.add_argument("--out", help="write results to this path instead of stdout")
        if name == "search":
            p.add_argument(
                "--emit-map", action="store_true", help="include map entries in output"
            )
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VoxsimError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
