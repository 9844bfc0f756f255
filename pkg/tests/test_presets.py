"""The shipped sweep configs reproduce the expected method orderings."""

from pathlib import Path

from voxsim.toolkit import load_config, run_sweep

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def by_method(rows):
    out = {}
    for row in rows:
        out.setdefault(row["method"], {})[row["sparsity"]] = float(
            row["normalized_access"]
        )
    return out


def test_lowres_sweep_ordering():
    cfg = load_config(CONFIG_DIR / "lowres_sweep.cfg")
    table = by_method(run_sweep(cfg))
    for sparsity in ("0.001", "0.002", "0.005", "0.01"):
        doms = table["doms"][sparsity]
        om = table["output_major"][sparsity]
        wm = table["weight_major"][sparsity]
        assert doms <= om <= wm, f"ordering broken at sparsity {sparsity}"
        assert doms <= 1.1


def test_highres_sweep_block_lowest():
    cfg = load_config(CONFIG_DIR / "highres_sweep.cfg")
    cfg["sparsities"] = "0.002, 0.005"  # subset keeps the test quick
    table = by_method(run_sweep(cfg))
    for sparsity in ("0.002", "0.005"):
        block = table["block_doms"][sparsity]
        others = [
            table["doms"][sparsity],
            table["output_major"][sparsity],
            table["weight_major"][sparsity],
        ]
        assert block < min(others), f"block_doms not lowest at {sparsity}"
        assert block <= 1.1


def test_tradeoff_curve_shape():
    cfg = load_config(CONFIG_DIR / "tradeoff.cfg")
    rows = run_sweep(cfg)
    assert [r["block_grid"] for r in rows] == [
        "1x1",
        "1x2",
        "2x2",
        "2x4",
        "2x8",
        "4x8",
        "8x8",
    ]
    access = [float(r["normalized_access"]) for r in rows]
    tables = [int(r["table_size_entries"]) for r in rows]
    assert all(a < b for a, b in zip(tables, tables[1:]))
    pivot = access.index(min(access))
    assert all(a >= b for a, b in zip(access[: pivot + 1], access[1 : pivot + 1]))
    assert access[-1] > access[-2]
