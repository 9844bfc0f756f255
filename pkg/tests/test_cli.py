import json

import numpy as np

from voxsim.cli import main
from voxsim.io import load_tensor


def write_cfg(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_gen_writes_tensor(tmp_path):
    cfg = write_cfg(tmp_path, "gen.cfg", "grid = 16x16x8\nsparsity = 0.05\nseed = 3\n")
    out = tmp_path / "scene.vxt"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    t = load_tensor(out)
    assert t.n > 0


def test_search_reports_stats(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        "s.cfg",
        "grid = 16x16x8\nsparsity = 0.05\nseed = 3\nmethod = doms\n",
    )
    assert main(["search", "--config", cfg]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["method"] == "doms"
    assert doc["stats"]["offchip_coord_reads"] > 0
    assert doc["map_entries"] > 0


def test_search_set_override(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "s.cfg", "grid = 16x16x8\nsparsity = 0.05\nseed = 3\n")
    assert (
        main(["search", "--config", cfg, "--set", "method=weight_major"]) == 0
    )
    doc = json.loads(capsys.readouterr().out)
    assert doc["method"] == "weight_major"


def test_conv_round_trip(tmp_path):
    from voxsim.io import save_weights
    from voxsim.spconv import WeightTensor
    from voxsim.core import subm3

    rng = np.random.default_rng(0)
    wpath = tmp_path / "w.vxw"
    save_weights(wpath, WeightTensor.random(subm3(), 1, 1, rng))
    cfg = write_cfg(
        tmp_path,
        "c.cfg",
        f"grid = 12x12x6\nsparsity = 0.08\nseed = 1\nweights = {wpath}\n",
    )
    out = tmp_path / "out.vxt"
    assert main(["conv", "--config", cfg, "--out", str(out)]) == 0
    t = load_tensor(out)
    assert t.n > 0


def test_cim_and_w2b(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        "cim.cfg",
        "grid = 24x24x12\nsparsity = 0.03\ndistribution = surface:0.8\nseed = 2\n"
        "c1 = 4\nc2 = 4\nnum_tiles = 4\n",
    )
    assert main(["cim", "--config", cfg]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["cycles"]["cycles"] > 0
    assert len(doc["histogram"]) == 27

    assert main(["w2b", "--config", cfg, "--set", "budget=54"]) == 0
    text = capsys.readouterr().out
    assert "speedup=" in text.splitlines()[0]


def test_pipeline_gantt(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path,
        "p.cfg",
        "overlap_threshold = 0.25\n"
        "layer1 = subm3, 10, 8\n"
        "layer2 = subm3, 0, 8, shared\n"
        "layer3 = gconv2, 6, 12\n",
    )
    assert main(["pipeline", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert out.startswith("layer,stage,start,end")
    assert "# makespan=" in out


def test_sweep_deterministic_bytes(tmp_path):
    cfg = write_cfg(
        tmp_path,
        "sweep.cfg",
        "methods = doms, output_major\ngrid = 24x24x8\n"
        "sparsities = 0.02\nseeds = 1, 2\n",
    )
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_config_error_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, "bad.cfg", "methods = warp_drive\n")
    assert main(["sweep", "--config", cfg]) == 2


def test_missing_weights_is_config_error(tmp_path):
    cfg = write_cfg(tmp_path, "c.cfg", "grid = 8x8x4\nsparsity = 0.1\nseed = 1\n")
    assert main(["conv", "--config", cfg]) == 2
