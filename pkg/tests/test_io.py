import json

import numpy as np
import pytest

from conftest import random_scene
from voxsim.core import GridShape, subm3
from voxsim.io import (
    load_tensor,
    load_weights,
    map_from_json,
    map_to_json,
    save_tensor,
    save_weights,
    tensor_from_json,
    tensor_to_json,
    weights_from_json,
    weights_to_json,
)
from voxsim.mapsearch import oracle_search
from voxsim.spconv import WeightTensor


def test_tensor_json_round_trip():
    t = random_scene(GridShape(12, 12, 6), 0.1, seed=1, channels=3)
    doc = json.loads(json.dumps(tensor_to_json(t)))
    back = tensor_from_json(doc)
    assert np.array_equal(back.coords, t.coords)
    assert np.allclose(back.features, t.features)
    assert back.shape == t.shape


def test_tensor_binary_round_trip(tmp_path):
    t = random_scene(GridShape(12, 12, 6), 0.1, seed=2, channels=2)
    path = tmp_path / "scene.vxt"
    save_tensor(path, t)
    back = load_tensor(path)
    assert np.array_equal(back.coords, t.coords)
    assert np.array_equal(back.features, t.features)


def test_tensor_json_file_round_trip(tmp_path):
    t = random_scene(GridShape(8, 8, 4), 0.1, seed=3)
    path = tmp_path / "scene.json"
    save_tensor(str(path), t)
    back = load_tensor(str(path))
    assert np.array_equal(back.coords, t.coords)


def test_weights_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    w = WeightTensor.random(subm3(), 4, 5, rng)
    doc = json.loads(json.dumps(weights_to_json(w)))
    back = weights_from_json(doc)
    assert np.allclose(back.data, w.data)
    path = tmp_path / "w.vxw"
    save_weights(path, w)
    assert np.array_equal(load_weights(path).data, w.data)


def test_quantized_weights_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    w = WeightTensor.random_quantized(subm3(), 3, 3, rng, scale=0.125)
    path = tmp_path / "w.vxw"
    save_weights(path, w)
    back = load_weights(path)
    assert back.quantized
    assert back.scale == 0.125
    assert np.array_equal(back.data, w.data)


def test_map_json_round_trip():
    t = random_scene(GridShape(8, 8, 4), 0.15, seed=4)
    m = oracle_search(t, t.coords, subm3())
    back = map_from_json(json.loads(json.dumps(map_to_json(m))))
    assert back.set_equal(m)


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.vxt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        load_tensor(path)
