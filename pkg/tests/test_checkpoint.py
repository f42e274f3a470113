import numpy as np
import pytest

from hinet import (
    CheckpointError,
    FlatParams,
    ModelParams,
    TrainConfig,
    dense_spec,
    init_flat_params,
    init_params,
    load_model,
    save_model,
)
from hinet.checkpoint import MAGIC


@pytest.fixture
def hinet_params(pair_tree):
    return init_params(pair_tree, 5, 7, TrainConfig(seed=21))


class TestRoundTrip:
    def test_hinet_bitwise(self, pair_tree, hinet_params, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(path, pair_tree, hinet_params)
        loaded = load_model(path, pair_tree)
        assert isinstance(loaded, ModelParams)
        np.testing.assert_array_equal(loaded.trunk_w, hinet_params.trunk_w)
        for a, b in zip(loaded.level_w, hinet_params.level_w):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(loaded.level_b, hinet_params.level_b):
            np.testing.assert_array_equal(a, b)

    def test_flatten_bitwise(self, pair_tree, tmp_path):
        params = init_flat_params(pair_tree, 5, 7, TrainConfig(seed=4))
        path = tmp_path / "f.ckpt"
        save_model(path, pair_tree, params)
        loaded = load_model(path, pair_tree)
        assert isinstance(loaded, FlatParams)
        np.testing.assert_array_equal(loaded.out_w, params.out_w)
        np.testing.assert_array_equal(loaded.out_b, params.out_b)

    def test_magic_prefix(self, pair_tree, hinet_params, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(path, pair_tree, hinet_params)
        assert path.read_bytes().startswith(MAGIC)


class TestErrors:
    def test_bad_magic(self, pair_tree, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTHINET" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_model(path, pair_tree)

    def test_wrong_hierarchy(self, pair_tree, hinet_params, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(path, pair_tree, hinet_params)
        with pytest.raises(CheckpointError, match="different hierarchy"):
            load_model(path, dense_spec(2, 2))

    def test_truncated(self, pair_tree, hinet_params, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(path, pair_tree, hinet_params)
        clipped = tmp_path / "clipped.ckpt"
        clipped.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_model(clipped, pair_tree)

    def test_trailing_bytes(self, pair_tree, hinet_params, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(path, pair_tree, hinet_params)
        bloated = tmp_path / "bloated.ckpt"
        bloated.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(CheckpointError, match="trailing"):
            load_model(bloated, pair_tree)

    def test_corrupt_header(self, pair_tree, hinet_params, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(path, pair_tree, hinet_params)
        raw = bytearray(path.read_bytes())
        raw[14] = 0xFF
        broken = tmp_path / "broken.ckpt"
        broken.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_model(broken, pair_tree)
