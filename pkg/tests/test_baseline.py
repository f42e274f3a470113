import numpy as np
import pytest

from hinet import (
    SyntheticConfig,
    TrainConfig,
    count_traces,
    dense_spec,
    enumerate_traces,
    flat_forward,
    flat_id_to_trace,
    flat_train,
    flatten_param_count,
    generate_synthetic,
    hinet_param_count,
    init_flat_params,
    validate_trace,
)


class TestFlatForward:
    def test_zero_params_uniform(self, pair_tree):
        params = init_flat_params(pair_tree, 4, 6, TrainConfig(init_scale=0.0))
        y = flat_forward(params, np.zeros(4))
        np.testing.assert_allclose(y, np.full(4, 0.25))

    def test_sums_to_one(self, pair_tree):
        params = init_flat_params(pair_tree, 4, 6, TrainConfig(seed=5))
        for seed in range(5):
            x = np.random.default_rng(seed).uniform(-1, 1, 4)
            assert abs(float(flat_forward(params, x).sum()) - 1.0) < 1e-9

    def test_argmax_decodes_to_valid_trace(self, pair_tree):
        params = init_flat_params(pair_tree, 4, 6, TrainConfig(seed=6))
        for seed in range(10):
            x = np.random.default_rng(seed).uniform(-1, 1, 4)
            cls = int(np.argmax(flat_forward(params, x)))
            validate_trace(flat_id_to_trace(cls, pair_tree), pair_tree)

    def test_output_covers_every_trace(self, pair_tree):
        params = init_flat_params(pair_tree, 4, 6, TrainConfig(seed=6))
        assert params.n_classes == count_traces(pair_tree)


class TestFlatTrain:
    def _dataset(self, spec):
        return generate_synthetic(
            spec,
            SyntheticConfig(samples_per_trace=20, cluster_spread=0.02, d_in=6, seed=5),
        )

    def test_zero_learning_rate(self, pair_tree):
        ds = self._dataset(pair_tree)
        params = init_flat_params(pair_tree, 6, 8, TrainConfig(seed=1))
        before = [params.trunk_w.copy(), params.out_w.copy()]
        _, history = flat_train(
            params, ds, TrainConfig(learning_rate=0.0, epochs=3, seed=1)
        )
        np.testing.assert_array_equal(params.trunk_w, before[0])
        np.testing.assert_array_equal(params.out_w, before[1])
        assert history == [history[0]] * 3

    def test_separable_set_loss_drops_10x(self, pair_tree):
        ds = self._dataset(pair_tree)
        cfg = TrainConfig(learning_rate=0.5, epochs=60, batch_size=8, seed=2)
        params = init_flat_params(pair_tree, 6, 16, cfg)
        _, history = flat_train(params, ds, cfg)
        assert history[-1] * 10.0 <= history[0]

    def test_same_seed_identical(self, pair_tree):
        ds = self._dataset(pair_tree)
        cfg = TrainConfig(learning_rate=0.3, epochs=5, batch_size=4, seed=7)
        p1 = init_flat_params(pair_tree, 6, 8, cfg)
        p2 = init_flat_params(pair_tree, 6, 8, cfg)
        _, h1 = flat_train(p1, ds, cfg)
        _, h2 = flat_train(p2, ds, cfg)
        assert h1 == h2
        np.testing.assert_array_equal(p1.out_w, p2.out_w)


class TestFlattenParamCount:
    def test_table_values(self):
        assert flatten_param_count(128, 10, 4) == 1_280_000
        assert flatten_param_count(7, 3, 1) == 21

    def test_height_one_matches_first_order_term(self):
        assert flatten_param_count(64, 9, 1) == 64 * 9 == hinet_param_count(64, 9, 1) - 81

    def test_ratio_grows_with_height(self):
        ratios = [
            flatten_param_count(128, 10, h) / hinet_param_count(128, 10, h)
            for h in (2, 3, 4)
        ]
        assert ratios[0] < ratios[1] < ratios[2]

    def test_matches_leaf_class_output_block(self):
        # the formula counts one k x n**h block: the leaf-depth classes of
        # a dense hierarchy, countable independently by enumeration
        for k, n, h in ((8, 3, 2), (4, 2, 4)):
            spec = dense_spec(n, h)
            leaves = sum(1 for t in enumerate_traces(spec) if t.depth == h)
            assert flatten_param_count(k, n, h) == np.zeros((k, leaves)).size

    def test_real_output_block_covers_all_traces(self):
        # the trained baseline classifies every trace, not only leaf-depth
        # ones, so its real output block is k x count_traces
        spec = dense_spec(3, 3)
        params = init_flat_params(spec, 5, 8, TrainConfig(seed=0))
        assert params.out_w.size == 8 * count_traces(spec)
        assert params.out_w.size >= flatten_param_count(8, 3, 3)

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            flatten_param_count(1, 1, 0)
