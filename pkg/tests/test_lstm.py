import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vollab import (
    LstmConfig,
    ReturnSeries,
    WindowedDataset,
    build_scaled_windows,
    build_windows,
    gradient_check,
    init,
    load_model,
    predict,
    save_model,
    scale_fit_apply,
    train,
)
from vollab.lstm import LstmError, backward, forward, invert_scale, mse


def series(values):
    start = date(2021, 1, 1)
    dates = tuple(start + timedelta(days=i) for i in range(len(values)))
    return ReturnSeries(dates=dates, values=np.asarray(values, dtype=float))


def tiny_config(**overrides):
    base = dict(window_len=3, layer_sizes=(4, 3, 2), dropout=0.0, seed=0)
    base.update(overrides)
    return LstmConfig(**base)


def zero_model(config):
    model = init(config, seed=0)
    for layer in model.layers:
        layer["wx"][:] = 0.0
        layer["wh"][:] = 0.0
        layer["b"][:] = 0.0
    model.head_w[:] = 0.0
    model.head_b[:] = 0.0
    return model


class TestBuildWindows:
    def test_paper_walkthrough_indexing(self):
        s = series(np.arange(8.0))
        ds = build_windows(s, 5)
        assert ds.num_samples == 3
        assert ds.inputs[0].tolist() == [0, 1, 2, 3, 4]
        assert ds.targets[0] == 5.0
        assert ds.targets[-1] == s.values[-1]

    def test_980_values_gives_975_samples(self):
        ds = build_windows(series(np.arange(980.0)), 5)
        assert ds.num_samples == 975

    def test_boundary_single_sample(self):
        ds = build_windows(series(np.arange(6.0)), 5)
        assert ds.num_samples == 1

    def test_too_short_rejected(self):
        with pytest.raises(LstmError):
            build_windows(series(np.arange(5.0)), 5)

    def test_target_dates_recorded(self):
        s = series(np.arange(8.0))
        ds = build_windows(s, 5)
        assert ds.dates == s.dates[5:]


class TestScaling:
    def test_endpoints(self):
        train_scaled, _, (mn, mx) = scale_fit_apply([0.0, 5.0, 10.0], [])
        assert train_scaled.tolist() == [0.0, 0.5, 1.0]
        assert (mn, mx) == (0.0, 10.0)

    def test_out_of_range_not_clipped(self):
        _, other, _ = scale_fit_apply([0.0, 5.0, 10.0], [20.0])
        assert other.tolist() == [2.0]

    def test_constant_train_rejected(self):
        with pytest.raises(LstmError, match="constant"):
            scale_fit_apply([3.0, 3.0], [1.0])

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=30))
    def test_round_trip(self, values):
        values = np.asarray(values)
        if np.max(values) - np.min(values) < 1e-9:
            return
        scaled, _, (mn, mx) = scale_fit_apply(values, [])
        back = invert_scale(scaled, mn, mx)
        np.testing.assert_allclose(back, values, atol=1e-12 * max(1.0, np.max(np.abs(values))))

    def test_scaled_windows_record_train_scaler(self):
        train_s = series([0.0, 2.0, 4.0, 6.0, 8.0, 10.0])
        test_s = series([12.0, 14.0, 16.0, 18.0, 20.0, 22.0])
        train_ds, test_ds = build_scaled_windows(train_s, test_s, 3)
        assert (train_ds.scale_min, train_ds.scale_max) == (0.0, 10.0)
        assert (test_ds.scale_min, test_ds.scale_max) == (0.0, 10.0)
        assert train_ds.inputs.min() >= 0.0 and train_ds.inputs.max() <= 1.0
        assert test_ds.inputs.max() > 1.0  # extrapolation allowed


class TestInit:
    def test_deterministic(self):
        a = init(tiny_config(), seed=5)
        b = init(tiny_config(), seed=5)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la["wx"], lb["wx"])
            assert np.array_equal(la["wh"], lb["wh"])
        assert np.array_equal(a.head_w, b.head_w)

    def test_forget_gate_bias_one(self):
        model = init(tiny_config(), seed=1)
        for layer, size in zip(model.layers, (4, 3, 2)):
            b = layer["b"]
            assert np.all(b[size : 2 * size] == 1.0)
            assert np.all(b[:size] == 0.0)
            assert np.all(b[2 * size :] == 0.0)

    def test_weight_bounds(self):
        model = init(tiny_config(), seed=2)
        fan_in = 1
        for layer, size in zip(model.layers, (4, 3, 2)):
            bound = math.sqrt(6.0 / (fan_in + size))
            assert np.max(np.abs(layer["wx"])) <= bound
            assert np.max(np.abs(layer["wh"])) <= bound
            fan_in = size
        assert np.max(np.abs(model.head_w)) <= math.sqrt(6.0 / (2 + 1))


class TestForward:
    def test_zero_network_predicts_zero(self):
        model = zero_model(tiny_config())
        preds, _ = forward(model, np.random.default_rng(0).standard_normal((6, 3)))
        assert np.all(preds == 0.0)

    def test_dropout_off_training_equals_eval(self):
        model = init(tiny_config(), seed=3)
        x = np.random.default_rng(1).standard_normal((5, 3))
        train_preds, _ = forward(model, x, training=True)
        eval_preds, _ = forward(model, x, training=False)
        assert np.array_equal(train_preds, eval_preds)

    def test_reproducible_bitwise(self):
        model = init(tiny_config(), seed=4)
        x = np.random.default_rng(2).standard_normal((1, 3))
        assert np.array_equal(forward(model, x)[0], forward(model, x)[0])

    def test_shape_mismatch_rejected(self):
        model = init(tiny_config(), seed=0)
        with pytest.raises(LstmError, match="shape"):
            forward(model, np.zeros((4, 7)))

    def test_dropout_needs_rng_in_training(self):
        model = init(tiny_config(dropout=0.5), seed=0)
        with pytest.raises(LstmError, match="rng"):
            forward(model, np.zeros((2, 3)), training=True)

    def test_dropout_mask_expectation(self):
        # inverted dropout: mean training pre-head activation over many
        # masks matches the eval activation within Monte-Carlo error
        model = init(tiny_config(dropout=0.2), seed=6)
        x = np.random.default_rng(3).standard_normal((4, 3))
        _, eval_cache = forward(model, x, training=False)
        target = eval_cache["pre_head"]
        rng = np.random.default_rng(7)
        acc = np.zeros_like(target)
        n_masks = 10_000
        for _ in range(n_masks):
            _, cache = forward(model, x, training=True, rng=rng)
            acc += cache["pre_head"]
        mean = acc / n_masks
        tol = 0.03 * np.abs(target) + 1e-4
        assert np.all(np.abs(mean - target) <= tol)


class TestTrain:
    def _mean_window_task(self, n=200, window=5, seed=0):
        rng = np.random.default_rng(seed)
        inputs = rng.random((n, window))
        targets = inputs.mean(axis=1)
        return WindowedDataset(inputs=inputs, targets=targets, window_len=window)

    def test_learnable_function(self):
        data = self._mean_window_task()
        cfg = LstmConfig(
            window_len=5, layer_sizes=(16, 8, 4), dropout=0.0, batch_size=64,
            epochs=100, learning_rate=1e-2, seed=1,
        )
        model = train(init(cfg, seed=1), data)
        first = model.loss_history[0][0]
        last = model.loss_history[-1][0]
        assert last < 0.1 * first
        assert last < first  # strict decrease start to finish

    def test_memorize_single_batch(self):
        rng = np.random.default_rng(5)
        data = WindowedDataset(inputs=rng.random((8, 5)), targets=rng.random(8), window_len=5)
        cfg = LstmConfig(
            window_len=5, layer_sizes=(16, 8, 4), dropout=0.0, batch_size=8,
            epochs=500, learning_rate=1e-2, seed=3,
        )
        model = train(init(cfg, seed=3), data)
        eval_mse = mse(forward(model, data.inputs)[0], data.targets)
        assert eval_mse < 1e-3

    def test_zero_learning_rate_leaves_weights(self):
        data = self._mean_window_task(n=40)
        cfg = LstmConfig(
            window_len=5, layer_sizes=(4, 3, 2), dropout=0.0, batch_size=16,
            epochs=3, learning_rate=0.0, seed=2,
        )
        model = init(cfg, seed=2)
        before = [layer["wx"].copy() for layer in model.layers]
        train(model, data)
        for layer, snapshot in zip(model.layers, before):
            assert np.array_equal(layer["wx"], snapshot)

    def test_training_determinism(self):
        data = self._mean_window_task(n=64)
        cfg = LstmConfig(
            window_len=5, layer_sizes=(6, 5, 4), dropout=0.2, batch_size=16,
            epochs=4, learning_rate=1e-3, seed=9,
        )
        a = train(init(cfg, seed=9), data)
        b = train(init(cfg, seed=9), data)
        assert a.loss_history == b.loss_history

    def test_validation_loss_recorded(self):
        data = self._mean_window_task(n=64, seed=1)
        val = self._mean_window_task(n=32, seed=2)
        cfg = LstmConfig(
            window_len=5, layer_sizes=(4, 3, 2), dropout=0.0, batch_size=32,
            epochs=2, learning_rate=1e-3, seed=0,
        )
        model = train(init(cfg, seed=0), data, val)
        assert len(model.loss_history) == 2
        assert all(math.isfinite(v) for _, v in model.loss_history)

    def test_non_finite_loss_names_epoch_and_batch(self):
        data = self._mean_window_task(n=16)
        cfg = LstmConfig(
            window_len=5, layer_sizes=(4, 3, 2), dropout=0.0, batch_size=8,
            epochs=1, learning_rate=1e-3, seed=0,
        )
        model = init(cfg, seed=0)
        model.head_w[:] = np.nan
        with pytest.raises(LstmError, match="epoch 1, batch 1"):
            train(model, data)


class TestGradientCheck:
    def test_tiny_network_bptt_correct(self):
        model = init(tiny_config(), seed=0)
        rng = np.random.default_rng(100)
        x = rng.standard_normal((8, 3))
        y = rng.standard_normal(8)
        assert gradient_check(model, x, y, n_weights=200, seed=2) < 1e-4

    def test_zero_loss_gives_zero_gradient(self):
        model = init(tiny_config(), seed=1)
        x = np.random.default_rng(4).standard_normal((4, 3))
        preds, cache = forward(model, x)
        grads = backward(model, cache, np.zeros_like(preds))
        assert max(
            np.max(np.abs(g[key]))
            for g in grads["layers"]
            for key in ("wx", "wh", "b")
        ) == 0.0
        assert np.max(np.abs(grads["head_w"])) == 0.0

    def test_gradient_linearity_in_loss_scale(self):
        model = init(tiny_config(), seed=2)
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 3))
        dpred = rng.standard_normal(4)
        _, cache = forward(model, x)
        g1 = backward(model, cache, dpred)
        g2 = backward(model, cache, 2.0 * dpred)
        np.testing.assert_allclose(2.0 * g1["head_w"], g2["head_w"], rtol=1e-10)
        np.testing.assert_allclose(
            2.0 * g1["layers"][0]["wx"], g2["layers"][0]["wx"], rtol=1e-10
        )

    def test_requires_dropout_off(self):
        model = init(tiny_config(dropout=0.2), seed=0)
        with pytest.raises(LstmError, match="dropout"):
            gradient_check(model, np.zeros((2, 3)), np.zeros(2))


class TestPredict:
    def test_zero_model_with_scaler(self):
        model = zero_model(tiny_config())
        ds = WindowedDataset(
            inputs=np.random.default_rng(0).random((5, 3)),
            targets=np.zeros(5),
            window_len=3,
            scale_min=0.0,
            scale_max=10.0,
        )
        assert np.all(predict(model, ds) == 0.0)

    def test_length_matches_samples(self):
        model = init(tiny_config(), seed=0)
        ds = WindowedDataset(
            inputs=np.random.default_rng(1).random((7, 3)), targets=np.zeros(7), window_len=3
        )
        assert predict(model, ds).shape == (7,)

    def test_idempotent(self):
        model = init(tiny_config(), seed=0)
        ds = WindowedDataset(
            inputs=np.random.default_rng(2).random((4, 3)), targets=np.zeros(4), window_len=3
        )
        assert np.array_equal(predict(model, ds), predict(model, ds))

    def test_inverse_scaling_applied(self):
        model = zero_model(tiny_config())
        model.head_b[:] = 0.5  # raw network output 0.5
        ds = WindowedDataset(
            inputs=np.zeros((3, 3)), targets=np.zeros(3), window_len=3,
            scale_min=10.0, scale_max=30.0,
        )
        np.testing.assert_allclose(predict(model, ds), 20.0)


class TestSerialization:
    def test_round_trip_bytes(self, tmp_path):
        cfg = tiny_config(dropout=0.2, target="realized-vol")
        model = init(cfg, seed=12)
        model.scale_min, model.scale_max = -1.5, 2.5
        p1 = tmp_path / "m1.bin"
        p2 = tmp_path / "m2.bin"
        save_model(model, p1)
        loaded = load_model(p1)
        save_model(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert loaded.config == cfg
        assert (loaded.scale_min, loaded.scale_max) == (-1.5, 2.5)

    def test_loaded_model_predicts_identically(self, tmp_path):
        model = init(tiny_config(), seed=13)
        x = np.random.default_rng(6).random((5, 3))
        save_model(model, tmp_path / "m.bin")
        loaded = load_model(tmp_path / "m.bin")
        assert np.array_equal(forward(model, x)[0], forward(loaded, x)[0])

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"not-a-model 1\n{}\n")
        with pytest.raises(LstmError, match="header"):
            load_model(path)


class TestConfig:
    def test_dropout_range(self):
        with pytest.raises(LstmError):
            LstmConfig(dropout=1.0)

    def test_defaults_match_reported_architecture(self):
        cfg = LstmConfig()
        assert cfg.window_len == 5
        assert cfg.layer_sizes == (512, 256, 128)
        assert cfg.dropout == 0.2
        assert cfg.batch_size == 64
        assert cfg.epochs == 100

    def test_unknown_target(self):
        with pytest.raises(LstmError):
            LstmConfig(target="price")
