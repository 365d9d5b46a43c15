import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvdispatch.data import (
    DataError,
    NormalizationParams,
    TimeSeriesDataset,
    WindowSpec,
    derive_dark_mask,
    fit_normalizer,
)
from pvdispatch.lstm import (
    AdamState,
    DivergenceError,
    NetworkConfig,
    TrainingConfig,
    adam_step,
    backward,
    forward,
    forward_batch,
    init_params,
    loss_mse,
    predict_series,
    train,
)


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def jostled_params(cfg: NetworkConfig, seed: int):
    """Parameters at a generic point: init plus noise on every leaf, so no
    rectifier pre-activation sits exactly on its kink."""
    params = init_params(cfg)
    rng = np.random.Generator(np.random.PCG64(seed + 7919))
    for leaf in params.leaves():
        leaf += rng.uniform(-0.1, 0.1, size=leaf.shape)
    return params


def numeric_gradient(params, cfg, inputs, labels, training, dropout_seed, h=1e-5):
    vec = params.to_vector()
    out = np.empty_like(vec)
    for i in range(vec.size):
        vp = vec.copy()
        vp[i] += h
        vm = vec.copy()
        vm[i] -= h
        pp, _ = forward_batch(
            params.from_vector(vp), cfg, inputs, training, dropout_seed, False
        )
        pm, _ = forward_batch(
            params.from_vector(vm), cfg, inputs, training, dropout_seed, False
        )
        out[i] = (loss_mse(pp, labels) - loss_mse(pm, labels)) / (2.0 * h)
    return out


def gradients_match(analytic, numeric, rel_tol=1e-4, abs_tol=1e-6):
    err = np.abs(analytic - numeric)
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    ok = (err <= abs_tol) | (err <= rel_tol * denom)
    return bool(ok.all())


class TestInit:
    def test_shapes(self):
        cfg = NetworkConfig(input_features=3, layer_sizes=(64, 32))
        params = init_params(cfg)
        assert params.layers[0].w_in.shape == (256, 3)
        assert params.layers[0].w_rec.shape == (256, 64)
        assert params.layers[1].w_in.shape == (128, 64)
        assert params.dense_w.shape == (32,)

    def test_forget_bias_one_everything_else_zero(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(4,))
        params = init_params(cfg)
        b = params.layers[0].bias
        np.testing.assert_array_equal(b[4:8], 1.0)
        np.testing.assert_array_equal(b[:4], 0.0)
        np.testing.assert_array_equal(b[8:], 0.0)

    def test_bounds_respect_fan_in(self):
        cfg = NetworkConfig(input_features=4, layer_sizes=(9,))
        params = init_params(cfg)
        assert np.abs(params.layers[0].w_in).max() <= 1 / math.sqrt(4)
        assert np.abs(params.layers[0].w_rec).max() <= 1 / math.sqrt(9)

    def test_deterministic_per_seed(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(5, 3), seed=9)
        a, b = init_params(cfg), init_params(cfg)
        for la, lb in zip(a.leaves(), b.leaves()):
            np.testing.assert_array_equal(la, lb)

    def test_different_seeds_differ(self):
        p1 = init_params(NetworkConfig(input_features=2, layer_sizes=(5,), seed=1))
        p2 = init_params(NetworkConfig(input_features=2, layer_sizes=(5,), seed=2))
        assert not np.array_equal(p1.layers[0].w_in, p2.layers[0].w_in)


class TestForward:
    def test_all_zero_params_predict_zero(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(4, 3), dropout_rate=0.0)
        params = init_params(cfg)
        for leaf in params.leaves():
            leaf[...] = 0.0  # includes the forget bias
        rng = np.random.Generator(np.random.PCG64(0))
        pred, _ = forward(params, cfg, rng.uniform(0, 1, (6, 2)))
        assert pred == 0.0

    def test_single_cell_matches_hand_computation(self):
        cfg = NetworkConfig(input_features=1, layer_sizes=(1,), dropout_rate=0.0)
        params = init_params(cfg)
        # One unit, one step: set every weight explicitly.
        wi, wf, wg, wo = 0.3, -0.2, 0.8, 0.5
        bi, bf, bg, bo = 0.1, 0.2, -0.1, 0.05
        params.layers[0].w_in[:, 0] = [wi, wf, wg, wo]
        params.layers[0].w_rec[...] = 0.7  # irrelevant at t=0 (h_prev = 0)
        params.layers[0].bias[...] = [bi, bf, bg, bo]
        params.dense_w[...] = 1.5
        params.dense_b[...] = -0.25
        x = 0.9
        i = sigmoid(wi * x + bi)
        g = max(wg * x + bg, 0.0)
        o = sigmoid(wo * x + bo)
        c = i * g  # c_prev = 0 makes the forget gate moot
        h = o * max(c, 0.0)
        expected = 1.5 * h - 0.25
        pred, _ = forward(params, cfg, np.array([[x]]))
        assert pred == pytest.approx(expected, rel=1e-12)

    def test_inference_ignores_dropout_seed(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(5, 4), dropout_rate=0.5)
        params = jostled_params(cfg, 0)
        rng = np.random.Generator(np.random.PCG64(1))
        window = rng.uniform(0, 1, (8, 2))
        a, _ = forward(params, cfg, window, training_mode=False, dropout_seed=1)
        b, _ = forward(params, cfg, window, training_mode=False, dropout_seed=999)
        assert a == b

    def test_training_dropout_changes_output(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(8,), dropout_rate=0.5)
        params = jostled_params(cfg, 3)
        rng = np.random.Generator(np.random.PCG64(2))
        window = rng.uniform(0, 1, (6, 2))
        outs = {
            forward(params, cfg, window, training_mode=True, dropout_seed=s)[0]
            for s in range(8)
        }
        assert len(outs) > 1

    def test_shape_mismatch_rejected(self):
        cfg = NetworkConfig(input_features=3, layer_sizes=(4,))
        params = init_params(cfg)
        with pytest.raises(ValueError, match="features"):
            forward(params, cfg, np.zeros((5, 2)))

    def test_nonfinite_reported_as_divergence(self):
        cfg = NetworkConfig(input_features=1, layer_sizes=(2,), dropout_rate=0.0)
        params = init_params(cfg)
        params.dense_w[...] = np.inf
        with pytest.raises(DivergenceError):
            forward(params, cfg, np.ones((3, 1)))


class TestLoss:
    @given(
        st.lists(st.floats(-50.0, 50.0), min_size=1, max_size=16),
        st.lists(st.floats(-50.0, 50.0), min_size=1, max_size=16),
    )
    @settings(max_examples=60, deadline=None)
    def test_nonnegative_and_sign_symmetric(self, a, b):
        n = min(len(a), len(b))
        preds = np.array(a[:n])
        labels = np.array(b[:n])
        value = loss_mse(preds, labels)
        assert value >= 0.0
        assert loss_mse(labels, preds) == pytest.approx(value, rel=1e-12)

    def test_perfect(self):
        assert loss_mse(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0

    def test_unit_errors(self):
        assert loss_mse(np.array([0.0, 0.0]), np.array([1.0, 1.0])) == 1.0

    def test_single(self):
        assert loss_mse(np.array([2.0]), np.array([0.0])) == 4.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            loss_mse(np.array([]), np.array([]))


class TestBackward:
    def test_perfect_predictions_zero_dense_gradient(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(3,), dropout_rate=0.0)
        params = jostled_params(cfg, 1)
        rng = np.random.Generator(np.random.PCG64(4))
        inputs = rng.uniform(0, 1, (4, 5, 2))
        preds, cache = forward_batch(params, cfg, inputs)
        grads = backward(params, cache, preds.copy())
        np.testing.assert_array_equal(grads.dense_w, 0.0)
        np.testing.assert_array_equal(grads.dense_b, 0.0)

    def test_doubling_residual_doubles_dense_gradient(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(3, 2), dropout_rate=0.0)
        params = jostled_params(cfg, 2)
        rng = np.random.Generator(np.random.PCG64(5))
        inputs = rng.uniform(0, 1, (3, 4, 2))
        preds, cache = forward_batch(params, cfg, inputs)
        labels = preds - rng.uniform(0.1, 1.0, preds.shape)
        labels2 = preds - 2.0 * (preds - labels)
        g1 = backward(params, cache, labels)
        g2 = backward(params, cache, labels2)
        np.testing.assert_allclose(g2.dense_w, 2.0 * g1.dense_w, rtol=1e-12)
        np.testing.assert_allclose(g2.dense_b, 2.0 * g1.dense_b, rtol=1e-12)

    def test_finite_difference_small_net(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(3, 2), dropout_rate=0.0)
        params = jostled_params(cfg, 11)
        rng = np.random.Generator(np.random.PCG64(11))
        inputs = rng.uniform(0, 1, (2, 4, 2))
        labels = rng.uniform(0, 1, 2)
        preds, cache = forward_batch(params, cfg, inputs)
        analytic = backward(params, cache, labels).to_vector()
        numeric = numeric_gradient(params, cfg, inputs, labels, False, 0)
        assert gradients_match(analytic, numeric)

    def test_finite_difference_with_dropout_mask_fixed(self):
        cfg = NetworkConfig(input_features=2, layer_sizes=(3, 2), dropout_rate=0.4)
        params = jostled_params(cfg, 12)
        rng = np.random.Generator(np.random.PCG64(12))
        inputs = rng.uniform(0, 1, (3, 4, 2))
        labels = rng.uniform(0, 1, 3)
        preds, cache = forward_batch(
            params, cfg, inputs, training_mode=True, dropout_seed=77
        )
        analytic = backward(params, cache, labels).to_vector()
        numeric = numeric_gradient(params, cfg, inputs, labels, True, 77)
        assert gradients_match(analytic, numeric)

    def test_tanh_variant_gradient(self):
        cfg = NetworkConfig(
            input_features=2, layer_sizes=(3,), dropout_rate=0.0,
            cell_activation="tanh",
        )
        params = jostled_params(cfg, 13)
        rng = np.random.Generator(np.random.PCG64(13))
        inputs = rng.uniform(0, 1, (2, 5, 2))
        labels = rng.uniform(0, 1, 2)
        _, cache = forward_batch(params, cfg, inputs)
        analytic = backward(params, cache, labels).to_vector()
        numeric = numeric_gradient(params, cfg, inputs, labels, False, 0)
        assert gradients_match(analytic, numeric)


class TestAdam:
    def _tiny(self, seed=0):
        cfg = NetworkConfig(input_features=1, layer_sizes=(2,), seed=seed)
        return cfg, init_params(cfg)

    def test_zero_gradient_keeps_params(self):
        cfg, params = self._tiny()
        state = AdamState.init(params)
        new_params, new_state = adam_step(params, params.zeros_like(), state)
        assert new_state.t == 1
        for a, b in zip(params.leaves(), new_params.leaves()):
            np.testing.assert_array_equal(a, b)

    def test_first_step_is_signed_learning_rate(self):
        # At t=1 the bias-corrected update is -lr * g / (|g| + eps).
        cfg, params = self._tiny()
        grads = params.zeros_like()
        for leaf in grads.leaves():
            leaf[...] = np.random.Generator(np.random.PCG64(0)).uniform(
                0.5, 2.0, leaf.shape
            ) * np.sign(np.random.Generator(np.random.PCG64(1)).uniform(
                -1, 1, leaf.shape
            ))
        lr = 1e-3
        state = AdamState.init(params, lr=lr)
        new_params, _ = adam_step(params, grads, state)
        for before, after, g in zip(
            params.leaves(), new_params.leaves(), grads.leaves()
        ):
            expected = before - lr * g / (np.abs(g) + state.eps)
            np.testing.assert_allclose(after, expected, rtol=1e-9)
            np.testing.assert_allclose(
                after - before, -lr * np.sign(g), rtol=1e-6
            )

    def test_deterministic(self):
        cfg, params = self._tiny()
        grads = params.zeros_like()
        for leaf in grads.leaves():
            leaf[...] = 0.3
        s0 = AdamState.init(params)
        a_params, a_state = adam_step(params, grads, s0)
        s0b = AdamState.init(params)
        b_params, b_state = adam_step(params, grads, s0b)
        for a, b in zip(a_params.leaves(), b_params.leaves()):
            np.testing.assert_array_equal(a, b)
        assert a_state.t == b_state.t == 1


class TestTrain:
    def _toy(self, n=10, p=6, f=2, seed=0):
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.uniform(0, 1, (n, p, f)), rng.uniform(0, 1, n)

    def test_memorizes_toy_set(self):
        X, y = self._toy()
        net = NetworkConfig(input_features=2, layer_sizes=(64, 32), dropout_rate=0.0)
        tc = TrainingConfig(epochs=500, batch_size=32, learning_rate=1e-3, seed=0)
        _, history = train((X, y), net, tc)
        assert history[-1] < 1e-3
        assert history[-1] < history[0]

    def test_history_length_matches_epochs(self):
        X, y = self._toy()
        net = NetworkConfig(input_features=2, layer_sizes=(4, 3), dropout_rate=0.0)
        tc = TrainingConfig(epochs=5, batch_size=4, seed=1)
        _, history = train((X, y), net, tc)
        assert len(history) == 5

    def test_bit_identical_reruns(self):
        X, y = self._toy(seed=3)
        net = NetworkConfig(input_features=2, layer_sizes=(5, 3), seed=4)
        tc = TrainingConfig(epochs=6, batch_size=4, seed=5)
        p1, h1 = train((X, y), net, tc)
        p2, h2 = train((X, y), net, tc)
        assert h1 == h2
        for a, b in zip(p1.leaves(), p2.leaves()):
            np.testing.assert_array_equal(a, b)

    def test_empty_rejected(self):
        net = NetworkConfig(input_features=2, layer_sizes=(3,))
        with pytest.raises(ValueError):
            train([], net, TrainingConfig(epochs=1))

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_divergence_aborts_with_epoch(self):
        X, y = self._toy()
        net = NetworkConfig(input_features=2, layer_sizes=(4,), dropout_rate=0.0)
        tc = TrainingConfig(epochs=3, batch_size=4, learning_rate=1e30, seed=0)
        with pytest.raises(DivergenceError, match="epoch"):
            train((X, y), net, tc)


class TestPredictSeries:
    def _dataset(self, n=24 * 20, f=2, seed=0):
        ts = np.datetime64("2023-03-01T00", "h") + np.arange(n)
        rng = np.random.Generator(np.random.PCG64(seed))
        vals = rng.uniform(0.0, 8.0, size=(n, f))
        hours = ts.astype("datetime64[h]").astype(np.int64) % 24
        vals[hours < 6, 0] = 0.0
        return TimeSeriesDataset(ts, vals, tuple(f"a{i}" for i in range(f)))

    def test_alignment_and_count(self):
        ds = self._dataset()
        spec = WindowSpec(24, 12, 0)
        cfg = NetworkConfig(input_features=2, layer_sizes=(4, 3), dropout_rate=0.0)
        params = init_params(cfg)
        normalizer = fit_normalizer(ds)
        series = predict_series(params, cfg, ds, spec, normalizer)
        assert series.n == ds.n - 24 - 12 + 1
        assert series.timestamps[0] == ds.timestamps[24 + 12 - 1]
        assert series.timestamps[-1] == ds.timestamps[-1]

    def test_full_year_target_hour_count(self):
        n = 8760
        ts = np.datetime64("2023-01-01T00", "h") + np.arange(n)
        rng = np.random.Generator(np.random.PCG64(3))
        ds = TimeSeriesDataset(
            ts, rng.uniform(0.0, 5.0, size=(n, 1)), ("pv",)
        )
        spec = WindowSpec(24, 12, 0)
        cfg = NetworkConfig(input_features=1, layer_sizes=(2,), dropout_rate=0.0)
        series = predict_series(
            init_params(cfg), cfg, ds, spec, fit_normalizer(ds)
        )
        assert series.n == 8760 - 24 - 12 + 1

    def test_masked_slots_exactly_zero(self):
        ds = self._dataset()
        spec = WindowSpec(24, 12, 0)
        cfg = NetworkConfig(input_features=2, layer_sizes=(4, 3), dropout_rate=0.0)
        params = jostled_params(cfg, 21)
        normalizer = fit_normalizer(ds)
        mask = derive_dark_mask(ds, 0)
        series = predict_series(params, cfg, ds, spec, normalizer, mask)
        hours = series.timestamps.astype("datetime64[h]").astype(np.int64) % 24
        assert (series.values[hours < 6] == 0.0).all()

    def test_negative_denormalized_output_clipped(self):
        ds = self._dataset(f=1)
        spec = WindowSpec(4, 1, 0)
        cfg = NetworkConfig(input_features=1, layer_sizes=(2,), dropout_rate=0.0)
        params = init_params(cfg)
        for leaf in params.leaves():
            leaf[...] = 0.0
        params.dense_b[...] = -3.0  # raw output -3 everywhere
        normalizer = NormalizationParams(np.array([1.0]), np.array([2.0]))
        series = predict_series(params, cfg, ds, spec, normalizer)
        # -3 denormalizes to -2 MW, clipped to 0
        assert (series.values == 0.0).all()

    def test_insufficient_history(self):
        ds = self._dataset(n=30)
        spec = WindowSpec(24, 12, 0)
        cfg = NetworkConfig(input_features=2, layer_sizes=(3,))
        params = init_params(cfg)
        with pytest.raises(DataError):
            predict_series(params, cfg, ds, spec, fit_normalizer(ds))
