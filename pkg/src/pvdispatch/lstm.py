"""Two-layer recurrent forecaster trained from scratch with numpy.

Cell equations per timestep and layer, gate order (i, f, g, o):

    i = sigmoid(W_i x + U_i h_prev + b_i)      input gate
    f = sigmoid(W_f x + U_f h_prev + b_f)      forget gate
    g = act(W_g x + U_g h_prev + b_g)          candidate
    o = sigmoid(W_o x + U_o h_prev + b_o)      output gate
    c = f * c_prev + i * g
    h = o * act(c)

``act`` is the configured cell activation (rectifier by default, replacing
the usual tanh in both the candidate transform and the cell-output
transform); the three gates stay logistic. The first layer feeds its full
hidden sequence to the second; only the final hidden state of the top layer
passes through inverted dropout (training mode only) and a linear head.

Training is plain backpropagation through time with Adam updates on the
batch-mean squared error. Everything runs in float64 so analytic gradients
can be checked against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import (
    DarkHourMask,
    DataError,
    ForecastSeries,
    NormalizationParams,
    TimeSeriesDataset,
    WindowSpec,
    WindowedSample,
    apply_dark_mask,
    denormalize_feature,
    normalize,
    window_target_timestamps,
)


class DivergenceError(RuntimeError):
    """A forward pass or training run produced a non-finite value."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


# (activation, derivative expressed in terms of the activation output)
_ACTIVATIONS = {
    "relu": (relu, lambda y: (y > 0).astype(float)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
}


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters for the stacked recurrent forecaster."""

    input_features: int
    layer_sizes: tuple[int, ...] = (64, 32)
    dropout_rate: float = 0.2
    cell_activation: str = "relu"
    seed: int = 0

    def __post_init__(self) -> None:
        sizes = tuple(int(h) for h in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if self.input_features < 1:
            raise ValueError("input_features must be >= 1")
        if not sizes or any(h < 1 for h in sizes):
            raise ValueError("layer_sizes must be non-empty, all >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.cell_activation not in _ACTIVATIONS:
            raise ValueError(
                f"unknown cell_activation {self.cell_activation!r}; "
                f"choose from {sorted(_ACTIVATIONS)}"
            )


@dataclass
class LayerParams:
    """Gate-stacked weights for one recurrent layer.

    ``w_in`` is (4H, D), ``w_rec`` is (4H, H), ``bias`` is (4H,), with the
    four H-sized blocks ordered (i, f, g, o).
    """

    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_rec.shape[1]

    def copy(self) -> "LayerParams":
        return LayerParams(self.w_in.copy(), self.w_rec.copy(), self.bias.copy())


@dataclass
class NetworkParameters:
    """All trainable state: per-layer gate stacks plus the linear head."""

    layers: list[LayerParams]
    dense_w: np.ndarray
    dense_b: np.ndarray

    def leaves(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed traversal order."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.extend((layer.w_in, layer.w_rec, layer.bias))
        out.extend((self.dense_w, self.dense_b))
        return out

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            [l.copy() for l in self.layers], self.dense_w.copy(), self.dense_b.copy()
        )

    def zeros_like(self) -> "NetworkParameters":
        return NetworkParameters(
            [
                LayerParams(
                    np.zeros_like(l.w_in),
                    np.zeros_like(l.w_rec),
                    np.zeros_like(l.bias),
                )
                for l in self.layers
            ],
            np.zeros_like(self.dense_w),
            np.zeros_like(self.dense_b),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([leaf.ravel() for leaf in self.leaves()])

    def from_vector(self, vec: np.ndarray) -> "NetworkParameters":
        out = self.zeros_like()
        offset = 0
        for leaf in out.leaves():
            n = leaf.size
            leaf[...] = vec[offset : offset + n].reshape(leaf.shape)
            offset += n
        if offset != vec.size:
            raise ValueError(f"vector has {vec.size} entries, need {offset}")
        return out

    def all_finite(self) -> bool:
        return all(np.isfinite(leaf).all() for leaf in self.leaves())


@dataclass
class AdamState:
    """Adam moment accumulators, shaped like the parameters they update."""

    m: NetworkParameters
    v: NetworkParameters
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: NetworkParameters, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), t=0, lr=lr, **kw)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    shuffle: bool = True
    # Per-epoch multiplicative step-size decay; 1.0 keeps plain Adam.
    lr_decay: float = 1.0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be in (0, 1]")


def init_params(config: NetworkConfig) -> NetworkParameters:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, forget-gate bias 1."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    layers = []
    d = config.input_features
    for h in config.layer_sizes:
        lim_in = 1.0 / math.sqrt(d)
        lim_rec = 1.0 / math.sqrt(h)
        w_in = rng.uniform(-lim_in, lim_in, size=(4 * h, d))
        w_rec = rng.uniform(-lim_rec, lim_rec, size=(4 * h, h))
        bias = np.zeros(4 * h)
        bias[h : 2 * h] = 1.0
        layers.append(LayerParams(w_in, w_rec, bias))
        d = h
    lim = 1.0 / math.sqrt(d)
    dense_w = rng.uniform(-lim, lim, size=d)
    dense_b = np.zeros(1)
    return NetworkParameters(layers, dense_w, dense_b)


def _check_window_shapes(
    params: NetworkParameters, config: NetworkConfig, inputs: np.ndarray
) -> None:
    if inputs.ndim != 3:
        raise ValueError("inputs must be (batch, p, features)")
    if inputs.shape[2] != config.input_features:
        raise ValueError(
            f"window has {inputs.shape[2]} features, config expects "
            f"{config.input_features}"
        )
    if len(params.layers) != len(config.layer_sizes) or any(
        l.hidden != h for l, h in zip(params.layers, config.layer_sizes)
    ):
        raise ValueError("parameters do not match the network config")


def forward_batch(
    params: NetworkParameters,
    config: NetworkConfig,
    inputs: np.ndarray,
    training_mode: bool = False,
    dropout_seed: int = 0,
    keep_cache: bool = True,
) -> tuple[np.ndarray, dict | None]:
    """Run the stacked cells over a batch of (p, F) windows.

    Returns per-sample scalar predictions and, when requested, the
    activation cache consumed by :func:`backward`.
    """
    inputs = np.asarray(inputs, dtype=float)
    _check_window_shapes(params, config, inputs)
    b, p, _ = inputs.shape
    act, _ = _ACTIVATIONS[config.cell_activation]

    layer_caches = []
    x_seq = inputs.transpose(1, 0, 2)  # (p, B, D)
    for layer in params.layers:
        h_dim = layer.hidden
        gates_i = np.empty((p, b, h_dim))
        gates_f = np.empty((p, b, h_dim))
        gates_g = np.empty((p, b, h_dim))
        gates_o = np.empty((p, b, h_dim))
        cells = np.empty((p, b, h_dim))
        cells_act = np.empty((p, b, h_dim))
        hidden = np.empty((p, b, h_dim))
        h_prev = np.zeros((b, h_dim))
        c_prev = np.zeros((b, h_dim))
        w_in_t = layer.w_in.T
        w_rec_t = layer.w_rec.T
        for t in range(p):
            pre = x_seq[t] @ w_in_t + h_prev @ w_rec_t + layer.bias
            i_t = sigmoid(pre[:, :h_dim])
            f_t = sigmoid(pre[:, h_dim : 2 * h_dim])
            g_t = act(pre[:, 2 * h_dim : 3 * h_dim])
            o_t = sigmoid(pre[:, 3 * h_dim :])
            c_t = f_t * c_prev + i_t * g_t
            r_t = act(c_t)
            h_t = o_t * r_t
            gates_i[t], gates_f[t], gates_g[t], gates_o[t] = i_t, f_t, g_t, o_t
            cells[t], cells_act[t], hidden[t] = c_t, r_t, h_t
            h_prev, c_prev = h_t, c_t
        layer_caches.append(
            {
                "x": x_seq,
                "i": gates_i,
                "f": gates_f,
                "g": gates_g,
                "o": gates_o,
                "c": cells,
                "r": cells_act,
                "h": hidden,
            }
        )
        x_seq = hidden

    h_top = x_seq[-1]  # (B, H_last)
    rate = config.dropout_rate
    if training_mode and rate > 0.0:
        drop_rng = np.random.Generator(np.random.PCG64(dropout_seed))
        keep = (drop_rng.random(h_top.shape) >= rate).astype(float)
        h_drop = h_top * keep / (1.0 - rate)
    else:
        keep = None
        h_drop = h_top
    predictions = h_drop @ params.dense_w + params.dense_b[0]
    if not np.isfinite(predictions).all():
        raise DivergenceError("non-finite prediction in forward pass")

    cache = None
    if keep_cache:
        cache = {
            "layers": layer_caches,
            "h_drop": h_drop,
            "keep": keep,
            "rate": rate if (training_mode and rate > 0.0) else 0.0,
            "predictions": predictions,
            "batch": b,
            "steps": p,
            "activation": config.cell_activation,
        }
    return predictions, cache


def forward(
    params: NetworkParameters,
    config: NetworkConfig,
    window: np.ndarray,
    training_mode: bool = False,
    dropout_seed: int = 0,
) -> tuple[float, dict]:
    """Predict from a single (p, F) window; returns the scalar and cache."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2:
        raise ValueError("window must be a (p, F) matrix")
    preds, cache = forward_batch(
        params, config, window[None], training_mode, dropout_seed
    )
    return float(preds[0]), cache


def loss_mse(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have equal length")
    if predictions.size == 0:
        raise ValueError("loss_mse needs at least one sample")
    diff = predictions - labels
    return float(np.mean(diff * diff))


def backward(
    params: NetworkParameters, cache: dict, labels: np.ndarray
) -> NetworkParameters:
    """Gradients of the batch-mean squared error w.r.t. every parameter."""
    labels = np.asarray(labels, dtype=float)
    b = cache["batch"]
    if labels.shape != (b,):
        raise ValueError(f"labels must have shape ({b},)")
    _, dact = _ACTIVATIONS[cache["activation"]]
    p = cache["steps"]

    d_pred = 2.0 * (cache["predictions"] - labels) / b  # (B,)
    grads = params.zeros_like()
    grads.dense_w[...] = cache["h_drop"].T @ d_pred
    grads.dense_b[0] = d_pred.sum()
    dh_drop = d_pred[:, None] * params.dense_w[None, :]
    if cache["rate"] > 0.0:
        dh_top = dh_drop * cache["keep"] / (1.0 - cache["rate"])
    else:
        dh_top = dh_drop

    # Seed the top layer at the final step only; lower layers receive the
    # full back-propagated sequence from the layer above.
    n_layers = len(params.layers)
    dh_seq = None
    for li in range(n_layers - 1, -1, -1):
        layer = params.layers[li]
        lc = cache["layers"][li]
        h_dim = layer.hidden
        g_w_in = grads.layers[li].w_in
        g_w_rec = grads.layers[li].w_rec
        g_bias = grads.layers[li].bias
        dx_seq = np.zeros_like(lc["x"])
        dh_rec = np.zeros((b, h_dim))
        dc_carry = np.zeros((b, h_dim))
        da = np.empty((b, 4 * h_dim))
        for t in range(p - 1, -1, -1):
            if li == n_layers - 1:
                dh = dh_top + dh_rec if t == p - 1 else dh_rec
            else:
                dh = dh_seq[t] + dh_rec
            i_t, f_t, g_t, o_t = lc["i"][t], lc["f"][t], lc["g"][t], lc["o"][t]
            r_t = lc["r"][t]
            c_prev = lc["c"][t - 1] if t > 0 else np.zeros((b, h_dim))
            h_prev = lc["h"][t - 1] if t > 0 else np.zeros((b, h_dim))
            dc = dh * o_t * dact(r_t) + dc_carry
            da[:, :h_dim] = dc * g_t * i_t * (1.0 - i_t)
            da[:, h_dim : 2 * h_dim] = dc * c_prev * f_t * (1.0 - f_t)
            da[:, 2 * h_dim : 3 * h_dim] = dc * i_t * dact(g_t)
            da[:, 3 * h_dim :] = dh * r_t * o_t * (1.0 - o_t)
            g_w_in += da.T @ lc["x"][t]
            g_w_rec += da.T @ h_prev
            g_bias += da.sum(axis=0)
            dx_seq[t] = da @ layer.w_in
            dh_rec = da @ layer.w_rec
            dc_carry = dc * f_t
        dh_seq = dx_seq
    return grads


def adam_step(
    params: NetworkParameters, grads: NetworkParameters, state: AdamState
) -> tuple[NetworkParameters, AdamState]:
    """One bias-corrected Adam update; returns fresh parameters and state."""
    t = state.t + 1
    new_params = params.copy()
    new_m = state.m.copy()
    new_v = state.v.copy()
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p_leaf, g_leaf, m_leaf, v_leaf in zip(
        new_params.leaves(), grads.leaves(), new_m.leaves(), new_v.leaves()
    ):
        m_leaf[...] = state.beta1 * m_leaf + (1.0 - state.beta1) * g_leaf
        v_leaf[...] = state.beta2 * v_leaf + (1.0 - state.beta2) * g_leaf * g_leaf
        m_hat = m_leaf / bc1
        v_hat = v_leaf / bc2
        p_leaf -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(new_m, new_v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_params, new_state


def _samples_to_arrays(
    samples: list[WindowedSample] | tuple[np.ndarray, np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple):
        inputs, labels = samples
        return np.asarray(inputs, dtype=float), np.asarray(labels, dtype=float)
    if not samples:
        raise ValueError("training needs at least one sample")
    inputs = np.stack([s.input for s in samples]).astype(float)
    labels = np.array([s.label for s in samples], dtype=float)
    return inputs, labels


def train(
    samples: list[WindowedSample] | tuple[np.ndarray, np.ndarray],
    net: NetworkConfig,
    tc: TrainingConfig,
) -> tuple[NetworkParameters, list[float]]:
    """Mini-batch Adam training; returns parameters and per-epoch mean MSE.

    Fully deterministic given (net.seed, tc.seed): the shuffle order and
    each batch's dropout mask are drawn from one seeded stream.
    """
    inputs, labels = _samples_to_arrays(samples)
    if inputs.shape[0] == 0:
        raise ValueError("training needs at least one sample")
    n = inputs.shape[0]
    params = init_params(net)
    state = AdamState.init(params, lr=tc.learning_rate)
    rng = np.random.Generator(np.random.PCG64(tc.seed))
    loss_history: list[float] = []
    for epoch in range(tc.epochs):
        state.lr = tc.learning_rate * tc.lr_decay**epoch
        order = rng.permutation(n) if tc.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start : start + tc.batch_size]
            dropout_seed = int(rng.integers(0, 2**63 - 1))
            try:
                preds, cache = forward_batch(
                    params,
                    net,
                    inputs[idx],
                    training_mode=True,
                    dropout_seed=dropout_seed,
                )
            except DivergenceError as exc:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}: {exc}"
                ) from None
            batch_loss = loss_mse(preds, labels[idx])
            if not math.isfinite(batch_loss):
                raise DivergenceError(f"training diverged at epoch {epoch}")
            total += batch_loss * idx.size
            grads = backward(params, cache, labels[idx])
            params, state = adam_step(params, grads, state)
        loss_history.append(total / n)
    return params, loss_history


def predict_series(
    params: NetworkParameters,
    config: NetworkConfig,
    ds: TimeSeriesDataset,
    spec: WindowSpec,
    normalizer: NormalizationParams,
    mask: DarkHourMask | None = None,
    chunk: int = 1024,
) -> ForecastSeries:
    """Backtest-style forecast over every target hour the dataset covers.

    Each prediction uses the window ending ``horizon_m`` hours earlier, is
    rescaled to MW, clipped at 0, and finally forced to zero on dark slots.
    """
    if ds.n < spec.lookback_p + spec.horizon_m:
        raise DataError(
            f"need at least {spec.lookback_p + spec.horizon_m} rows, have {ds.n}"
        )
    values = normalize(ds.values, normalizer)
    view = np.lib.stride_tricks.sliding_window_view(values, spec.lookback_p, axis=0)
    n_samples = ds.n - spec.lookback_p - spec.horizon_m + 1
    inputs = view[:n_samples].transpose(0, 2, 1)
    preds = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        block = np.ascontiguousarray(inputs[start : start + chunk])
        out, _ = forward_batch(
            params, config, block, training_mode=False, keep_cache=False
        )
        preds[start : start + out.shape[0]] = out
    mw = denormalize_feature(preds, normalizer, spec.target_feature_j)
    mw = np.maximum(mw, 0.0)
    series = ForecastSeries(
        window_target_timestamps(ds, spec),
        mw,
        ds.feature_names[spec.target_feature_j],
    )
    if mask is not None:
        series = apply_dark_mask(series, mask)
    return series
