"""Dev scan: train the forecaster on a synthetic span and log test NMAE
every few epochs, for hyperparameter tuning. Not part of the test suite."""

import sys
import time

import numpy as np

from pvdispatch.baselines import monthly_hour_fit, monthly_forecast_values
from pvdispatch.data import (
    TimeSeriesDataset,
    WindowSpec,
    derive_dark_mask,
    fit_normalizer,
    normalize,
    split_chronological,
    window_arrays,
)
from pvdispatch.dispatch import nmae
from pvdispatch.lstm import (
    AdamState,
    NetworkConfig,
    adam_step,
    backward,
    forward_batch,
    init_params,
    loss_mse,
    predict_series,
)
from pvdispatch.synth import SynthParams, synth_year


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 11
    epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 60
    lr = float(sys.argv[3]) if len(sys.argv) > 3 else 1e-3
    batch = int(sys.argv[4]) if len(sys.argv) > 4 else 32
    dropout = float(sys.argv[5]) if len(sys.argv) > 5 else 0.2
    phi = float(sys.argv[6]) if len(sys.argv) > 6 else 0.99
    noise = float(sys.argv[7]) if len(sys.argv) > 7 else 0.08

    sp = SynthParams(cloud_persistence=phi, area_noise_scale=noise)
    gen, _dem = synth_year(seed=seed, hours=10968, start="2022-10-01T00", params=sp)
    train_ds, test_ds = split_chronological(gen, 0.7987)
    normalizer = fit_normalizer(train_ds)
    mask = derive_dark_mask(train_ds, 0)
    spec = WindowSpec(24, 12, 0)
    monthly = monthly_hour_fit(train_ds, 0)
    actual = test_ds.values[:, 0]
    m_nmae = nmae(monthly_forecast_values(monthly, test_ds.timestamps), actual)
    print(f"monthly NMAE {m_nmae:.4f}")

    tn = TimeSeriesDataset(
        train_ds.timestamps, normalize(train_ds.values, normalizer),
        train_ds.feature_names,
    )
    inputs, labels = window_arrays(tn, spec)
    n = len(labels)
    net = NetworkConfig(input_features=3, layer_sizes=(64, 32), dropout_rate=dropout, seed=1)
    decay = float(sys.argv[8]) if len(sys.argv) > 8 else 1.0
    params = init_params(net)
    state = AdamState.init(params, lr=lr)
    rng = np.random.Generator(np.random.PCG64(2))

    def test_nmae():
        series = predict_series(params, net, gen, spec, normalizer, mask)
        idx = {int(k): i for i, k in enumerate(series.timestamps.astype(np.int64))}
        sel = np.array([idx[int(k)] for k in test_ds.timestamps.astype(np.int64)])
        return nmae(series.values[sel], actual)

    t0 = time.time()
    for epoch in range(epochs):
        state.lr = lr * decay**epoch
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            sel = order[start : start + batch]
            ds_seed = int(rng.integers(0, 2**63 - 1))
            preds, cache = forward_batch(params, net, inputs[sel], True, ds_seed)
            total += loss_mse(preds, labels[sel]) * sel.size
            grads = backward(params, cache, labels[sel])
            params, state = adam_step(params, grads, state)
        if (epoch + 1) % 5 == 0 or epoch == 0:
            tn_val = test_nmae()
            print(
                f"epoch {epoch + 1:3d} train_mse {total / n:.5f} "
                f"test_nmae {tn_val:.4f} ratio {tn_val / m_nmae:.3f} "
                f"[{time.time() - t0:.0f}s]",
                flush=True,
            )


if __name__ == "__main__":
    main()
