"""Versioned model checkpoints.

One ``.npz`` container per model. Arrays round-trip bit-exactly; scalar
configuration travels as a JSON sidecar string inside the archive. The
``kind`` field distinguishes the recurrent forecaster from the two
baseline families so a single loader can dispatch on file content.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines import KMeansModel, MonthlyHourModel
from .data import DarkHourMask, NormalizationParams
from .lstm import LayerParams, NetworkConfig, NetworkParameters

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint file."""


def _write(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    meta = {"format_version": FORMAT_VERSION, **meta}
    payload = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    payload.update(arrays)
    with Path(path).open("wb") as fh:
        np.savez(fh, **payload)


def _read(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such file: {path}")
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint: {exc}") from None
    if "__meta__" not in archive:
        raise CheckpointError(f"{path}: missing metadata record")
    meta = json.loads(bytes(archive["__meta__"]).decode())
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    arrays = {k: archive[k] for k in archive.files if k != "__meta__"}
    return meta, arrays


def _mask_arrays(mask: DarkHourMask | None) -> dict[str, np.ndarray]:
    if mask is None:
        return {}
    return {
        "mask_table": mask.table.astype(np.uint8),
        "mask_defined": mask.month_defined.astype(np.uint8),
    }


def _mask_from(arrays: dict[str, np.ndarray]) -> DarkHourMask | None:
    if "mask_table" not in arrays:
        return None
    return DarkHourMask(
        arrays["mask_table"].astype(bool), arrays["mask_defined"].astype(bool)
    )


def save_lstm(
    path: str | Path,
    config: NetworkConfig,
    params: NetworkParameters,
    normalizer: NormalizationParams,
    mask: DarkHourMask | None = None,
) -> None:
    meta = {
        "kind": "lstm",
        "input_features": config.input_features,
        "layer_sizes": list(config.layer_sizes),
        "dropout_rate": config.dropout_rate,
        "cell_activation": config.cell_activation,
        "seed": config.seed,
    }
    arrays: dict[str, np.ndarray] = {
        "dense_w": params.dense_w,
        "dense_b": params.dense_b,
        "norm_min": normalizer.feature_min,
        "norm_max": normalizer.feature_max,
    }
    for i, layer in enumerate(params.layers):
        arrays[f"layer{i}_w_in"] = layer.w_in
        arrays[f"layer{i}_w_rec"] = layer.w_rec
        arrays[f"layer{i}_bias"] = layer.bias
    arrays.update(_mask_arrays(mask))
    _write(path, meta, arrays)


def load_lstm(
    path: str | Path,
) -> tuple[NetworkConfig, NetworkParameters, NormalizationParams, DarkHourMask | None]:
    meta, arrays = _read(path)
    if meta.get("kind") != "lstm":
        raise CheckpointError(f"{path}: kind {meta.get('kind')!r}, expected 'lstm'")
    config = NetworkConfig(
        input_features=int(meta["input_features"]),
        layer_sizes=tuple(int(h) for h in meta["layer_sizes"]),
        dropout_rate=float(meta["dropout_rate"]),
        cell_activation=str(meta["cell_activation"]),
        seed=int(meta["seed"]),
    )
    layers = []
    for i in range(len(config.layer_sizes)):
        layers.append(
            LayerParams(
                arrays[f"layer{i}_w_in"],
                arrays[f"layer{i}_w_rec"],
                arrays[f"layer{i}_bias"],
            )
        )
    params = NetworkParameters(layers, arrays["dense_w"], arrays["dense_b"])
    normalizer = NormalizationParams(arrays["norm_min"], arrays["norm_max"])
    return config, params, normalizer, _mask_from(arrays)


def save_kmeans(
    path: str | Path, model: KMeansModel, mask: DarkHourMask | None = None
) -> None:
    meta = {"kind": "kmeans", "n_iterations": model.n_iterations}
    arrays = {
        "centroids": model.centroids,
        "assignments": model.assignments.astype(np.int64),
        "inertia": np.array([model.inertia]),
        "month_modal": model.month_modal.astype(np.int64),
    }
    arrays.update(_mask_arrays(mask))
    _write(path, meta, arrays)


def load_kmeans(path: str | Path) -> tuple[KMeansModel, DarkHourMask | None]:
    meta, arrays = _read(path)
    if meta.get("kind") != "kmeans":
        raise CheckpointError(f"{path}: kind {meta.get('kind')!r}, expected 'kmeans'")
    model = KMeansModel(
        centroids=arrays["centroids"],
        assignments=arrays["assignments"],
        inertia=float(arrays["inertia"][0]),
        month_modal=arrays["month_modal"],
        n_iterations=int(meta["n_iterations"]),
    )
    return model, _mask_from(arrays)


def save_monthly(
    path: str | Path, model: MonthlyHourModel, mask: DarkHourMask | None = None
) -> None:
    arrays = {"table": model.table}
    arrays.update(_mask_arrays(mask))
    _write(path, {"kind": "monthly"}, arrays)


def load_monthly(path: str | Path) -> tuple[MonthlyHourModel, DarkHourMask | None]:
    meta, arrays = _read(path)
    if meta.get("kind") != "monthly":
        raise CheckpointError(f"{path}: kind {meta.get('kind')!r}, expected 'monthly'")
    return MonthlyHourModel(arrays["table"]), _mask_from(arrays)
