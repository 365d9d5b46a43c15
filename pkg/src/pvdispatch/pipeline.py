"""End-to-end pipeline: data, three forecasters, per-day dispatch, reports.

The pipeline splits the hourly history chronologically, fits the
normalizer, dark mask, and all three forecasters on the training span
only, forecasts the test span, then solves a day-ahead and a real-time
dispatch for every complete calendar day of the test span. Metrics are
aggregated per forecast method into the six-row report table; the
discrepancy file carries per-hour forecast/actual/absorbed series for
external plotting.

All randomness flows from seeds in the configuration, so a fixed config
reproduces byte-identical metric files.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import (
    daily_profiles,
    kmeans_fit,
    kmeans_forecast_values,
    monthly_forecast_values,
    monthly_hour_fit,
)
from .data import (
    DarkHourMask,
    DataError,
    ForecastSeries,
    TimeSeriesDataset,
    WindowSpec,
    apply_dark_mask,
    derive_dark_mask,
    fit_normalizer,
    load_csv,
    load_mask_csv,
    normalize,
    split_chronological,
    window_arrays,
)
from .dispatch import (
    DispatchCase,
    EvaluationReport,
    default_fleet,
    load_fleet_csv,
    nmae,
    solve_da,
    solve_rt,
)
from .lstm import NetworkConfig, TrainingConfig, predict_series, train
from .synth import SynthParams, synth_year

METHODS = ("kmeans", "monthly", "mlstm")
METRIC_ROWS = (
    "gas_mwh",
    "co2_kg",
    "load_shedding_mwh",
    "spillage_mwh",
    "da_rt_cost_usd",
    "nmae",
)


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs; see the README for the YAML schema."""

    # data: either a synthetic spec or paths to CSV files
    synth_enabled: bool = True
    synth_hours: int = 8760
    synth_start: str = "2023-01-01T00"
    synth_areas: int = 3
    generation_csv: str | None = None
    demand_csv: str | None = None
    fleet_csv: str | None = None
    mask_csv: str | None = None
    # windowing
    lookback_p: int = 24
    horizon_m: int = 12
    target_feature_j: int = 0
    # split
    train_fraction: float = 0.75
    # network / training
    layer_sizes: tuple[int, ...] = (64, 32)
    dropout_rate: float = 0.2
    cell_activation: str = "relu"
    network_seed: int = 1
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    training_seed: int = 2
    shuffle: bool = True
    # baselines
    kmeans_clusters: int = 10
    kmeans_seed: int = 3
    # dispatch
    voll: float = 1000.0
    emission_factor: float = 202.0
    dispatch_horizon: int = 24
    # run
    seed: int = 0
    output_dir: str = "runs/out"

    def validate(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )
        if self.lookback_p < 1 or self.horizon_m < 1:
            raise ConfigError("lookback_p and horizon_m must be >= 1")
        if self.target_feature_j < 0:
            raise ConfigError("target_feature_j must be >= 0")
        if self.emission_factor <= 0:
            raise ConfigError("emission_factor must be > 0")
        if self.dispatch_horizon != 24:
            raise ConfigError("dispatch runs per calendar day; horizon must be 24")
        if self.kmeans_clusters < 1:
            raise ConfigError("kmeans_clusters must be >= 1")
        if not self.synth_enabled:
            for label, p in (
                ("generation_csv", self.generation_csv),
                ("demand_csv", self.demand_csv),
            ):
                if p is None:
                    raise ConfigError(f"{label} required when synth is disabled")
                if not Path(p).exists():
                    raise ConfigError(f"{label}: no such file: {p}")
        for label, p in (("fleet_csv", self.fleet_csv), ("mask_csv", self.mask_csv)):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{label}: no such file: {p}")
        # Constructor-level checks, surfaced before any stage runs.
        try:
            NetworkConfig(
                input_features=1,
                layer_sizes=self.layer_sizes,
                dropout_rate=self.dropout_rate,
                cell_activation=self.cell_activation,
                seed=self.network_seed,
            )
            TrainingConfig(
                epochs=self.epochs,
                batch_size=self.batch_size,
                learning_rate=self.learning_rate,
                seed=self.training_seed,
                shuffle=self.shuffle,
                lr_decay=self.lr_decay,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def config_from_dict(raw: dict) -> PipelineConfig:
    """Build a config from the nested YAML layout."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    flat: dict = {}
    data = raw.get("data", {})
    synth = data.get("synth", {}) if isinstance(data, dict) else {}
    if synth:
        flat["synth_enabled"] = bool(synth.get("enabled", True))
        flat["synth_hours"] = int(synth.get("hours", 8760))
        flat["synth_start"] = str(synth.get("start", "2023-01-01T00"))
        flat["synth_areas"] = int(synth.get("areas", 3))
    if isinstance(data, dict):
        if data.get("generation_csv"):
            flat["generation_csv"] = str(data["generation_csv"])
            flat.setdefault("synth_enabled", False)
        if data.get("demand_csv"):
            flat["demand_csv"] = str(data["demand_csv"])
        if data.get("fleet_csv"):
            flat["fleet_csv"] = str(data["fleet_csv"])
        if data.get("mask_csv"):
            flat["mask_csv"] = str(data["mask_csv"])
    window = raw.get("window", {})
    if window:
        flat["lookback_p"] = int(window.get("lookback", 24))
        flat["horizon_m"] = int(window.get("horizon", 12))
        flat["target_feature_j"] = int(window.get("target", 0))
    split = raw.get("split", {})
    if split:
        flat["train_fraction"] = float(split.get("train_fraction", 0.75))
    network = raw.get("network", {})
    if network:
        flat["layer_sizes"] = tuple(int(h) for h in network.get("layers", (64, 32)))
        flat["dropout_rate"] = float(network.get("dropout", 0.2))
        flat["cell_activation"] = str(network.get("activation", "relu"))
        flat["network_seed"] = int(network.get("seed", 1))
    training = raw.get("training", {})
    if training:
        flat["epochs"] = int(training.get("epochs", 50))
        flat["batch_size"] = int(training.get("batch_size", 32))
        flat["learning_rate"] = float(training.get("learning_rate", 1e-3))
        flat["lr_decay"] = float(training.get("lr_decay", 1.0))
        flat["training_seed"] = int(training.get("seed", 2))
        flat["shuffle"] = bool(training.get("shuffle", True))
    baselines = raw.get("baselines", {})
    if baselines:
        flat["kmeans_clusters"] = int(baselines.get("kmeans_clusters", 10))
        flat["kmeans_seed"] = int(baselines.get("kmeans_seed", 3))
    dispatch = raw.get("dispatch", {})
    if dispatch:
        flat["voll"] = float(dispatch.get("voll", 1000.0))
        flat["emission_factor"] = float(dispatch.get("emission_factor", 202.0))
        flat["dispatch_horizon"] = int(dispatch.get("horizon", 24))
    if "seed" in raw:
        flat["seed"] = int(raw["seed"])
    if "output_dir" in raw:
        flat["output_dir"] = str(raw["output_dir"])
    try:
        return PipelineConfig(**flat)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(raw or {})


@dataclass
class MethodOutcome:
    """Everything the pipeline produced for one forecast method."""

    forecast: ForecastSeries
    report: EvaluationReport
    daily: list[dict]
    absorbed: np.ndarray  # actual minus spill, per dispatched hour


@dataclass
class PipelineResult:
    config: PipelineConfig
    outcomes: dict[str, MethodOutcome]
    dispatch_timestamps: np.ndarray
    demand: np.ndarray
    actual: np.ndarray
    timings: dict[str, float]
    mask: DarkHourMask

    @property
    def reports(self) -> dict[str, EvaluationReport]:
        return {m: o.report for m, o in self.outcomes.items()}


def _stage(timings: dict[str, float], name: str):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - self.t0
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Timer()


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Execute every stage and return reports keyed by forecast method."""
    config.validate()
    timings: dict[str, float] = {}

    with _stage(timings, "load_data"):
        if config.synth_enabled:
            generation, demand_ds = synth_year(
                seed=config.seed,
                areas=config.synth_areas,
                hours=config.synth_hours,
                start=config.synth_start,
            )
        else:
            generation = load_csv(config.generation_csv)
            demand_ds = load_csv(config.demand_csv)
        if config.target_feature_j >= generation.n_features:
            raise DataError(
                f"target feature {config.target_feature_j} out of range for "
                f"{generation.n_features} areas"
            )
        if demand_ds.n != generation.n or (
            demand_ds.timestamps[0] != generation.timestamps[0]
        ):
            raise DataError("demand series must align with the generation series")
        fleet = (
            load_fleet_csv(config.fleet_csv) if config.fleet_csv else default_fleet()
        )

    with _stage(timings, "split"):
        train_ds, test_ds = split_chronological(generation, config.train_fraction)
        spec = WindowSpec(
            config.lookback_p, config.horizon_m, config.target_feature_j
        )

    with _stage(timings, "fit_preprocessing"):
        normalizer = fit_normalizer(train_ds)
        if config.mask_csv:
            mask = load_mask_csv(config.mask_csv)
        else:
            mask = derive_dark_mask(train_ds, config.target_feature_j)

    with _stage(timings, "train_mlstm"):
        net = NetworkConfig(
            input_features=generation.n_features,
            layer_sizes=config.layer_sizes,
            dropout_rate=config.dropout_rate,
            cell_activation=config.cell_activation,
            seed=config.network_seed,
        )
        tc = TrainingConfig(
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            seed=config.training_seed,
            shuffle=config.shuffle,
            lr_decay=config.lr_decay,
        )
        train_norm = TimeSeriesDataset(
            train_ds.timestamps,
            normalize(train_ds.values, normalizer),
            train_ds.feature_names,
        )
        params, _history = train(window_arrays(train_norm, spec), net, tc)

    with _stage(timings, "fit_baselines"):
        profiles, day_months = daily_profiles(train_ds, config.target_feature_j)
        km = kmeans_fit(
            profiles,
            config.kmeans_clusters,
            seed=config.kmeans_seed,
            months=day_months,
        )
        monthly = monthly_hour_fit(train_ds, config.target_feature_j)

    with _stage(timings, "forecast"):
        target_name = generation.feature_names[config.target_feature_j]
        full_lstm = predict_series(params, net, generation, spec, normalizer, mask)
        # Slice the backtest forecast down to the test span.
        offsets = {
            ts: i for i, ts in enumerate(full_lstm.timestamps.astype(np.int64))
        }
        test_keys = test_ds.timestamps.astype(np.int64)
        missing = [k for k in test_keys if int(k) not in offsets]
        if missing:
            raise DataError("forecast does not cover the full test span")
        idx = np.array([offsets[int(k)] for k in test_keys])
        forecasts = {
            "mlstm": ForecastSeries(
                test_ds.timestamps, full_lstm.values[idx], target_name
            )
        }
        forecasts["monthly"] = apply_dark_mask(
            ForecastSeries(
                test_ds.timestamps,
                monthly_forecast_values(monthly, test_ds.timestamps),
                target_name,
            ),
            mask,
        )
        forecasts["kmeans"] = apply_dark_mask(
            ForecastSeries(
                test_ds.timestamps,
                kmeans_forecast_values(km, test_ds.timestamps),
                target_name,
            ),
            mask,
        )

    with _stage(timings, "dispatch"):
        actual = test_ds.values[:, config.target_feature_j]
        demand_all = demand_ds.values[:, 0]
        demand_test = demand_all[generation.n - test_ds.n :]
        hours_of_day = test_ds.hours()
        first_midnight = int(np.argmax(hours_of_day == 0))
        if not (hours_of_day == 0).any():
            raise DataError("test span contains no complete calendar day")
        n_days = (test_ds.n - first_midnight) // 24
        if n_days == 0:
            raise DataError("test span contains no complete calendar day")
        day_slice = slice(first_midnight, first_midnight + 24 * n_days)
        dispatch_ts = test_ds.timestamps[day_slice]
        dispatch_actual = actual[day_slice]
        dispatch_demand = demand_test[day_slice]
        outcomes: dict[str, MethodOutcome] = {}
        for method in METHODS:
            series = forecasts[method]
            fvals = series.values[day_slice]
            gas = 0.0
            shed = 0.0
            spill = 0.0
            cost = 0.0
            absorbed = np.empty(24 * n_days)
            daily: list[dict] = []
            for d in range(n_days):
                sl = slice(24 * d, 24 * (d + 1))
                case = DispatchCase(
                    demand=dispatch_demand[sl],
                    forecast=fvals[sl],
                    actual=dispatch_actual[sl],
                    fleet=fleet,
                    voll=config.voll,
                    emission_factor=config.emission_factor,
                )
                da = solve_da(case)
                rt = solve_rt(case, da)
                gas_mask = np.array([g.gas_fired for g in fleet], dtype=bool)
                combined = da.p + rt.delta
                day_gas = float(combined[gas_mask].sum()) if gas_mask.any() else 0.0
                day_shed = float((da.ls + rt.ls_rt).sum())
                day_spill = float(rt.spill.sum())
                day_cost = float(da.objective + rt.objective)
                gas += day_gas
                shed += day_shed
                spill += day_spill
                cost += day_cost
                absorbed[sl] = dispatch_actual[sl] - rt.spill
                daily.append(
                    {
                        "date": str(dispatch_ts[24 * d].astype("datetime64[D]")),
                        "gas_mwh": day_gas,
                        "co2_kg": config.emission_factor * day_gas,
                        "load_shedding_mwh": day_shed,
                        "spillage_mwh": day_spill,
                        "da_rt_cost_usd": day_cost,
                    }
                )
            report = EvaluationReport(
                gas_mwh=gas,
                co2_kg=config.emission_factor * gas,
                shed_mwh=shed,
                spill_mwh=spill,
                cost_usd=cost,
                nmae=nmae(fvals, dispatch_actual),
            )
            outcomes[method] = MethodOutcome(series, report, daily, absorbed)

    return PipelineResult(
        config=config,
        outcomes=outcomes,
        dispatch_timestamps=dispatch_ts,
        demand=dispatch_demand,
        actual=dispatch_actual,
        timings=timings,
        mask=mask,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit_report(result: PipelineResult, out_dir: str | Path) -> dict:
    """Write metrics.csv, metrics_daily.csv, discrepancy.csv, manifest.json.

    Returns the manifest dict. On failure every file created by this call
    is removed so no partial output survives.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        metrics_path = out / "metrics.csv"
        with metrics_path.open("w", newline="", encoding="utf-8") as fh:
            fh.write("metric," + ",".join(METHODS) + "\n")
            values = {
                "gas_mwh": lambda r: r.gas_mwh,
                "co2_kg": lambda r: r.co2_kg,
                "load_shedding_mwh": lambda r: r.shed_mwh,
                "spillage_mwh": lambda r: r.spill_mwh,
                "da_rt_cost_usd": lambda r: r.cost_usd,
                "nmae": lambda r: r.nmae,
            }
            for row in METRIC_ROWS:
                cells = [
                    _fmt(values[row](result.outcomes[m].report)) for m in METHODS
                ]
                fh.write(row + "," + ",".join(cells) + "\n")
        written.append(metrics_path)

        daily_path = out / "metrics_daily.csv"
        with daily_path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(
                "date,method,gas_mwh,co2_kg,load_shedding_mwh,"
                "spillage_mwh,da_rt_cost_usd\n"
            )
            for method in METHODS:
                for day in result.outcomes[method].daily:
                    fh.write(
                        ",".join(
                            [
                                day["date"],
                                method,
                                _fmt(day["gas_mwh"]),
                                _fmt(day["co2_kg"]),
                                _fmt(day["load_shedding_mwh"]),
                                _fmt(day["spillage_mwh"]),
                                _fmt(day["da_rt_cost_usd"]),
                            ]
                        )
                        + "\n"
                    )
        written.append(daily_path)

        disc_path = out / "discrepancy.csv"
        ts_index = {
            int(k): i
            for i, k in enumerate(
                result.outcomes[METHODS[0]].forecast.timestamps.astype(np.int64)
            )
        }
        with disc_path.open("w", newline="", encoding="utf-8") as fh:
            header = ["timestamp", "demand", "actual"]
            header += [f"forecast_{m}" for m in METHODS]
            header += [f"absorbed_{m}" for m in METHODS]
            fh.write(",".join(header) + "\n")
            for i, ts in enumerate(result.dispatch_timestamps):
                row = [str(ts), _fmt(result.demand[i]), _fmt(result.actual[i])]
                j = ts_index[int(ts.astype(np.int64))]
                row += [_fmt(result.outcomes[m].forecast.values[j]) for m in METHODS]
                row += [_fmt(result.outcomes[m].absorbed[i]) for m in METHODS]
                fh.write(",".join(row) + "\n")
        written.append(disc_path)

        manifest = {
            "format_version": 1,
            "package_version": __version__,
            "numpy_version": np.__version__,
            "config": asdict(result.config),
            "seeds": {
                "global": result.config.seed,
                "network": result.config.network_seed,
                "training": result.config.training_seed,
                "kmeans": result.config.kmeans_seed,
            },
            "timings_s": {k: round(v, 6) for k, v in result.timings.items()},
            "outputs": {p.name: _sha256(p) for p in written},
        }
        manifest_path = out / "manifest.json"
        manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        written.append(manifest_path)
        return manifest
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        raise
