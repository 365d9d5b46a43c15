"""Command-line entry points.

Subcommands: synth, train, forecast, dispatch, evaluate, run. Exit code 0
on success, 2 for configuration or input validation errors, 3 for stage
failures at run time.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .baselines import (
    daily_profiles,
    kmeans_fit,
    kmeans_forecast_values,
    monthly_forecast_values,
    monthly_hour_fit,
)
from .data import (
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
    save_mask_csv,
    split_chronological,
    window_arrays,
    write_csv,
)
from .dispatch import (
    DispatchCase,
    DispatchError,
    default_fleet,
    load_fleet_csv,
    nmae as nmae_metric,
    save_fleet_csv,
    solve_da,
    solve_rt,
)
from .lstm import NetworkConfig, TrainingConfig, predict_series, train
from .pipeline import (
    ConfigError,
    StageError,
    emit_report,
    load_config,
    run_pipeline,
)
from .synth import synth_year

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _fail_config(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def _fail_stage(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_STAGE


def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    generation, demand = synth_year(
        seed=args.seed, areas=args.areas, hours=args.hours, start=args.start
    )
    write_csv(generation, out / "generation.csv")
    write_csv(demand, out / "demand.csv")
    print(f"wrote {out / 'generation.csv'} and {out / 'demand.csv'}")
    return EXIT_OK


def _load_series(config) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    if config.synth_enabled:
        return synth_year(
            seed=config.seed,
            areas=config.synth_areas,
            hours=config.synth_hours,
            start=config.synth_start,
        )
    return load_csv(config.generation_csv), load_csv(config.demand_csv)


def _cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    config.validate()
    out = Path(args.out or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    generation, _demand = _load_series(config)
    train_ds, _test_ds = split_chronological(generation, config.train_fraction)
    spec = WindowSpec(config.lookback_p, config.horizon_m, config.target_feature_j)
    normalizer = fit_normalizer(train_ds)
    mask = (
        load_mask_csv(config.mask_csv)
        if config.mask_csv
        else derive_dark_mask(train_ds, config.target_feature_j)
    )
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
    params, history = train(window_arrays(train_norm, spec), net, tc)
    profiles, months = daily_profiles(train_ds, config.target_feature_j)
    km = kmeans_fit(
        profiles, config.kmeans_clusters, seed=config.kmeans_seed, months=months
    )
    monthly = monthly_hour_fit(train_ds, config.target_feature_j)
    checkpoint.save_lstm(out / "mlstm.npz", net, params, normalizer, mask)
    checkpoint.save_kmeans(out / "kmeans.npz", km, mask)
    checkpoint.save_monthly(out / "monthly.npz", monthly, mask)
    save_mask_csv(mask, out / "dark_mask.csv")
    print(
        f"trained {len(history)} epochs, final MSE {history[-1]:.6g}; "
        f"checkpoints in {out}"
    )
    return EXIT_OK


def _cmd_forecast(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    config.validate()
    models = Path(args.models)
    out = Path(args.out or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    generation, _demand = _load_series(config)
    _train_ds, test_ds = split_chronological(generation, config.train_fraction)
    spec = WindowSpec(config.lookback_p, config.horizon_m, config.target_feature_j)

    net, params, normalizer, mask = checkpoint.load_lstm(models / "mlstm.npz")
    km, _ = checkpoint.load_kmeans(models / "kmeans.npz")
    monthly, _ = checkpoint.load_monthly(models / "monthly.npz")
    full = predict_series(params, net, generation, spec, normalizer, mask)
    idx = {int(k): i for i, k in enumerate(full.timestamps.astype(np.int64))}
    sel = [idx.get(int(k)) for k in test_ds.timestamps.astype(np.int64)]
    if any(i is None for i in sel):
        return _fail_stage("test span not fully covered by the forecast window")
    name = generation.feature_names[config.target_feature_j]
    series = {
        "mlstm": full.values[np.array(sel)],
        "monthly": apply_dark_mask(
            ForecastSeries(
                test_ds.timestamps,
                monthly_forecast_values(monthly, test_ds.timestamps),
                name,
            ),
            mask,
        ).values,
        "kmeans": apply_dark_mask(
            ForecastSeries(
                test_ds.timestamps,
                kmeans_forecast_values(km, test_ds.timestamps),
                name,
            ),
            mask,
        ).values,
    }
    path = out / "forecasts.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("timestamp,actual,kmeans,monthly,mlstm\n")
        actual = test_ds.values[:, config.target_feature_j]
        for i, ts in enumerate(test_ds.timestamps):
            fh.write(
                f"{ts},{actual[i]!r},{series['kmeans'][i]!r},"
                f"{series['monthly'][i]!r},{series['mlstm'][i]!r}\n"
            )
    print(f"wrote {path}")
    return EXIT_OK


def _read_single_column(path: str, expect_hours: int | None = None) -> np.ndarray:
    ds = load_csv(path)
    if ds.n_features != 1:
        raise DataError(f"{path}: expected a single value column")
    if expect_hours is not None and ds.n != expect_hours:
        raise DataError(f"{path}: expected {expect_hours} rows, got {ds.n}")
    return ds.values[:, 0]


def _cmd_dispatch(args: argparse.Namespace) -> int:
    fleet = load_fleet_csv(args.fleet) if args.fleet else default_fleet()
    demand = _read_single_column(args.demand)
    forecast = _read_single_column(args.forecast, demand.shape[0])
    actual = _read_single_column(args.actual, demand.shape[0])
    case = DispatchCase(
        demand=demand,
        forecast=forecast,
        actual=actual,
        fleet=fleet,
        voll=args.voll,
        emission_factor=args.emission_factor,
    )
    da = solve_da(case)
    rt = solve_rt(case, da)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "schedule.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        names = [g.name for g in case.fleet]
        header = ["hour"] + [f"da_{n}" for n in names] + ["da_rnw", "da_ls"]
        header += [f"rt_delta_{n}" for n in names] + ["rt_spill", "rt_ls"]
        fh.write(",".join(header) + "\n")
        for t in range(case.horizon):
            row = [str(t)]
            row += [repr(float(da.p[v, t])) for v in range(len(names))]
            row += [repr(float(da.rnw[t])), repr(float(da.ls[t]))]
            row += [repr(float(rt.delta[v, t])) for v in range(len(names))]
            row += [repr(float(rt.spill[t])), repr(float(rt.ls_rt[t]))]
            fh.write(",".join(row) + "\n")
    gas_mask = np.array([g.gas_fired for g in case.fleet], dtype=bool)
    combined = da.p + rt.delta
    gas = float(combined[gas_mask].sum()) if gas_mask.any() else 0.0
    print(f"wrote {path}")
    print(f"da_objective_usd={da.objective!r} rt_objective_usd={rt.objective!r}")
    print(
        f"gas_mwh={gas!r} co2_kg={case.emission_factor * gas!r} "
        f"shed_mwh={float((da.ls + rt.ls_rt).sum())!r} "
        f"spill_mwh={float(rt.spill.sum())!r}"
    )
    try:
        print(f"nmae={nmae_metric(forecast, actual)!r}")
    except DispatchError:
        print("nmae=undefined (actual series has zero mean)")
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    fleet = load_fleet_csv(args.fleet) if args.fleet else default_fleet()
    demand = _read_single_column(args.demand)
    forecast = _read_single_column(args.forecast, demand.shape[0])
    actual = _read_single_column(args.actual, demand.shape[0])
    n_days = demand.shape[0] // 24
    if n_days == 0:
        return _fail_config("evaluate needs at least one complete 24-hour day")
    gas = shed = spill = cost = 0.0
    for d in range(n_days):
        sl = slice(24 * d, 24 * (d + 1))
        case = DispatchCase(
            demand=demand[sl],
            forecast=forecast[sl],
            actual=actual[sl],
            fleet=fleet,
            voll=args.voll,
            emission_factor=args.emission_factor,
        )
        da = solve_da(case)
        rt = solve_rt(case, da)
        gas_mask = np.array([g.gas_fired for g in fleet], dtype=bool)
        combined = da.p + rt.delta
        gas += float(combined[gas_mask].sum()) if gas_mask.any() else 0.0
        shed += float((da.ls + rt.ls_rt).sum())
        spill += float(rt.spill.sum())
        cost += float(da.objective + rt.objective)
    span = slice(0, 24 * n_days)
    print(f"gas_mwh={gas!r}")
    print(f"co2_kg={args.emission_factor * gas!r}")
    print(f"load_shedding_mwh={shed!r}")
    print(f"spillage_mwh={spill!r}")
    print(f"da_rt_cost_usd={cost!r}")
    try:
        print(f"nmae={nmae_metric(forecast[span], actual[span])!r}")
    except DispatchError:
        print("nmae=undefined (actual series has zero mean)")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    config.validate()
    result = run_pipeline(config)
    manifest = emit_report(result, config.output_dir)
    print(f"outputs in {config.output_dir}")
    for method in ("kmeans", "monthly", "mlstm"):
        r = result.reports[method]
        print(
            f"{method}: gas_mwh={r.gas_mwh:.2f} co2_kg={r.co2_kg:.1f} "
            f"shed_mwh={r.shed_mwh:.2f} spill_mwh={r.spill_mwh:.2f} "
            f"cost_usd={r.cost_usd:.2f} nmae={r.nmae:.4f}"
        )
    print(f"manifest digests cover {len(manifest['outputs'])} files")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvdispatch",
        description="PV forecasting and day-ahead / real-time dispatch toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic year of PV and demand")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--areas", type=int, default=3)
    p.add_argument("--hours", type=int, default=8760)
    p.add_argument("--start", default="2023-01-01T00")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit all three forecasters, write checkpoints")
    p.add_argument("--config", required=True, help="YAML config path")
    p.add_argument("--out", help="checkpoint directory (default: output_dir)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("forecast", help="forecast the test span from checkpoints")
    p.add_argument("--config", required=True)
    p.add_argument("--models", required=True, help="checkpoint directory")
    p.add_argument("--out", help="output directory (default: output_dir)")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("dispatch", help="solve one DA+RT case from CSV series")
    p.add_argument("--demand", required=True)
    p.add_argument("--forecast", required=True)
    p.add_argument("--actual", required=True)
    p.add_argument("--fleet", help="fleet CSV (default: built-in three units)")
    p.add_argument("--voll", type=float, default=1000.0)
    p.add_argument("--emission-factor", type=float, default=202.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dispatch)

    p = sub.add_parser(
        "evaluate", help="per-day DA+RT over a span, print the metric bundle"
    )
    p.add_argument("--demand", required=True)
    p.add_argument("--forecast", required=True)
    p.add_argument("--actual", required=True)
    p.add_argument("--fleet")
    p.add_argument("--voll", type=float, default=1000.0)
    p.add_argument("--emission-factor", type=float, default=202.0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline: data, train, dispatch, reports")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override output_dir")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.set_defaults(func=_cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, DispatchError) as exc:
        return _fail_config(str(exc))
    except StageError as exc:
        return _fail_stage(str(exc))
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _fail_stage(f"unexpected failure: {exc}")


if __name__ == "__main__":
    sys.exit(main())
