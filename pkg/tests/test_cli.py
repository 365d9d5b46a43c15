import numpy as np
import pytest

from pvdispatch.cli import main
from pvdispatch.data import load_csv


CONFIG_YAML = """\
seed: 5
output_dir: {out}
data:
  synth: {{enabled: true, hours: 9096, start: '2022-10-01T00', areas: 3}}
window: {{lookback: 24, horizon: 12, target: 0}}
split: {{train_fraction: 0.963}}
network: {{layers: [8, 6], dropout: 0.0}}
training: {{epochs: 1, batch_size: 256}}
baselines: {{kmeans_clusters: 4}}
dispatch: {{voll: 1000.0, emission_factor: 202.0}}
"""


def write_config(tmp_path, out_dir):
    p = tmp_path / "config.yaml"
    p.write_text(CONFIG_YAML.format(out=out_dir))
    return p


class TestSynthCommand:
    def test_writes_csvs(self, tmp_path, capsys):
        rc = main(
            ["synth", "--out", str(tmp_path / "d"), "--seed", "3", "--hours", "48"]
        )
        assert rc == 0
        gen = load_csv(tmp_path / "d" / "generation.csv")
        demand = load_csv(tmp_path / "d" / "demand.csv")
        assert gen.n == 48 and demand.n == 48

    def test_same_seed_identical_files(self, tmp_path):
        main(["synth", "--out", str(tmp_path / "a"), "--seed", "9", "--hours", "72"])
        main(["synth", "--out", str(tmp_path / "b"), "--seed", "9", "--hours", "72"])
        a = (tmp_path / "a" / "generation.csv").read_bytes()
        b = (tmp_path / "b" / "generation.csv").read_bytes()
        assert a == b


class TestRunCommand:
    def test_end_to_end(self, tmp_path, capsys):
        out = tmp_path / "run_out"
        cfg = write_config(tmp_path, out)
        rc = main(["run", "--config", str(cfg)])
        assert rc == 0
        assert (out / "metrics.csv").exists()
        assert (out / "manifest.json").exists()
        captured = capsys.readouterr()
        assert "mlstm" in captured.out

    def test_config_error_exit_code(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text("split: {train_fraction: 1.5}\n")
        rc = main(["run", "--config", str(p)])
        assert rc == 2

    def test_missing_config_exit_code(self, tmp_path):
        rc = main(["run", "--config", str(tmp_path / "absent.yaml")])
        assert rc == 2


class TestDispatchCommand:
    def _series_csv(self, path, name, values, start="2023-01-01T00"):
        ts = np.datetime64(start, "h") + np.arange(len(values))
        with path.open("w") as fh:
            fh.write(f"timestamp,{name}\n")
            for t, v in zip(ts, values):
                fh.write(f"{t},{v}\n")

    def test_single_case(self, tmp_path, capsys):
        self._series_csv(tmp_path / "demand.csv", "demand", [80.0] * 24)
        self._series_csv(tmp_path / "forecast.csv", "pv", [0.0] * 24)
        self._series_csv(tmp_path / "actual.csv", "pv", [0.0] * 24)
        rc = main(
            [
                "dispatch",
                "--demand", str(tmp_path / "demand.csv"),
                "--forecast", str(tmp_path / "forecast.csv"),
                "--actual", str(tmp_path / "actual.csv"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert rc == 0
        schedule = (tmp_path / "out" / "schedule.csv").read_text().strip().split("\n")
        assert len(schedule) == 25
        out = capsys.readouterr().out
        assert "da_objective_usd=42000.0" in out  # 24h x $1750

    def test_evaluate_prints_metric_bundle(self, tmp_path, capsys):
        self._series_csv(tmp_path / "demand.csv", "demand", [80.0] * 48)
        self._series_csv(tmp_path / "forecast.csv", "pv", [10.0] * 48)
        self._series_csv(tmp_path / "actual.csv", "pv", [5.0] * 48)
        rc = main(
            [
                "evaluate",
                "--demand", str(tmp_path / "demand.csv"),
                "--forecast", str(tmp_path / "forecast.csv"),
                "--actual", str(tmp_path / "actual.csv"),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        for key in ("gas_mwh=", "co2_kg=", "load_shedding_mwh=",
                    "spillage_mwh=", "da_rt_cost_usd=", "nmae="):
            assert key in out

    def test_mismatched_lengths_config_error(self, tmp_path):
        self._series_csv(tmp_path / "demand.csv", "demand", [80.0] * 24)
        self._series_csv(tmp_path / "forecast.csv", "pv", [0.0] * 12)
        self._series_csv(tmp_path / "actual.csv", "pv", [0.0] * 24)
        rc = main(
            [
                "dispatch",
                "--demand", str(tmp_path / "demand.csv"),
                "--forecast", str(tmp_path / "forecast.csv"),
                "--actual", str(tmp_path / "actual.csv"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert rc == 2


class TestTrainForecastCommands:
    def test_train_then_forecast(self, tmp_path):
        out = tmp_path / "art"
        cfg = write_config(tmp_path, out)
        rc = main(["train", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        for name in ("mlstm.npz", "kmeans.npz", "monthly.npz", "dark_mask.csv"):
            assert (out / name).exists()
        rc = main(
            ["forecast", "--config", str(cfg), "--models", str(out),
             "--out", str(out)]
        )
        assert rc == 0
        lines = (out / "forecasts.csv").read_text().strip().split("\n")
        assert lines[0] == "timestamp,actual,kmeans,monthly,mlstm"
        assert len(lines) > 300
