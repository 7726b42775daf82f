"""End-to-end CLI coverage; commands run in-process via main(argv)."""

import json
from pathlib import Path

import pytest

from botlab.cli import main
from botlab.core_data import (ROLE_BOT, load_dataset, read_manifest,
                              read_table, write_predictions)

TINY_TOML = """\
[simulate]
n_humans = 30
n_campaigns = 1
n_days = 2
steps_per_day = 12
scan_detector = "none"
seed = 3

[simulate.reporter_pool]
n_reporters = 8
report_rate = [0.8, 1.0]
tpr = [0.5, 0.9]
fpr = [0.0, 0.01]
exposure_only_fraction = 0.0
"""

DATASET_FILES = ("accounts.jsonl", "events.jsonl", "reports.csv")


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.toml"
    path.write_text(TINY_TOML)
    return path


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory, config_path):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--config", str(config_path),
                 "--out", str(out)]) == 0
    return out


def load_tiny(data_dir):
    d = Path(data_dir)
    return load_dataset(d / "accounts.jsonl", d / "events.jsonl",
                        d / "reports.csv")


def column(table, name):
    i = table.columns.index(name)
    return [row[i] for row in table.rows]


class TestSimulate:
    def test_writes_full_artifact_set(self, data_dir):
        for name in DATASET_FILES + ("rewards.csv", "reporters.csv",
                                     "manifest.json"):
            assert (data_dir / name).exists(), name
        manifest = read_manifest(data_dir)
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 3
        assert manifest["config"]["n_humans"] == 30
        for name, meta in manifest["tables"].items():
            table = read_table(data_dir / meta["path"])
            assert len(table.rows) == meta["rows"], name

    def test_reruns_are_byte_identical(self, tmp_path, config_path):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert main(["simulate", "--config", str(config_path),
                         "--out", str(out)]) == 0
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir())
        assert names == sorted(p.name for p in outs[1].iterdir())
        for name in names:
            assert (outs[0] / name).read_bytes() == \
                (outs[1] / name).read_bytes(), name

    def test_seed_flag_beats_config_file(self, tmp_path, config_path,
                                         data_dir):
        out = tmp_path / "seeded"
        assert main(["simulate", "--config", str(config_path),
                     "--out", str(out), "--seed", "4"]) == 0
        assert read_manifest(out)["config"]["seed"] == 4
        assert read_manifest(data_dir)["config"]["seed"] == 3

    def test_missing_config_file_fails_cleanly(self, tmp_path, capsys):
        missing = tmp_path / "nope.toml"
        rc = main(["simulate", "--out", str(tmp_path / "out"),
                   "--config", str(missing)])
        assert rc == 2
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert str(missing) in err

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0


class TestDetect:
    def test_trains_scores_and_reports(self, tmp_path, data_dir):
        out = tmp_path / "det"
        assert main(["detect", "--train", str(data_dir),
                     "--out", str(out), "--trees", "25",
                     "--depth", "6"]) == 0
        assert (out / "predictions.csv").exists()
        assert (out / "model.json").exists()
        manifest = read_manifest(out)
        assert manifest["config"]["kind"] == "bagged_trees"
        assert manifest["config"]["n_trees"] == 25
        table = read_table(out / "detect_metrics.csv")
        (row,) = table.rows
        assert row[table.columns.index("strategy")] == "bagged_trees"
        f1 = row[table.columns.index("f1")]
        assert 0.0 <= f1 <= 1.0


class TestEvaluate:
    def test_oracle_predictions_score_perfectly(self, tmp_path, data_dir):
        ds = load_tiny(data_dir)
        scores = {a: 1.0 if ds.labels[a] == ROLE_BOT else 0.0
                  for a in ds.universe}
        preds = tmp_path / "oracle.csv"
        write_predictions({"oracle": scores}, preds)
        out = tmp_path / "eval"
        assert main(["evaluate", "--data", str(data_dir),
                     "--predictions", str(preds),
                     "--out", str(out)]) == 0

        metrics = read_table(out / "prediction_metrics.csv")
        (row,) = metrics.rows
        by = dict(zip(metrics.columns, row))
        assert by["strategy"] == "oracle"
        assert (by["tp"], by["fp"], by["fn"], by["tn"]) == (20, 0, 0, 30)
        assert by["precision"] == by["recall"] == by["f1"] == 1.0

        temporal = read_table(out / "temporal_metrics.csv")
        assert len(temporal.rows) == 2 * ds.n_days
        assert set(column(temporal, "mode")) == \
            {"day_specific", "cumulative"}

        reporter_f1 = read_table(out / "reporter_f1.csv")
        assert len(reporter_f1.rows) == 8

        buckets = read_table(out / "report_buckets.csv")
        ks = column(buckets, "k")
        assert ks == sorted(ks) and 0 in ks


class TestAggregate:
    def test_defaults_recorded_in_manifest(self, tmp_path, data_dir):
        out = tmp_path / "agg"
        assert main(["aggregate", "--data", str(data_dir),
                     "--out", str(out)]) == 0
        manifest = read_manifest(out)
        assert manifest["config"] == {"k": 3, "tau": 0.533,
                                      "weights": "reporter_f1"}
        metrics = read_table(out / "aggregation_metrics.csv")
        assert column(metrics, "strategy") == ["count_based_k3",
                                               "quality_weighted"]
        flags = read_table(out / "aggregation_flags.csv")
        universe = set(load_tiny(data_dir).universe)
        assert set(column(flags, "account")) <= universe


class TestCv:
    def test_strategy_subset_csv_shape(self, tmp_path, data_dir):
        out = tmp_path / "cv"
        assert main(["cv", "--data", str(data_dir), "--out", str(out),
                     "--k", "5", "--strategies", "meta_vote,late_fusion",
                     "--trees", "25", "--depth", "6",
                     "--weight-samples", "50", "--seed", "1"]) == 0
        metrics = read_table(out / "cv_metrics.csv")
        assert sorted(column(metrics, "strategy")) == \
            ["late_fusion", "meta_vote"]
        for name in ("precision", "recall", "f1", "accuracy"):
            for v in column(metrics, name):
                assert 0.0 <= v <= 1.0

        folds = read_table(out / "cv_folds.csv")
        assert column(folds, "fold") == [0, 1, 2, 3, 4]
        for n_train, n_test in zip(column(folds, "n_train"),
                                   column(folds, "n_test")):
            assert n_train + n_test == 50

        settings = read_manifest(out)["config"]
        assert settings["k"] == 5
        assert settings["n_weight_samples"] == 50
        grid = settings["threshold_grid"]
        assert grid["size"] == 46
        assert grid["start"] == 0.5 and grid["stop"] == 0.95

    def test_unknown_strategy_fails_cleanly(self, tmp_path, data_dir,
                                            capsys):
        rc = main(["cv", "--data", str(data_dir),
                   "--out", str(tmp_path / "cv"),
                   "--strategies", "astrology"])
        assert rc == 2
        assert "unknown strategies" in capsys.readouterr().err


class TestRetrain:
    def test_day_one_is_neutral(self, tmp_path, data_dir):
        out = tmp_path / "ret"
        assert main(["retrain", "--data", str(data_dir),
                     "--out", str(out), "--strategy", "self_supervised",
                     "--base", str(data_dir), "--trees", "25",
                     "--depth", "6"]) == 0
        table = read_table(out / "retrain_days.csv")
        assert column(table, "day") == [1, 2]
        first = dict(zip(table.columns, table.rows[0]))
        assert first["n_new"] == 0
        assert first["n_pool"] == 0
        assert first["relative_improvement"] == 0.0
        assert first["baseline_f1"] == first["retrained_f1"]
        config = read_manifest(out)["config"]
        assert config["strategy"] == "self_supervised"
        assert config["confidence"] == 0.7
        assert config["n_base"] == 50


class TestHypothesis:
    def test_fdr_never_lowers_p(self, tmp_path, data_dir):
        out = tmp_path / "hyp"
        assert main(["hypothesis", "--data", str(data_dir),
                     "--out", str(out), "--resamples", "500"]) == 0
        table = read_table(out / "hypothesis_tests.csv")
        assert len(table.rows) >= 1
        for p_raw, p_fdr in zip(column(table, "p_raw"),
                                column(table, "p_fdr")):
            assert 0.0 <= p_raw <= 1.0
            assert p_fdr >= p_raw - 1e-12
            assert p_fdr <= 1.0
        config = read_manifest(out)["config"]
        assert config["n_resamples"] == 500
        assert config["tau"] == 0.533

    def test_reportless_dataset_is_rejected(self, tmp_path, config_path):
        # strip the reports file and expect the guard to trip
        sim = tmp_path / "sim"
        assert main(["simulate", "--config", str(config_path),
                     "--out", str(sim), "--seed", "9"]) == 0
        bare = tmp_path / "bare"
        bare.mkdir()
        for name in ("accounts.jsonl", "events.jsonl"):
            (bare / name).write_bytes((sim / name).read_bytes())
        with pytest.raises(SystemExit, match="needs reports"):
            main(["hypothesis", "--data", str(bare),
                  "--out", str(tmp_path / "hyp")])


def test_round_trip_manifest_is_valid_json(data_dir):
    payload = json.loads((data_dir / "manifest.json").read_text())
    assert payload == read_manifest(data_dir)
