import csv
import io
import json

import numpy as np
import pytest
import yaml

from adept import dp_mechanism as dp
from adept.errors import ConfigError, PipelineError
from adept.intent_classifier import evaluate_accuracy, train_ic
from adept.mia import read_attack_csv
from adept.pipeline import (
    METRIC_COLUMNS,
    DEFAULT_VARIANCES,
    Experiment,
    ExperimentMetrics,
    config_from_dict,
    config_to_dict,
    load_config,
    read_metrics_csv,
    run_sweep,
    transform_dataset,
    write_metrics_csv,
)
from adept.text_data import load_dataset

from conftest import toy_experiment_config

FULL_GRID = {"grid": {"families": ["gaussian", "laplace"], "variances": list(DEFAULT_VARIANCES)}}


def spec(var, fam="gaussian", dim=64):
    return dp.PrivacySpec(dim=dim, noise_family=fam, variance=var)


class TestConfig:
    def test_grid_expands_to_twelve_specs(self):
        cfg = config_from_dict({"autoencoder": {"hidden_dim": 8}, "privacy": FULL_GRID})
        specs = cfg.privacy_specs()
        assert len(specs) == 12
        assert [s.variance for s in specs[:6]] == list(DEFAULT_VARIANCES)
        assert {s.noise_family for s in specs[6:]} == {"laplace"}
        assert all(s.dim == 8 for s in specs)

    def test_defaults_merge_into_entries(self):
        raw = {"privacy": {"defaults": {"sensitivity_mode": "paper"}, "sweep": [{"noise_family": "laplace", "epsilon": 1.0}]}}
        (s,) = config_from_dict(raw).privacy_specs()
        assert s.sensitivity_mode == "paper"
        assert dp.laplace_scale(s) == 2.0

    def test_empty_sweep_rejected(self):
        with pytest.raises(ConfigError, match="empty"):
            config_from_dict({}).privacy_specs()

    def test_clip_radius_mismatch_rejected(self):
        raw = {"autoencoder": {"clip_radius": 1.0}, "privacy": {"sweep": [{"variance": 1.0, "clip_radius": 2.0}]}}
        with pytest.raises(ConfigError, match="clip radius"):
            config_from_dict(raw).privacy_specs()

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"autoencoder": {"hiden_dim": 3}})
        with pytest.raises(ConfigError):
            config_from_dict({"lerning_rate": 3})

    def test_bad_sweep_entry(self):
        with pytest.raises(ConfigError):
            config_from_dict({"privacy": {"sweep": [{"variance": 1.0, "sigma": 2}]}}).privacy_specs()

    def test_yaml_round_trip(self, tmp_path):
        cfg = config_from_dict({"seed": 7, "privacy": FULL_GRID, "dataset": "data.jsonl"})
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(config_to_dict(cfg)))
        back = load_config(path)
        assert back.seed == 7
        assert back.sweep == cfg.sweep
        assert back.autoencoder == cfg.autoencoder
        assert back.dataset == str(tmp_path / "data.jsonl")

    def test_shipped_config_loads(self):
        from pathlib import Path

        cfg = load_config(Path(__file__).parents[1] / "configs" / "toy.yaml")
        assert len(cfg.privacy_specs()) == 12
        assert len(load_dataset(cfg.dataset)) == 200


class TestTransformDataset:
    def test_near_zero_noise_is_identity(self, tiny, tiny_ae):
        model, _ = tiny_ae
        rep = transform_dataset(model, tiny, spec(1e-12))
        assert rep.rejection_rate == 0.0
        assert rep.label_flip_rate == 0.0
        assert rep.kept == list(tiny)

    @pytest.mark.parametrize("fam", ["gaussian", "laplace"])
    def test_huge_noise_rejects_and_flips_more(self, tiny, tiny_ae, fam):
        model, _ = tiny_ae
        quiet = transform_dataset(model, tiny, spec(1e-12, fam))
        loud = transform_dataset(model, tiny, spec(100.0, fam))
        assert loud.rejection_rate > quiet.rejection_rate
        assert loud.label_flip_rate > quiet.label_flip_rate

    def test_labels_come_from_vocabulary(self, tiny, tiny_ae):
        model, _ = tiny_ae
        for var in (0.25, 1.0, 100.0):
            rep = transform_dataset(model, tiny, spec(var), base_seed=3)
            assert {u.label for u in rep.kept} <= set(model.vocab.labels)
            assert all(u.tokens for u in rep.kept)
            assert len(rep.kept) + len(rep.rejections) == rep.total

    def test_regenerated_label_is_used(self, tiny, tiny_ae):
        model, _ = tiny_ae
        rep = transform_dataset(model, tiny, spec(1.0, "laplace"))
        flips = sum(a.label != b.label for a, b in zip(tiny, rep.kept))
        assert rep.label_flips == flips > 0

    def test_seeded(self, tiny, tiny_ae):
        model, _ = tiny_ae
        a = transform_dataset(model, tiny, spec(1.0), base_seed=5)
        b = transform_dataset(model, tiny, spec(1.0), base_seed=5)
        c = transform_dataset(model, tiny, spec(1.0), base_seed=6)
        assert a.kept == b.kept
        assert a.kept != c.kept

    def test_empty(self, tiny_ae):
        rep = transform_dataset(tiny_ae[0], [], spec(1.0))
        assert rep.total == 0 and rep.rejection_rate == 0.0


@pytest.fixture(scope="module")
def points(toy_experiment, tmp_path_factory):
    out = tmp_path_factory.mktemp("point")
    zero = toy_experiment.run_point(spec(1e-8), out)
    loud = toy_experiment.run_point(spec(100.0))
    return zero, loud, out


class TestRunPoint:
    def test_noise_free_matches_baseline_and_leaks(self, toy_experiment, points):
        zero, _, _ = points
        base, _ = train_ic(toy_experiment.split.train, toy_experiment.cfg.classifier, seed=0)
        baseline = evaluate_accuracy(base, toy_experiment.split.eval)
        assert zero.rejection_rate == 0.0
        assert abs(zero.ic_accuracy - baseline) <= 0.1
        assert zero.mia_auc > 0.6

    def test_max_noise_closer_to_chance(self, points):
        zero, loud, _ = points
        assert abs(loud.mia_auc - 0.5) < abs(zero.mia_auc - 0.5)
        assert loud.ic_accuracy <= zero.ic_accuracy

    def test_metrics_in_range_and_auditable(self, points):
        for m in points[:2]:
            for v in (m.ic_accuracy, m.mia_auc, m.rejection_rate, m.label_flip_rate):
                assert 0.0 <= v <= 1.0
            assert m.epsilon == pytest.approx(dp.effective_epsilon(spec(m.variance))[0])
            assert m.delta == 1e-5
            assert list(m.row()) == METRIC_COLUMNS

    def test_artifacts(self, points):
        zero, _, out = points
        names = {p.name for p in out.iterdir()}
        assert names == {"transformed.jsonl", "rejections.jsonl", "target_ic.ckpt", "attack.csv", "metrics.json"}
        assert len(load_dataset(out / "transformed.jsonl")) == zero.n_transformed
        rows, auc = read_attack_csv(out / "attack.csv")
        assert auc == pytest.approx(zero.mia_auc, abs=1e-11)
        assert len(rows) == 200
        assert json.loads((out / "metrics.json").read_text())["mia_auc"] == zero.row()["mia_auc"]

    def test_eval_split_never_transformed(self, toy_experiment, points, tmp_path):
        _, _, out = points
        eval_texts = {u.text for u in toy_experiment.split.eval} - {u.text for u in toy_experiment.split.train}
        transformed = {u.text for u in load_dataset(out / "transformed.jsonl")}
        # near-zero noise reproduces training text; unseen eval-only sentences cannot appear
        assert transformed <= {u.text for u in toy_experiment.split.train}
        assert not transformed & eval_texts

    def test_all_rejected_raises(self, toy_experiment, monkeypatch):
        import adept.pipeline as pl

        def reject_all(model, train, spec, opts=None, base_seed=0):
            return pl.TransformReport([], [None] * len(train), 0, len(train))

        monkeypatch.setattr(pl, "transform_dataset", reject_all)
        with pytest.raises(PipelineError, match="rejected"):
            toy_experiment.run_point(spec(1.0))

    def test_missing_dataset(self):
        with pytest.raises(ConfigError):
            Experiment(toy_experiment_config())


def _strip_timestamp(text):
    rows = list(csv.reader(io.StringIO(text)))
    col = rows[0].index("timestamp")
    return [r[:col] + r[col + 1 :] for r in rows]


@pytest.fixture(scope="module")
def sweep(toy200, tmp_path_factory):
    cfg = toy_experiment_config(0, fast=True)
    cfg.sweep = config_from_dict({"privacy": FULL_GRID}).sweep
    outs = []
    for i in range(2):
        out = tmp_path_factory.mktemp(f"sweep{i}")
        rows = run_sweep(cfg, out, data=toy200)
        outs.append((out, rows))
    return cfg, outs


class TestRunSweep:
    def test_twelve_rows(self, sweep):
        _, ((out, rows), _) = sweep
        assert len(rows) == 12
        csv_rows = read_metrics_csv(out / "metrics.csv")
        assert [r["noise_family"] for r in csv_rows] == ["gaussian"] * 6 + ["laplace"] * 6
        assert [float(r["variance"]) for r in csv_rows[:6]] == pytest.approx(list(DEFAULT_VARIANCES))
        assert all(r["status"] == "ok" and r["timestamp"] for r in csv_rows)
        assert all(float(r["epsilon"]) > 0 for r in csv_rows)

    def test_byte_identical_without_timestamp(self, sweep):
        _, ((a, _), (b, _)) = sweep
        assert _strip_timestamp((a / "metrics.csv").read_text()) == _strip_timestamp((b / "metrics.csv").read_text())
        assert (a / "autoencoder.ckpt").read_bytes() == (b / "autoencoder.ckpt").read_bytes()

    def test_no_timestamps_gives_identical_bytes(self, sweep, toy200, tmp_path):
        cfg, ((a, _), _) = sweep
        cfg2 = toy_experiment_config(0, fast=True, sweep=cfg.sweep[:2])
        run_sweep(cfg2, tmp_path / "x", data=toy200, timestamps=False)
        run_sweep(cfg2, tmp_path / "y", data=toy200, timestamps=False)
        assert (tmp_path / "x" / "metrics.csv").read_bytes() == (tmp_path / "y" / "metrics.csv").read_bytes()

    def test_saved_config_reloads(self, sweep):
        cfg, ((out, _), _) = sweep
        back = load_config(out / "config.yaml")
        assert back.sweep == cfg.sweep and back.classifier == cfg.classifier

    def test_failed_point_is_flagged_and_sweep_continues(self, toy200, tmp_path, monkeypatch):
        cfg = toy_experiment_config(0, fast=True, sweep=[{"variance": 0.5}, {"variance": 1.0}])
        real = Experiment.run_point

        def flaky(self, s, out_dir=None, point=""):
            if s.variance == 0.5:
                raise PipelineError("boom")
            return real(self, s, out_dir, point)

        monkeypatch.setattr(Experiment, "run_point", flaky)
        rows = run_sweep(cfg, tmp_path, data=toy200)
        assert [m.status for m in rows] == ["failed", "ok"]
        assert rows[0].error == "boom" and np.isnan(rows[0].ic_accuracy)
        assert read_metrics_csv(tmp_path / "metrics.csv")[0]["ic_accuracy"] == "nan"


def test_metrics_csv_schema(tmp_path):
    m = ExperimentMetrics("p", "laplace", 2.0, 1.0, 0.0, "corrected", 1.0, ic_accuracy=0.5, mia_auc=1 / 3)
    write_metrics_csv(tmp_path / "m.csv", [m])
    (row,) = read_metrics_csv(tmp_path / "m.csv")
    assert list(row) == METRIC_COLUMNS
    assert row["mia_auc"] == "0.3333333333"
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(METRIC_COLUMNS)
