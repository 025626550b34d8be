"""End-to-end privacy/utility experiment.

One sweep point runs: train the autoencoder on the training split ->
transform the training split under a privacy spec -> train the target
intent classifier on the transformed text -> measure accuracy on the
untouched evaluation split -> attack the target with a shadow model and
report the AUC.  The evaluation split is only ever used for accuracy and as
the non-member side of the attack.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from adept import dp_mechanism as dp
from adept.autoencoder import AutoencoderConfig, AutoencoderModel, DecodeOptions, train_autoencoder, transform_many
from adept.errors import AdeptError, ConfigError, PipelineError
from adept.intent_classifier import ICConfig, evaluate_accuracy, train_ic
from adept.mia import attack_target, features_batch, train_attack, train_shadow, write_attack_csv
from adept.text_data import DatasetSplit, Rejection, build_vocab, load_dataset, save_jsonl, split_dataset

log = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "point",
    "noise_family",
    "variance",
    "epsilon",
    "delta",
    "sensitivity_mode",
    "clip_radius",
    "ic_accuracy",
    "mia_auc",
    "rejection_rate",
    "label_flip_rate",
    "n_transformed",
    "seed",
    "split_seed",
    "status",
    "error",
    "timestamp",
]

DEFAULT_VARIANCES = (0.25, 0.5, 0.6, 0.75, 0.85, 1.0)


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    dataset_format: str | None = None
    split_seed: int = 0
    seed: int = 0
    output_dir: str = "runs/experiment"
    vocab_min_count: int = 1
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    decode: DecodeOptions = field(default_factory=DecodeOptions)
    classifier: ICConfig = field(default_factory=ICConfig)
    sweep: list = field(default_factory=list)
    shadow_seed_offset: int = 1

    def privacy_specs(self) -> list:
        """Validated :class:`PrivacySpec` objects for the sweep."""
        if not self.sweep:
            raise ConfigError("the privacy sweep is empty")
        return [self._spec(entry) for entry in self.sweep]

    def _spec(self, entry: dict) -> dp.PrivacySpec:
        entry = dict(entry)
        c = entry.pop("clip_radius", self.autoencoder.clip_radius)
        if c != self.autoencoder.clip_radius:
            raise ConfigError(f"sweep clip radius {c} differs from the autoencoder's {self.autoencoder.clip_radius}")
        entry.pop("dim", None)
        try:
            return dp.PrivacySpec(dim=self.autoencoder.hidden_dim, clip_radius=c, **entry)
        except TypeError as exc:
            raise ConfigError(f"bad sweep entry {entry}: {exc}") from exc


def _section(cls, raw):
    raw = raw or {}
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from the nested YAML layout documented in the README."""
    raw = dict(raw or {})
    ds = raw.pop("dataset", None) or {}
    if isinstance(ds, str):
        ds = {"path": ds}
    privacy = raw.pop("privacy", None) or {}
    cfg = ExperimentConfig(
        dataset=ds.get("path"),
        dataset_format=ds.get("format"),
        autoencoder=_section(AutoencoderConfig, raw.pop("autoencoder", None)),
        decode=_section(DecodeOptions, raw.pop("decode", None)),
        classifier=_section(ICConfig, raw.pop("classifier", None)),
        shadow_seed_offset=(raw.pop("mia", None) or {}).get("shadow_seed_offset", 1),
    )
    for key in ("split_seed", "seed", "output_dir", "vocab_min_count"):
        if key in raw:
            setattr(cfg, key, raw.pop(key))
    if raw:
        raise ConfigError(f"unknown config keys: {sorted(raw)}")
    cfg.sweep = _expand_sweep(privacy)
    return cfg


def _expand_sweep(privacy: dict) -> list:
    defaults = dict(privacy.get("defaults") or {})
    entries = [dict(e) for e in privacy.get("sweep") or []]
    grid = privacy.get("grid")
    if grid:
        for fam in grid.get("families", [dp.GAUSSIAN, dp.LAPLACE]):
            for var in grid.get("variances", DEFAULT_VARIANCES):
                entries.append({"noise_family": fam, "variance": float(var)})
            for eps in grid.get("epsilons", []):
                entries.append({"noise_family": fam, "epsilon": float(eps)})
    return [{**defaults, **e} for e in entries]


def load_config(path) -> ExperimentConfig:
    with Path(path).open(encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    cfg = config_from_dict(raw)
    if cfg.dataset and not Path(cfg.dataset).is_absolute():
        cfg.dataset = str((Path(path).parent / cfg.dataset).resolve())
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "dataset": {"path": cfg.dataset, "format": cfg.dataset_format},
        "split_seed": cfg.split_seed,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "vocab_min_count": cfg.vocab_min_count,
        "autoencoder": asdict(cfg.autoencoder),
        "decode": asdict(cfg.decode),
        "classifier": asdict(cfg.classifier),
        "mia": {"shadow_seed_offset": cfg.shadow_seed_offset},
        "privacy": {"sweep": list(cfg.sweep)},
    }


@dataclass
class ExperimentMetrics:
    point: str
    noise_family: str
    variance: float
    epsilon: float
    delta: float
    sensitivity_mode: str
    clip_radius: float
    ic_accuracy: float = float("nan")
    mia_auc: float = float("nan")
    rejection_rate: float = float("nan")
    label_flip_rate: float = float("nan")
    n_transformed: int = 0
    seed: int = 0
    split_seed: int = 0
    status: str = "ok"
    error: str = ""
    timestamp: str = ""

    def row(self) -> dict:
        out = {}
        for k in METRIC_COLUMNS:
            v = getattr(self, k)
            out[k] = _fmt(v) if isinstance(v, float) else v
        return out


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else f"{x:.10g}"


@dataclass
class TransformReport:
    kept: list
    rejections: list
    label_flips: int
    total: int

    @property
    def rejection_rate(self) -> float:
        return len(self.rejections) / self.total if self.total else 0.0

    @property
    def label_flip_rate(self) -> float:
        return self.label_flips / self.total if self.total else 0.0


def transform_dataset(model: AutoencoderModel, train, spec: dp.PrivacySpec, opts: DecodeOptions | None = None, base_seed: int = 0) -> TransformReport:
    """Privatise every training utterance; parse failures are dropped and counted.

    Kept records carry the regenerated label, not the original one.
    """
    train = list(train)
    outputs = transform_many(model, train, spec, opts, base_seed)
    kept, rejected, flips = [], [], 0
    for src, out in zip(train, outputs):
        if isinstance(out, Rejection):
            rejected.append(out)
            continue
        kept.append(out)
        flips += out.label != src.label
    return TransformReport(kept, rejected, flips, len(train))


class Experiment:
    """Holds the split and a trained autoencoder shared by all sweep points."""

    def __init__(self, cfg: ExperimentConfig, data=None):
        self.cfg = cfg
        if data is None:
            if not cfg.dataset:
                raise ConfigError("no dataset path configured")
            data = load_dataset(cfg.dataset, cfg.dataset_format)
        self.split: DatasetSplit = split_dataset(data, cfg.split_seed)
        self._ae: AutoencoderModel | None = None
        self.ae_log = None

    @property
    def autoencoder(self) -> AutoencoderModel:
        if self._ae is None:
            vocab = build_vocab(self.split.train, self.cfg.vocab_min_count)
            ae_cfg = AutoencoderConfig(**{**asdict(self.cfg.autoencoder), "seed": self.cfg.seed})
            self._ae, self.ae_log = train_autoencoder(self.split.train, vocab, ae_cfg)
        return self._ae

    def run_point(self, spec: dp.PrivacySpec, out_dir=None, point: str = "") -> ExperimentMetrics:
        cfg = self.cfg
        eps, delta = dp.effective_epsilon(spec)
        metrics = ExperimentMetrics(
            point=point or spec.label(),
            noise_family=spec.noise_family,
            variance=spec.noise_variance(),
            epsilon=eps,
            delta=delta,
            sensitivity_mode=spec.sensitivity_mode,
            clip_radius=spec.clip_radius,
            seed=cfg.seed,
            split_seed=cfg.split_seed,
        )
        rep = transform_dataset(self.autoencoder, self.split.train, spec, cfg.decode, base_seed=cfg.seed)
        metrics.rejection_rate = rep.rejection_rate
        metrics.label_flip_rate = rep.label_flip_rate
        metrics.n_transformed = len(rep.kept)
        if not rep.kept:
            raise PipelineError("every transformed record was rejected")
        if len({u.label for u in rep.kept}) < 2:
            raise PipelineError("transformed data carries fewer than two intents")
        target, _ = train_ic(rep.kept, cfg.classifier, seed=cfg.seed)
        metrics.ic_accuracy = evaluate_accuracy(target, self.split.eval)

        shadow_seed = cfg.seed + cfg.shadow_seed_offset
        try:
            shadow, s_in, s_out = train_shadow(rep.kept, cfg.classifier, seed=shadow_seed)
        except AdeptError as exc:
            raise PipelineError(f"shadow training failed: {exc}") from exc
        attack = train_attack(features_batch(shadow, s_in), features_batch(shadow, s_out), seed=shadow_seed)
        result = attack_target(target, attack, self.split.train, self.split.eval)
        metrics.mia_auc = result.auc

        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            save_jsonl(rep.kept, out / "transformed.jsonl")
            with (out / "rejections.jsonl").open("w", encoding="utf-8") as fh:
                for r in rep.rejections:
                    fh.write(json.dumps({"reason": r.reason, "tokens": list(r.tokens)}) + "\n")
            target.save(out / "target_ic.ckpt")
            write_attack_csv(out / "attack.csv", result)
            (out / "metrics.json").write_text(json.dumps(metrics.row(), indent=2, sort_keys=True) + "\n")
        return metrics


def run_point(cfg: ExperimentConfig, spec: dp.PrivacySpec, out_dir=None, data=None) -> ExperimentMetrics:
    return Experiment(cfg, data).run_point(spec, out_dir)


def run_sweep(cfg: ExperimentConfig, out_dir=None, data=None, timestamps: bool = True) -> list:
    """Run every sweep point; a failing point is recorded and the sweep continues."""
    specs = cfg.privacy_specs()
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp = Experiment(cfg, data)
    exp.autoencoder.save(out / "autoencoder.ckpt")
    (out / "config.yaml").write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))
    rows = []
    for i, spec in enumerate(specs):
        name = f"{i:02d}-{spec.label()}"
        t0 = time.time()
        try:
            m = exp.run_point(spec, out / "points" / name, point=name)
        except AdeptError as exc:
            log.warning("point %s failed: %s", name, exc)
            eps, delta = dp.effective_epsilon(spec)
            m = ExperimentMetrics(
                point=name,
                noise_family=spec.noise_family,
                variance=spec.noise_variance(),
                epsilon=eps,
                delta=delta,
                sensitivity_mode=spec.sensitivity_mode,
                clip_radius=spec.clip_radius,
                seed=cfg.seed,
                split_seed=cfg.split_seed,
                status="failed",
                error=str(exc),
            )
        if timestamps:
            m.timestamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
        log.info("point %s: acc=%s auc=%s (%.1fs)", name, _fmt(m.ic_accuracy), _fmt(m.mia_auc), time.time() - t0)
        rows.append(m)
    write_metrics_csv(out / "metrics.csv", rows)
    return rows


def write_metrics_csv(path, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        for m in rows:
            w.writerow(m.row())


def read_metrics_csv(path) -> list:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
