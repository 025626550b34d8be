"""Command line interface.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from adept import dp_mechanism as dp
from adept.autoencoder import AutoencoderModel, DecodeOptions, train_autoencoder, transform_many
from adept.errors import AdeptError, CheckpointError, ConfigError, DataError, PipelineError, UnknownLabelError
from adept.intent_classifier import IntentClassifierModel, evaluate_accuracy, train_ic
from adept.mia import run_attack, write_attack_csv
from adept.pipeline import ExperimentConfig, Experiment, load_config, run_sweep
from adept.report import report
from adept.text_data import Rejection, build_vocab, import_dataset, load_dataset, save_jsonl, split_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PIPELINE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _privacy_flags(p):
    g = p.add_argument_group("privacy")
    g.add_argument("--noise-family", choices=[dp.GAUSSIAN, dp.LAPLACE], default=dp.GAUSSIAN)
    g.add_argument("--variance", type=float, help="per-coordinate noise variance")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--delta", type=float, help="Gaussian only (default 1e-5)")
    g.add_argument("--clip-radius", type=float, help="defaults to the autoencoder's C")
    g.add_argument("--sensitivity-mode", choices=["corrected", "paper"], default="corrected")
    g.add_argument("--no-repeat-window", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="adept", description="Differentially private text rewriting with an LSTM autoencoder.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("import", parents=[common], help="convert a dataset to JSONL")
    p.add_argument("source")
    p.add_argument("--format", required=True, choices=["tsv", "jsonl", "csv", "seqin"])

    p = sub.add_parser("split", parents=[common], help="seeded 50/50 train/eval split")
    p.add_argument("data")

    p = sub.add_parser("train-ae", parents=[common], help="train the autoencoder")
    p.add_argument("data", help="training split (JSONL/TSV)")

    p = sub.add_parser("transform", parents=[common], help="privatise a dataset")
    p.add_argument("data")
    p.add_argument("--ae", required=True, help="autoencoder checkpoint")
    _privacy_flags(p)

    p = sub.add_parser("train-ic", parents=[common], help="train an intent classifier")
    p.add_argument("data")
    p.add_argument("--eval", help="report accuracy on this dataset")

    p = sub.add_parser("attack", parents=[common], help="membership inference against a target")
    p.add_argument("--target", required=True, help="target IC checkpoint")
    p.add_argument("--shadow-pool", required=True, help="data for the shadow model")
    p.add_argument("--members", required=True)
    p.add_argument("--nonmembers", required=True)

    p = sub.add_parser("run-point", parents=[common], help="full pipeline for one noise setting")
    p.add_argument("data", nargs="?", help="dataset (overrides the config)")
    _privacy_flags(p)

    p = sub.add_parser("sweep", parents=[common], help="run the configured privacy sweep")
    p.add_argument("data", nargs="?", help="dataset (overrides the config)")
    p.add_argument("--no-report", action="store_true")

    p = sub.add_parser("report", parents=[common], help="plot data and figures from metrics.csv")
    p.add_argument("metrics")
    p.add_argument("--no-figures", action="store_true")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "data", None):
        cfg.dataset = args.data
    if getattr(args, "no_repeat_window", None) is not None:
        cfg.decode = replace(cfg.decode, no_repeat_window=args.no_repeat_window)
    return cfg


def _spec(args, dim: int, clip_radius: float) -> dp.PrivacySpec:
    if (args.variance is None) == (args.epsilon is None):
        raise ConfigError("give exactly one of --variance or --epsilon")
    c = clip_radius if args.clip_radius is None else args.clip_radius
    return dp.PrivacySpec(
        dim=dim,
        clip_radius=c,
        noise_family=args.noise_family,
        epsilon=args.epsilon,
        delta=args.delta,
        variance=args.variance,
        sensitivity_mode=args.sensitivity_mode,
    )


def _out(args, default) -> Path:
    return Path(args.out or default)


def cmd_import(args):
    data = import_dataset(args.source, args.format)
    out = _out(args, Path(args.source).with_suffix(".jsonl").name)
    save_jsonl(data, out)
    print(f"wrote {len(data)} records to {out}")


def cmd_split(args):
    cfg = _config(args)
    split = split_dataset(load_dataset(args.data), cfg.split_seed if args.seed is None else args.seed)
    out = _out(args, ".")
    out.mkdir(parents=True, exist_ok=True)
    save_jsonl(split.train, out / "train.jsonl")
    save_jsonl(split.eval, out / "eval.jsonl")
    print(f"train={len(split.train)} eval={len(split.eval)} seed={split.seed}")


def cmd_train_ae(args):
    cfg = _config(args)
    train = load_dataset(args.data)
    ae_cfg = replace(cfg.autoencoder, seed=cfg.seed)
    model, tlog = train_autoencoder(train, build_vocab(train, cfg.vocab_min_count), ae_cfg)
    out = _out(args, "autoencoder.ckpt")
    model.save(out)
    print(f"final loss {tlog.epoch_loss[-1]:.6f}; wrote {out}")


def cmd_transform(args):
    cfg = _config(args)
    model = AutoencoderModel.load(args.ae)
    spec = _spec(args, model.latent_dim, model.clip_radius)
    data = load_dataset(args.data)
    outputs = transform_many(model, data, spec, cfg.decode, base_seed=cfg.seed)
    kept = [o for o in outputs if not isinstance(o, Rejection)]
    out = _out(args, "transformed.jsonl")
    save_jsonl(kept, out)
    eps, delta = dp.effective_epsilon(spec)
    print(f"{spec.label()} epsilon={eps:.6g} delta={delta:.3g} kept={len(kept)} rejected={len(outputs) - len(kept)}; wrote {out}")


def cmd_train_ic(args):
    cfg = _config(args)
    model, _ = train_ic(load_dataset(args.data), cfg.classifier, seed=cfg.seed)
    out = _out(args, "ic.ckpt")
    model.save(out)
    msg = f"wrote {out}"
    if args.eval:
        msg = f"accuracy={evaluate_accuracy(model, load_dataset(args.eval)):.6f}; " + msg
    print(msg)


def cmd_attack(args):
    cfg = _config(args)
    target = IntentClassifierModel.load(args.target)
    result = run_attack(
        target,
        load_dataset(args.shadow_pool),
        load_dataset(args.members),
        load_dataset(args.nonmembers),
        cfg.classifier,
        seed=cfg.seed + cfg.shadow_seed_offset,
    )
    out = _out(args, "attack.csv")
    write_attack_csv(out, result)
    print(f"auc={result.auc:.6f}; wrote {out}")


def cmd_run_point(args):
    cfg = _config(args)
    exp = Experiment(cfg)
    spec = _spec(args, cfg.autoencoder.hidden_dim, cfg.autoencoder.clip_radius)
    m = exp.run_point(spec, _out(args, cfg.output_dir))
    print(json.dumps(m.row(), sort_keys=True))


def cmd_sweep(args):
    cfg = _config(args)
    out = _out(args, cfg.output_dir)
    rows = run_sweep(cfg, out)
    failed = sum(m.status != "ok" for m in rows)
    print(f"{len(rows)} points, {failed} failed; wrote {out / 'metrics.csv'}")
    if not args.no_report and failed < len(rows):
        report(out / "metrics.csv", out / "report")
    if failed == len(rows):
        raise PipelineError("every sweep point failed")


def cmd_report(args):
    paths = report(args.metrics, args.out, figures=not args.no_figures)
    for p in paths:
        print(p)


COMMANDS = {
    "import": cmd_import,
    "split": cmd_split,
    "train-ae": cmd_train_ae,
    "transform": cmd_transform,
    "train-ic": cmd_train_ic,
    "attack": cmd_attack,
    "run-point": cmd_run_point,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"adept: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, UnknownLabelError, OSError) as exc:
        print(f"adept: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AdeptError as exc:
        print(f"adept: pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
