"""
Command-line entry point.

    python -m wav2vec2_speaker generate-corpus --speakers 20 --utts 20 --out data/synth
    python -m wav2vec2_speaker lr-range-test --config run.txt
    python -m wav2vec2_speaker train --config run.txt
    python -m wav2vec2_speaker evaluate --checkpoint runs/aam/best --trials data/synth/test_trials.txt
    python -m wav2vec2_speaker ablate no_layerdrop --config run.txt

Exit status: 0 success, 1 error, 2 usage, 3 range test found no descent,
4 training diverged.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .analytics.evaluation import EvaluationResult, evaluate_repeated, write_report, write_scores
from .config import RESOLVED_NAME, RunConfig, load_run_config, write_resolved_config
from .data.corpus import MANIFEST_NAME, SpeakerCorpus, generate_synthetic_corpus, split_corpus
from .data.trials import TrialList, parse_trials, sample_trials, write_trials
from .exceptions import ConfigError, SpeakerRecognitionError
from .model.heads import HEAD_PREFIX, Variant
from .model.speaker_model import SpeakerModel
from .model.weights import import_weights
from .training.ablations import run_ablation
from .training.batches import make_batch
from .training.checkpoint import Checkpoint
from .training.range_test import lr_range_test
from .training.trainer import TrainResult, Trainer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_DESCENT = 3
EXIT_DIVERGED = 4


class CommandError(SpeakerRecognitionError):
    """A command cannot run with the given arguments or files."""


# Helpers


def prepare_output(directory: Path, force: bool) -> Path:
    """Create ``directory``; refuse a non-empty one unless ``force``."""
    if directory.exists() and any(directory.iterdir()) and not force:
        raise CommandError(f"output directory {directory} is not empty (use --force to overwrite)")
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def load_corpus(path: str) -> SpeakerCorpus:
    """A corpus directory (with or without a manifest) or a manifest file."""
    location = Path(path)
    if location.is_dir():
        manifest = location / MANIFEST_NAME
        return SpeakerCorpus.from_manifest(manifest) if manifest.exists() else SpeakerCorpus.from_directory(location)
    return SpeakerCorpus.from_manifest(location)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Load ``--config`` and apply command-line overrides."""
    cfg = load_run_config(args.config)
    overrides = {}
    if getattr(args, "corpus", None):
        overrides["corpus"] = args.corpus
    if getattr(args, "trials", None):
        overrides["validation_trials"] = args.trials
    if getattr(args, "out", None):
        overrides["out"] = args.out
    cfg = replace(cfg, **overrides)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    if cfg.corpus is None:
        raise ConfigError(["corpus is not set (config key 'corpus' or --corpus)"])
    return cfg


def training_corpus(cfg: RunConfig) -> SpeakerCorpus:
    if cfg.train_manifest:
        return SpeakerCorpus.from_manifest(cfg.train_manifest)
    return load_corpus(cfg.corpus)


def _num_classes(checkpoint: Checkpoint) -> int:
    weight = checkpoint.parameters.get(f"{HEAD_PREFIX}weight")
    return int(weight.shape[0]) if weight is not None else 0


def _model_for(cfg: RunConfig, num_classes: int) -> SpeakerModel:
    t = cfg.train
    return SpeakerModel(t.encoder, t.variant, t.pooling, num_classes,
                        aam_scale=t.aam_scale, aam_margin=t.aam_margin, seed=t.seed)


def _print_eers(results: List[EvaluationResult]):
    for r, result in enumerate(results, start=1):
        print(f"EER {r}: {result.eer.eer * 100:.2f}% (threshold {result.eer.threshold:.4f})")


# Commands


def cmd_generate_corpus(args: argparse.Namespace) -> int:
    """Write a synthetic corpus, its splits and balanced trial lists."""
    out = prepare_output(Path(args.out), args.force)
    corpus = generate_synthetic_corpus(out, args.speakers, args.utts, args.duration, args.seed, args.workers)
    splits = split_corpus(corpus)
    splits.train.write_manifest(out / "train.tsv")
    splits.validation.write_manifest(out / "validation.tsv")
    splits.test.write_manifest(out / "test.tsv")
    validation = sample_trials(splits.validation, args.trials_per_class,
                               np.random.default_rng(np.random.SeedSequence([args.seed, 3])))
    test = sample_trials(splits.test, args.trials_per_class,
                         np.random.default_rng(np.random.SeedSequence([args.seed, 4])))
    write_trials(validation, out / "validation_trials.txt")
    write_trials(test, out / "test_trials.txt")
    print(f"Wrote {len(corpus)} utterances of {corpus.num_speakers} speakers to {out}")
    print(f"  validation trials: {len(validation)}, test trials: {len(test)}"
          + ("" if splits.held_out else " (no holdout: corpus too small)"))
    return EXIT_OK


def _train(cfg: RunConfig, out: Path, verbose: bool) -> TrainResult:
    write_resolved_config(cfg, out)
    validation_trials: Optional[TrialList] = parse_trials(cfg.validation_trials) if cfg.validation_trials else None
    trainer = Trainer(cfg.train, training_corpus(cfg), validation_trials, load_corpus(cfg.corpus))
    result = trainer.run(verbose=verbose)
    result.best.save(out / "best")
    result.final.save(out / "final")
    result.metrics.to_csv(out / "metrics.csv")
    trainer.print_summary()
    return result


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = prepare_output(Path(cfg.out), args.force)
    result = _train(cfg, out, args.verbose)
    if result.diverged:
        print(f"Training diverged: {result.divergence}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_lr_range_test(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = prepare_output(Path(cfg.out), args.force)
    write_resolved_config(cfg, out)
    corpus = training_corpus(cfg)

    def model_factory() -> SpeakerModel:
        model = _model_for(cfg, corpus.num_speakers)
        if cfg.train.pretrained_weights:
            import_weights(model.store, cfg.train.pretrained_weights, required=model.encoder.parameter_names())
        return model

    result = lr_range_test(model_factory, lambda rng: make_batch(corpus, cfg.train, rng),
                           cfg.range_test, cfg.train.adam, seed=cfg.seed, verbose=args.verbose)
    result.curve.to_csv(out / "range_test.csv", index=False, float_format="%.10g")
    if result.no_descent:
        print("No learning rate suggested: the loss never decreased over the sweep.", file=sys.stderr)
        return EXIT_NO_DESCENT
    print(f"Steepest descent at lr {result.suggested_lr:.3e}")
    print(f"Descent between {result.descent_bounds[0]:.3e} and {result.descent_bounds[1]:.3e}")
    print("Grid: " + ", ".join(f"{lr:.3e}" for lr in result.grid))
    (out / "lr_grid.txt").write_text("".join(f"{lr!r}\n" for lr in result.grid))
    return EXIT_OK


def _evaluate(checkpoint_dir: Path, cfg: RunConfig, trials_path: str, corpus_path: str,
              out: Path, pooling: Optional[str], repeats: int, seed: int) -> List[EvaluationResult]:
    checkpoint = Checkpoint.load(checkpoint_dir)
    model = _model_for(cfg, _num_classes(checkpoint))
    checkpoint.restore(model)
    trials = parse_trials(trials_path)
    corpus = load_corpus(corpus_path)
    method = None if model.variant is Variant.BCE else pooling
    results = evaluate_repeated(model, trials, corpus, repeats, seed, method, cfg.train.eval_crop_samples)
    if len(results) == 1:
        write_scores(results[0].scores, out / "scores.txt")
    else:
        for r, result in enumerate(results, start=1):
            write_scores(result.scores, out / f"scores_{r}.txt")
    write_report(results, out / "report.txt")
    results[0].print_summary()
    _print_eers(results)
    return results


def cmd_evaluate(args: argparse.Namespace) -> int:
    checkpoint_dir = Path(args.checkpoint)
    config_path = Path(args.config) if args.config else checkpoint_dir.parent / RESOLVED_NAME
    cfg = load_run_config(config_path)
    trials = args.trials or cfg.test_trials or cfg.validation_trials
    corpus = args.corpus or cfg.corpus
    if not trials or not corpus:
        raise CommandError("evaluate needs --trials and --corpus (or test_trials and corpus in the config)")
    out = prepare_output(Path(args.out) if args.out else checkpoint_dir / "evaluation", args.force)
    seed = args.seed if args.seed is not None else cfg.seed
    _evaluate(checkpoint_dir, cfg, trials, corpus, out, args.pooling, args.repeats, seed)
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg = replace(cfg, train=run_ablation(cfg.train, args.ablation))
    out = prepare_output(Path(cfg.out) / args.ablation, args.force)
    cfg = replace(cfg, out=str(out))
    result = _train(cfg, out, args.verbose)
    if result.diverged:
        print(f"Training diverged: {result.divergence}", file=sys.stderr)
        return EXIT_DIVERGED
    trials = cfg.test_trials or cfg.validation_trials
    if trials:
        _evaluate(out / "best", cfg, trials, cfg.corpus, out / "evaluation", None, 1, cfg.seed)
    else:
        logger.warning("no trial list configured; skipping evaluation of the ablation")
    return EXIT_OK


# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wav2vec2_speaker",
        description="Fine-tune wav2vec2-style encoders for speaker recognition and score trials by EER",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="logging verbosity")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-corpus", help="write a synthetic multi-speaker corpus with trial lists")
    gen.add_argument("--speakers", type=int, default=20, help="number of speakers (>= 2)")
    gen.add_argument("--utts", type=int, default=20, help="utterances per speaker (>= 2)")
    gen.add_argument("--duration", type=float, default=3.0, help="utterance length in seconds")
    gen.add_argument("--trials-per-class", type=int, default=5000, help="same (and different) trials per list")
    gen.add_argument("--workers", type=int, default=1, help="parallel writer threads")
    gen.add_argument("--seed", type=int, default=0, help="corpus seed")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    gen.set_defaults(func=cmd_generate_corpus)

    def run_options(p: argparse.ArgumentParser):
        p.add_argument("--config", required=True, help="run config file")
        p.add_argument("--corpus", help="corpus directory or manifest (overrides the config)")
        p.add_argument("--trials", help="validation trial list (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="run seed (overrides the config)")
        p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
        p.add_argument("--verbose", action="store_true", help="print progress")

    train = sub.add_parser("train", help="fine-tune a model")
    run_options(train)
    train.set_defaults(func=cmd_train)

    sweep = sub.add_parser("lr-range-test", help="sweep learning rates and suggest a 7-point grid")
    run_options(sweep)
    sweep.set_defaults(func=cmd_lr_range_test)

    ev = sub.add_parser("evaluate", help="score a trial list with a checkpoint")
    ev.add_argument("--checkpoint", required=True, help="checkpoint directory")
    ev.add_argument("--config", help=f"run config (default: {RESOLVED_NAME} next to the checkpoint)")
    ev.add_argument("--trials", help="trial list")
    ev.add_argument("--corpus", help="corpus directory or manifest")
    ev.add_argument("--pooling", help="pooling override for ce/aam models")
    ev.add_argument("--repeats", type=int, default=1, help="evaluations with independent pooling draws")
    ev.add_argument("--seed", type=int, help="seed of random pooling")
    ev.add_argument("--out", help="output directory (default: <checkpoint>/evaluation)")
    ev.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    ev.set_defaults(func=cmd_evaluate)

    ab = sub.add_parser("ablate", help="train and evaluate a named ablation of the config")
    ab.add_argument("ablation", help="ablation name")
    run_options(ab)
    ab.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SpeakerRecognitionError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
