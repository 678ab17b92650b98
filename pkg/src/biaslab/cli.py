"""Command-line entry point: biaslab analyze|train|generate|evaluate|report.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
divergence during training.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .errors import BiaslabError, IngestionError, MetricError, TrainingDivergedError
from .errors import ConfigError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biaslab",
        description="Measure gender bias in corpora and LSTM language models, "
                    "and reduce it during training.",
    )
    parser.add_argument("--version", action="version", version=f"biaslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment file (JSON or TOML)")
        p.add_argument("--seed", type=int, default=None, help="override the global seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--defining-sets", default=None, help="override the defining-set file")
        p.add_argument("--stop-words", default=None, help="override the stop-word file")

    p = sub.add_parser("analyze", help="score the training corpus")
    common(p)
    p.add_argument("--scheme", choices=["fixed", "exponential", "both"], default="both")

    p = sub.add_parser("train", help="train one model per lambda value")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="train only this lambda value")

    p = sub.add_parser("generate", help="sample text from trained checkpoints")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)

    p = sub.add_parser("evaluate", help="score generated text and build the report")
    common(p)

    p = sub.add_parser("report", help="print an existing report as a table")
    common(p)
    return parser


def _load_config(args) -> pipeline.ExperimentConfig:
    config = pipeline.ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
        config.generation.seed = args.seed
        config.model.seed = args.seed
    if args.out is not None:
        config.out_dir = Path(args.out)
    if args.defining_sets is not None:
        config.defining_sets_path = Path(args.defining_sets)
    if args.stop_words is not None:
        config.stop_words_path = Path(args.stop_words)
    return config


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "analyze":
            return pipeline.cmd_analyze(config, scheme_filter=args.scheme)
        if args.command == "train":
            return pipeline.cmd_train(config, lam=args.lam)
        if args.command == "generate":
            return pipeline.cmd_generate(config, lam=args.lam)
        if args.command == "evaluate":
            return pipeline.cmd_evaluate(config)
        if args.command == "report":
            return pipeline.cmd_report(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except TrainingDivergedError as exc:
        print(f"biaslab: training diverged: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, IngestionError, MetricError) as exc:
        print(f"biaslab: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"biaslab: {exc}", file=sys.stderr)
        return 2
    except BiaslabError as exc:
        print(f"biaslab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
