"""Command-line entry point for experiments.

Subcommands: ``generate``, ``train``, ``eval``, ``ablate`` and ``sweep``.
"""

import argparse
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import ExperimentConfig, load_experiment_config
from .dataio import generate_hierarchical, save_features
from .experiments import DEFAULT_SWEEP_RATIOS, evaluate_checkpoint, load_dataset, run, run_ablation, run_noise_sweep

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsim-dml", description="Hierarchical-margin metric learning experiments")
    parser.add_argument("--log-level", default=os.getenv("LOG_LEVEL", "INFO"), help="Logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", type=Path, required=config_required, help="Experiment configuration (JSON)")
        p.add_argument("--seed", type=int, default=None, help="Override the configured seed")
        p.add_argument("--out", type=Path, default=None, help="Override the output directory")

    gen = sub.add_parser("generate", help="Write a synthetic hierarchical dataset")
    common(gen, config_required=False)
    gen.add_argument("--format", choices=["binary", "csv"], default="binary")

    train = sub.add_parser("train", help="Run one experiment")
    common(train)
    train.add_argument("--dump-margins", action="store_true", help="Write the margin table of every epoch")

    ev = sub.add_parser("eval", help="Evaluate a checkpoint on the clean test split")
    common(ev)
    ev.add_argument("--checkpoint", type=Path, required=True)

    abl = sub.add_parser("ablate", help="Run the component ablation grid")
    common(abl)
    abl.add_argument("--seeds", type=int, nargs="+", default=None, help="Seeds shared by every row")
    abl.add_argument("--workers", type=int, default=None, help="Concurrent runs")

    sweep = sub.add_parser("sweep", help="Baseline against the full method across noise ratios")
    common(sweep)
    sweep.add_argument("--ratios", type=float, nargs="+", default=list(DEFAULT_SWEEP_RATIOS))
    sweep.add_argument("--seeds", type=int, nargs="+", default=None)
    sweep.add_argument("--workers", type=int, default=None)
    return parser


def _resolve(args: argparse.Namespace) -> tuple[ExperimentConfig, str | None]:
    if args.config is None:
        config, text = ExperimentConfig(), None
    else:
        config = load_experiment_config(args.config)
        text = args.config.read_text(encoding="utf-8")
    update: dict[str, object] = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.out is not None:
        update["output_dir"] = str(args.out)
    if getattr(args, "dump_margins", False):
        update["dump_margins"] = True
    if getattr(args, "workers", None) is not None:
        update["workers"] = args.workers
    return (config.model_copy(update=update) if update else config), text


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO))
    config, text = _resolve(args)

    if args.command == "generate":
        dataset = generate_hierarchical(config.dataset.hierarchy_spec(), config.seed)
        target = args.out or Path(f"dataset.{'csv' if args.format == 'csv' else 'hsfd'}")
        save_features(dataset, target, args.format)
        print(f"wrote {dataset.features.shape[0]} samples ({dataset.num_classes} classes) to {target}")
    elif args.command == "train":
        result = run(config, config_text=text)
        print(f"{config.name}: " + ", ".join(f"{k}={v:.4f}" for k, v in result.final.as_dict().items()))
    elif args.command == "eval":
        dataset = load_dataset(config)
        evaluation = evaluate_checkpoint(
            args.checkpoint,
            dataset,
            config.eval.k_values,
            config.train.similarity_kind(),
            dump_queries=config.eval.dump_queries,
            top_k=config.eval.dump_top_k,
        )
        print(", ".join(f"{k}={v:.4f}" for k, v in evaluation.report.as_dict().items()))
        if evaluation.dump:
            print(evaluation.dump, end="")
    elif args.command == "ablate":
        grid = run_ablation(config, args.seeds)
        print(grid.csv_path.read_text(encoding="utf-8"), end="")
    elif args.command == "sweep":
        grid = run_noise_sweep(config, args.ratios, args.seeds)
        print(grid.csv_path.read_text(encoding="utf-8"), end="")
    return 0


def cli_main() -> None:
    """Synchronous entry point for console script."""
    try:
        sys.exit(main())
    except Exception as e:
        # Print error to stderr and exit with non-zero code
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    cli_main()
