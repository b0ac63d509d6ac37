#!/usr/bin/env python3
"""Run the seeded noisy-label ablation and print the row comparison.

Run with: poetry run python scripts/run_benchmark.py [--noise 0.5] [--epochs 30] [--dim 16]
"""

import argparse
import logging
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from hsim_dml.config import parse_experiment_config  # noqa: E402
from hsim_dml.experiments import ABLATION_VARIANTS, run_ablation  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description="Seeded ablation benchmark for hsim-dml")
    parser.add_argument("--noise", type=float, default=0.5, help="Training-label noise ratio")
    parser.add_argument("--dim", type=int, default=16, help="Feature dimension of the synthetic hierarchy")
    parser.add_argument("--noise-scale", type=float, default=1.4, help="Sample spread around subclass centers")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--out", type=Path, default=Path("runs/benchmark"))
    args = parser.parse_args()

    logging.basicConfig(level=logging.WARNING, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    config = parse_experiment_config(
        {
            "name": "benchmark",
            "dataset": {"dim": args.dim, "noise_scale": args.noise_scale},
            "noise": {"ratio": args.noise},
            "train": {"epochs": args.epochs},
            "eval": {"k_values": [1, 2, 4, 8]},
            "output_dir": str(args.out),
            "workers": args.workers,
        }
    )
    print(f"🧪 Ablation: label noise {args.noise:g}, dim {args.dim}, {args.epochs} epochs, seeds {args.seeds}")
    grid = run_ablation(config, seeds=args.seeds)

    baseline = grid.mean_recall("baseline")
    print(f"\n{'variant':<20} {'recall@1':>9} {'vs baseline':>12}")
    for variant in ABLATION_VARIANTS:
        mean = grid.mean_recall(variant)
        print(f"{variant:<20} {mean:>9.4f} {mean - baseline:>+12.4f}")

    wins = sum(
        full.recalls[1] > base.recalls[1]
        for full, base in zip(
            (r for r in grid.rows if r.variant == "full" and r.seed != "mean"),
            (r for r in grid.rows if r.variant == "baseline" and r.seed != "mean"),
            strict=True,
        )
    )
    print(f"\nfull beats baseline on {wins}/{len(args.seeds)} seeds")
    print(f"📄 Table written to {grid.csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
