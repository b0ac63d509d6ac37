"""MCP tools package."""

# Dataset tools (dataio)
from .datasets import generate_dataset

# Experiment tools (experiment harness)
from .experiments import (
    evaluate_checkpoint,
    run_ablation_study,
    run_experiment,
    run_noise_sweep,
)

__all__ = [
    # Dataset tools
    "generate_dataset",
    # Experiment tools
    "run_experiment",
    "run_ablation_study",
    "run_noise_sweep",
    "evaluate_checkpoint",
]
