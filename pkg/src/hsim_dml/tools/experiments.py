"""Tools for training runs, ablations, noise sweeps and checkpoint evaluation."""

import asyncio
import logging
from typing import Any

import mcp.types as types

from .. import experiments
from ..config import ExperimentConfig, load_settings, parse_experiment_config

logger = logging.getLogger(__name__)


def _confined(config: dict[str, Any] | None, name: str | None) -> ExperimentConfig:
    """Validate ``config`` and place its outputs under the output root."""
    parsed = parse_experiment_config(config or {})
    run_name = name or parsed.name
    out = load_settings().confine(run_name)
    return parsed.model_copy(update={"name": run_name, "output_dir": str(out)})


def _recall_lines(recalls: dict[str, float]) -> str:
    return "\n".join(f"  {k}: {v:.4f}" for k, v in recalls.items())


async def run_experiment(config: dict[str, Any] | None = None, name: str | None = None) -> list[types.TextContent]:
    """Train and evaluate one configuration.

    Parameters
    ----------
    config : dict, optional
        Experiment configuration; omitted sections take their defaults.
    name : str, optional
        Run name, also the output directory under the output root.

    Returns
    -------
    List[types.TextContent]
        Final test recalls and artifact location formatted for MCP client.
    """

    def _sync_run():
        try:
            cfg = _confined(config, name)
            result = experiments.run(cfg)
            tc = cfg.train_config()
            text = f"""Experiment {cfg.name} finished in {result.wall_clock:.1f}s

Loss: {tc.loss_label} ({tc.kind.label})
Noise ratio: {cfg.noise.ratio}
Epochs: {len(result.history)}
Output: {result.output_dir}

Test recall:
{_recall_lines(result.final.as_dict())}"""
            if result.history:
                text += f"\n\nFinal training loss: {result.history[-1].mean_loss:.6f}"
            return [types.TextContent(type="text", text=text)]
        except Exception as e:
            return [types.TextContent(type="text", text=f"Error running experiment: {str(e)}")]

    return await asyncio.to_thread(_sync_run)


def _grid_text(title: str, grid: experiments.GridResult) -> str:
    lines = [title, "", f"Table: {grid.csv_path}", ""]
    for row in grid.rows:
        recalls = ", ".join(f"R@{k}={v:.4f}" for k, v in sorted(row.recalls.items()))
        lines.append(f"  {row.variant:<20} noise={row.noise_ratio:g} seed={row.seed}: {recalls}")
    return "\n".join(lines)


async def run_ablation_study(
    config: dict[str, Any] | None = None, name: str | None = None, seeds: list[int] | None = None
) -> list[types.TextContent]:
    """Run the component ablation grid with shared seeds.

    Returns
    -------
    List[types.TextContent]
        One line per grid row formatted for MCP client.
    """

    def _sync_ablate():
        try:
            cfg = _confined(config, name)
            grid = experiments.run_ablation(cfg, seeds)
            return [types.TextContent(type="text", text=_grid_text(f"Ablation {cfg.name}", grid))]
        except Exception as e:
            return [types.TextContent(type="text", text=f"Error running ablation: {str(e)}")]

    return await asyncio.to_thread(_sync_ablate)


async def run_noise_sweep(
    config: dict[str, Any] | None = None,
    name: str | None = None,
    ratios: list[float] | None = None,
    seeds: list[int] | None = None,
) -> list[types.TextContent]:
    """Compare the baseline and the full method across training-label noise ratios.

    Returns
    -------
    List[types.TextContent]
        One line per grid row formatted for MCP client.
    """

    def _sync_sweep():
        try:
            cfg = _confined(config, name)
            grid = experiments.run_noise_sweep(cfg, ratios or experiments.DEFAULT_SWEEP_RATIOS, seeds)
            return [types.TextContent(type="text", text=_grid_text(f"Noise sweep {cfg.name}", grid))]
        except Exception as e:
            return [types.TextContent(type="text", text=f"Error running noise sweep: {str(e)}")]

    return await asyncio.to_thread(_sync_sweep)


async def evaluate_checkpoint(checkpoint: str, config: dict[str, Any] | None = None) -> list[types.TextContent]:
    """Recall@K of a saved checkpoint on the configured dataset's test split.

    Parameters
    ----------
    checkpoint : str
        Path of an ``HSIM1`` checkpoint under the output root; relative paths resolve against it.
    config : dict, optional
        Supplies the dataset, similarity and evaluation settings.

    Returns
    -------
    List[types.TextContent]
        Recalls and optional neighbor dump formatted for MCP client.
    """

    def _sync_evaluate():
        try:
            cfg = parse_experiment_config(config or {})
            path = load_settings().confine(checkpoint)
            dataset = experiments.load_dataset(cfg)
            evaluation = experiments.evaluate_checkpoint(
                path,
                dataset,
                cfg.eval.k_values,
                cfg.train.similarity_kind(),
                dump_queries=cfg.eval.dump_queries,
                top_k=cfg.eval.dump_top_k,
            )
            text = f"""Checkpoint {path}

Test queries: {evaluation.report.n_queries}
Test recall:
{_recall_lines(evaluation.report.as_dict())}"""
            if evaluation.dump:
                text += f"\n\nNeighbors:\n{evaluation.dump}"
            return [types.TextContent(type="text", text=text)]
        except Exception as e:
            return [types.TextContent(type="text", text=f"Error evaluating checkpoint: {str(e)}")]

    return await asyncio.to_thread(_sync_evaluate)
