"""Experiment harness: end-to-end runs, ablation grids and noise sweeps.

A run generates or loads the data, flips a share of the training labels,
trains, evaluates Recall@K on the clean test split after every epoch and
writes its artifacts to ``output_dir``:

- ``metrics.csv``: one row per epoch plus a ``final`` row
- ``report.json``: configuration echo, history, final recalls, wall-clock
- ``model.hsim``: checkpoint of the trained model
- ``config.json``: the configuration as given
- ``margins/epoch_NNN.json`` and ``neighbors.tsv`` when requested
"""

import csv
import io
import json
import logging
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .config import ExperimentConfig
from .dataio import FeatureDataset, FeatureSplit, generate_hierarchical, load_features
from .embedder import EpochRecord, MlpModel, fit, load_checkpoint, save_checkpoint
from .errors import ConfigError
from .evaluation import RecallReport, neighbor_dump, recall_at_k
from .geometry import SimilarityKind
from .margins import MarginTable
from .perturb import inject_label_noise

logger = logging.getLogger(__name__)

METRICS_HEADER = ["run_id", "loss", "margin_mode", "sim_kind", "noise_ratio", "seed", "epoch", "mean_loss"]
GRID_HEADER = ["variant", "loss", "margin_mode", "sim_kind", "noise_ratio", "seed"]
DEFAULT_SWEEP_RATIOS = (0.3, 0.5, 0.7)

# component switches of each ablation row, in table order
ABLATION_VARIANTS: dict[str, dict[str, Any]] = {
    "baseline": {"margin_mode": "fixed", "class_divergence": False, "sample_consistency": False, "similarity": "cosine"},
    "class_divergence": {"margin_mode": "hierarchical", "class_divergence": True, "sample_consistency": False, "similarity": "cosine"},
    "sample_consistency": {"margin_mode": "hierarchical", "class_divergence": False, "sample_consistency": True, "similarity": "cosine"},
    "full": {"margin_mode": "hierarchical", "class_divergence": True, "sample_consistency": True, "similarity": "cosine"},
    "full_hyperbolic": {"margin_mode": "hierarchical", "class_divergence": True, "sample_consistency": True, "similarity": "poincare"},
}
SWEEP_VARIANTS = ("baseline", "full")


@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    loss: str
    margin_mode: str
    sim_kind: str
    noise_ratio: float
    seed: int
    epoch: int | str
    mean_loss: float | None
    recalls: dict[int, float]

    def fields(self) -> list[str]:
        loss = "" if self.mean_loss is None else f"{self.mean_loss:.6f}"
        head = [self.run_id, self.loss, self.margin_mode, self.sim_kind, f"{self.noise_ratio:g}", str(self.seed), str(self.epoch), loss]
        return head + [f"{self.recalls[k]:.6f}" for k in sorted(self.recalls)]


@dataclass
class RunResult:
    rows: list[MetricsRow]
    final: RecallReport
    history: list[EpochRecord]
    output_dir: Path
    wall_clock: float
    report: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class GridRow:
    """One cell of an ablation or noise-sweep table."""

    variant: str
    loss: str
    margin_mode: str
    sim_kind: str
    noise_ratio: float
    seed: int | str
    recalls: dict[int, float]

    def fields(self) -> list[str]:
        head = [self.variant, self.loss, self.margin_mode, self.sim_kind, f"{self.noise_ratio:g}", str(self.seed)]
        return head + [f"{self.recalls[k]:.6f}" for k in sorted(self.recalls)]


@dataclass
class GridResult:
    rows: list[GridRow]
    csv_path: Path

    def mean_recall(self, variant: str, k: int = 1, noise_ratio: float | None = None) -> float:
        picked = [
            r.recalls[k]
            for r in self.rows
            if r.variant == variant and r.seed != "mean" and (noise_ratio is None or r.noise_ratio == noise_ratio)
        ]
        return float(np.mean(picked))


def metrics_csv(rows: Sequence[MetricsRow], k_values: Sequence[int]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER + [f"recall@{k}" for k in sorted(k_values)])
    for row in rows:
        writer.writerow(row.fields())
    return buf.getvalue()


def _grid_csv(rows: Sequence[GridRow], k_values: Sequence[int]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_HEADER + [f"recall@{k}" for k in sorted(k_values)])
    for row in rows:
        writer.writerow(row.fields())
    return buf.getvalue()


def load_dataset(config: ExperimentConfig) -> FeatureDataset:
    """Dataset named by ``config.dataset``.

    Raises
    ------
    ConfigError
        If a file dataset's path does not exist.
    """
    source = config.dataset
    if source.source == "file":
        path = Path(source.path or "")
        if not path.is_file():
            raise ConfigError([f"dataset.path: file not found: {path}"])
        return load_features(path, source.format)
    return generate_hierarchical(source.hierarchy_spec(), config.seed)


def _noisy_train_split(dataset: FeatureDataset, config: ExperimentConfig) -> FeatureSplit:
    train = dataset.train()
    noise = config.train_config().noise
    labels, flipped = inject_label_noise(train.labels, dataset.num_classes, noise)
    logger.info(f"training on {train.labels.size} samples, {int(flipped.sum())} labels flipped")
    return replace(train, labels=labels)


def _check_k_values(config: ExperimentConfig, test: FeatureSplit) -> None:
    n = test.labels.size
    too_large = [k for k in config.eval.k_values if k >= n]
    if too_large:
        raise ConfigError([f"eval.k_values: K={too_large} must be smaller than the {n} test samples"])
    bad = [q for q in config.eval.dump_queries if not 0 <= q < n]
    if bad:
        raise ConfigError([f"eval.dump_queries: indices {bad} outside the {n} test samples"])


def run(config: ExperimentConfig, *, config_text: str | None = None) -> RunResult:
    """Execute one experiment end to end and write its artifacts.

    Parameters
    ----------
    config : ExperimentConfig
        Validated configuration.
    config_text : str, optional
        The configuration file as given; copied verbatim to ``config.json``.

    Returns
    -------
    RunResult
        Metrics rows, final recalls and the output directory.
    """
    started = time.perf_counter()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tc = config.train_config()
    logger.info(f"run {config.name}: {tc.loss_label} {tc.kind.label}, noise {config.noise.ratio}, seed {config.seed} -> {out}")

    dataset = load_dataset(config)
    test = dataset.test()
    _check_k_values(config, test)
    train = _noisy_train_split(dataset, config)
    model = MlpModel.initialize(tc.widths(dataset.dim), config.seed)
    k_values = config.eval.k_values

    def row(epoch: int | str, mean_loss: float | None, report: RecallReport) -> MetricsRow:
        return MetricsRow(
            run_id=config.name,
            loss=tc.loss,
            margin_mode=tc.margin_mode,
            sim_kind=tc.kind.label,
            noise_ratio=config.noise.ratio,
            seed=config.seed,
            epoch=epoch,
            mean_loss=mean_loss,
            recalls=dict(zip(report.k_values, report.recalls, strict=True)),
        )

    rows: list[MetricsRow] = []

    def on_epoch_end(record: EpochRecord, table: MarginTable | None) -> None:
        report = recall_at_k(model.embed(test.features), test.labels, k_values, tc.kind)
        rows.append(row(record.epoch, record.mean_loss, report))
        logger.info(f"epoch {record.epoch}: recall@{report.k_values[0]} = {report.recalls[0]:.4f}")
        if config.dump_margins and table is not None:
            table.dump_json(out / "margins" / f"epoch_{record.epoch:03d}.json")

    result = fit(model, train, tc, on_epoch_end=on_epoch_end)
    test_embeddings = model.embed(test.features)
    final = recall_at_k(test_embeddings, test.labels, k_values, tc.kind)
    last_loss = result.history[-1].mean_loss if result.history else None
    rows.append(row("final", last_loss, final))

    (out / "metrics.csv").write_text(metrics_csv(rows, k_values), encoding="utf-8")
    save_checkpoint(model, out / "model.hsim")
    (out / "config.json").write_text(config_text if config_text is not None else config.model_dump_json(indent=2), encoding="utf-8")
    if config.eval.dump_queries:
        dump = neighbor_dump(test_embeddings, test.labels, config.eval.dump_queries, config.eval.dump_top_k, tc.kind)
        (out / "neighbors.tsv").write_text(dump, encoding="utf-8")

    wall_clock = time.perf_counter() - started
    report = {
        "run_id": config.name,
        "config": config.model_dump(mode="json"),
        "history": [
            {"epoch": h.epoch, "mean_loss": h.mean_loss, "reference_loss": h.reference_loss, "batches": h.batches, "margins": h.margins}
            for h in result.history
        ],
        "final": final.as_dict(),
        "n_test": final.n_queries,
        "wall_clock_seconds": wall_clock,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    logger.info(f"run {config.name} finished in {wall_clock:.1f}s: {final.as_dict()}")
    return RunResult(rows=rows, final=final, history=result.history, output_dir=out, wall_clock=wall_clock, report=report)


def _variant_config(config: ExperimentConfig, variant: str, seed: int, noise_ratio: float, out: Path) -> ExperimentConfig:
    train = config.train.model_copy(update=ABLATION_VARIANTS[variant])
    return config.model_copy(
        update={
            "name": f"{config.name}-{variant}",
            "seed": seed,
            "train": train,
            "noise": config.noise.model_copy(update={"ratio": noise_ratio}),
            "output_dir": str(out),
        }
    )


def _run_grid(config: ExperimentConfig, cells: list[tuple[str, float, int, ExperimentConfig]], csv_path: Path) -> GridResult:
    """Run every cell, at most ``config.workers`` at a time, and tabulate in cell order."""
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(lambda cell: run(cell[3]), cells))

    rows: list[GridRow] = []
    k_values = config.eval.k_values
    seen: list[tuple[str, float]] = []
    for (variant, ratio, seed, cell), res in zip(cells, results, strict=True):
        tc = cell.train_config()
        rows.append(GridRow(variant, tc.loss, tc.margin_mode, tc.kind.label, ratio, seed, dict(zip(res.final.k_values, res.final.recalls, strict=True))))
        if (variant, ratio) not in seen:
            seen.append((variant, ratio))
    n_seeds = len({c[2] for c in cells})
    if n_seeds > 1:
        for variant, ratio in seen:
            group = [r for r in rows if r.variant == variant and r.noise_ratio == ratio and r.seed != "mean"]
            mean = {k: float(np.mean([r.recalls[k] for r in group])) for k in k_values}
            rows.append(replace(group[0], seed="mean", recalls=mean))
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(_grid_csv(rows, k_values), encoding="utf-8")
    return GridResult(rows=rows, csv_path=csv_path)


def run_ablation(config: ExperimentConfig, seeds: Sequence[int] | None = None) -> GridResult:
    """Component ablation: baseline, each component alone, full, and full on the ball.

    Every row uses the same seeds, data and noisy labels.
    """
    out = Path(config.output_dir)
    seeds = list(seeds) if seeds else [config.seed]
    cells = [
        (variant, config.noise.ratio, s, _variant_config(config, variant, s, config.noise.ratio, out / variant / f"seed_{s}"))
        for variant in ABLATION_VARIANTS
        for s in seeds
    ]
    logger.info(f"ablation {config.name}: {len(cells)} runs with {config.workers} worker(s)")
    return _run_grid(config, cells, out / "ablation.csv")


def run_noise_sweep(
    config: ExperimentConfig, ratios: Sequence[float] = DEFAULT_SWEEP_RATIOS, seeds: Sequence[int] | None = None
) -> GridResult:
    """Baseline against the full method at each training-label noise ratio."""
    out = Path(config.output_dir)
    seeds = list(seeds) if seeds else [config.seed]
    cells = [
        (variant, float(r), s, _variant_config(config, variant, s, float(r), out / f"noise_{r:g}" / variant / f"seed_{s}"))
        for r in ratios
        for variant in SWEEP_VARIANTS
        for s in seeds
    ]
    logger.info(f"noise sweep {config.name}: ratios {list(ratios)}, {len(cells)} runs")
    return _run_grid(config, cells, out / "noise_sweep.csv")


@dataclass
class CheckpointEvaluation:
    report: RecallReport
    dump: str | None = None


def evaluate_checkpoint(
    checkpoint: str | Path,
    dataset: FeatureDataset,
    k_values: Sequence[int],
    kind: SimilarityKind,
    *,
    dump_queries: Sequence[int] = (),
    top_k: int = 5,
) -> CheckpointEvaluation:
    """Recall@K of a saved model on the clean test split of ``dataset``."""
    model = load_checkpoint(checkpoint)
    test = dataset.test()
    z = model.embed(test.features)
    report = recall_at_k(z, test.labels, k_values, kind)
    dump = neighbor_dump(z, test.labels, dump_queries, top_k, kind) if dump_queries else None
    logger.info(f"evaluated {checkpoint}: {report.as_dict()}")
    return CheckpointEvaluation(report=report, dump=dump)
