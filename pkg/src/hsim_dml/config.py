"""Experiment configuration and process settings.

An experiment is described by one JSON file validated against
``ExperimentConfig``. Process-level settings (log level, output root, HTTP
bind address) come from environment variables.
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dataio import HierarchySpec
from .embedder.training import TrainConfig
from .errors import ConfigError, OutsideOutputRootError
from .geometry import SimilarityKind
from .losses import MsHyperParams
from .margins import InterTransform
from .perturb import NoiseSpec


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSource(_Section):
    """Synthetic hierarchy parameters, or a feature file."""

    source: Literal["synthetic", "file"] = "synthetic"
    superclasses: int = Field(5, ge=1)
    subclasses_per_super: int = Field(4, ge=1)
    samples_per_class: int = Field(60, ge=2)
    dim: int = Field(32, ge=1)
    super_scale: float = Field(4.0, gt=0)
    sub_scale: float = Field(1.5, gt=0)
    noise_scale: float = Field(1.0, gt=0)
    path: str | None = None
    format: Literal["csv", "binary"] = "binary"

    @model_validator(mode="after")
    def _check_source(self) -> "DatasetSource":
        if self.source == "file" and not self.path:
            raise ValueError("a file dataset needs 'path'")
        if self.source == "synthetic" and not self.super_scale > self.sub_scale > self.noise_scale:
            raise ValueError("scales must satisfy super_scale > sub_scale > noise_scale")
        return self

    def hierarchy_spec(self) -> HierarchySpec:
        return HierarchySpec(
            superclasses=self.superclasses,
            subclasses_per_super=self.subclasses_per_super,
            samples_per_class=self.samples_per_class,
            dim=self.dim,
            super_scale=self.super_scale,
            sub_scale=self.sub_scale,
            noise_scale=self.noise_scale,
        )


class NoiseSettings(_Section):
    ratio: float = Field(0.0, ge=0.0, le=1.0)


class TrainSettings(_Section):
    """Training knobs; see ``TrainConfig`` for their meaning."""

    epochs: int = Field(30, ge=0)
    classes_per_batch: int = Field(4, ge=2)
    samples_per_class: int = Field(4, ge=2)
    gamma: float = Field(0.5, gt=0)
    scale_aug: float = Field(2.0, gt=0)
    scale_pos: float = Field(2.0, gt=0)
    scale_neg: float = Field(40.0, gt=0)
    triplet_margin: float = 0.1
    loss: Literal["triplet", "lifted", "ms"] = "ms"
    margin_mode: Literal["fixed", "hierarchical"] = "hierarchical"
    class_divergence: bool = True
    sample_consistency: bool = True
    similarity: Literal["cosine", "poincare"] = "cosine"
    curvature: float = Field(1.0, gt=0)
    exp_map_form: Literal["scaled", "standard"] = "scaled"
    distance_transform: Literal["exp", "negative"] = "exp"
    weak_scale: float = Field(0.05, ge=0)
    strong_factor: float = Field(3.0, ge=1)
    strong_mask_frac: float = Field(0.25, ge=0, lt=1)
    lr: float = Field(1e-3, ge=0)
    weight_decay: float = Field(1e-5, ge=0)
    hidden_widths: list[int] = Field(default_factory=lambda: [128])
    output_dim: int = Field(32, ge=1)
    stats_cap: int = Field(256, ge=2)
    inter_transform: Literal["negation", "reciprocal"] = "negation"
    reciprocal_eps: float = Field(1e-3, gt=0)
    consistency: Literal["min", "max"] = "min"

    @field_validator("hidden_widths")
    @classmethod
    def _positive_widths(cls, v: list[int]) -> list[int]:
        if any(w < 1 for w in v):
            raise ValueError("hidden widths must be positive")
        return v

    def similarity_kind(self) -> SimilarityKind:
        if self.similarity == "cosine":
            return SimilarityKind.cosine()
        return SimilarityKind.poincare(self.curvature, self.exp_map_form, self.distance_transform)

    def to_train_config(self, seed: int, noise: NoiseSpec) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            classes_per_batch=self.classes_per_batch,
            samples_per_class=self.samples_per_class,
            gamma=self.gamma,
            ms=MsHyperParams(self.scale_aug, self.scale_pos, self.scale_neg),
            triplet_margin=self.triplet_margin,
            kind=self.similarity_kind(),
            weak_scale=self.weak_scale,
            strong_factor=self.strong_factor,
            strong_mask_frac=self.strong_mask_frac,
            noise=noise,
            loss=self.loss,
            margin_mode=self.margin_mode,
            class_divergence=self.class_divergence,
            sample_consistency=self.sample_consistency,
            lr=self.lr,
            weight_decay=self.weight_decay,
            hidden_widths=tuple(self.hidden_widths),
            output_dim=self.output_dim,
            stats_cap=self.stats_cap,
            inter_transform=InterTransform(self.inter_transform, self.reciprocal_eps),
            consistency=self.consistency,
            seed=seed,
        )


class EvalSettings(_Section):
    k_values: list[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    dump_queries: list[int] = Field(default_factory=list)
    dump_top_k: int = Field(5, ge=1)

    @field_validator("k_values")
    @classmethod
    def _sorted_positive(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("at least one K is required")
        if any(k < 1 for k in v):
            raise ValueError("every K must be at least 1")
        return sorted(set(v))


class ExperimentConfig(_Section):
    """One experiment: data, noise, training, evaluation and outputs."""

    name: str = "experiment"
    seed: int = 0
    dataset: DatasetSource = Field(default_factory=DatasetSource)
    noise: NoiseSettings = Field(default_factory=NoiseSettings)
    train: TrainSettings = Field(default_factory=TrainSettings)
    eval: EvalSettings = Field(default_factory=EvalSettings)
    output_dir: str = "runs/experiment"
    dump_margins: bool = False
    workers: int = Field(1, ge=1)

    def train_config(self) -> TrainConfig:
        # every row of a grid with the same seed sees the same noisy labels
        return self.train.to_train_config(self.seed, NoiseSpec(self.noise.ratio, self.seed))


def _problems(error: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in error.errors()]


def parse_experiment_config(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a decoded configuration.

    Raises
    ------
    ConfigError
        Listing ``field.path: message`` for every offending field.
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_problems(e)) from e


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON configuration file."""
    src = Path(path)
    if not src.is_file():
        raise ConfigError([f"<file>: configuration file not found: {src}"])
    try:
        data = json.loads(src.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError([f"<file>: invalid JSON at line {e.lineno}: {e.msg}"]) from e
    if not isinstance(data, dict):
        raise ConfigError(["<root>: configuration must be a JSON object"])
    return parse_experiment_config(data)


@dataclass
class ServiceSettings:
    """Configuration for the tool servers."""

    output_root: Path
    log_level: str = "INFO"
    host: str = "0.0.0.0"
    port: int = 8000

    def confine(self, path: str | Path) -> Path:
        """Resolve ``path`` against the output root.

        Raises
        ------
        OutsideOutputRootError
            If the resolved path is the root itself or lies outside it.
        """
        root = self.output_root.resolve()
        target = (self.output_root / path).resolve()
        if target == root or not target.is_relative_to(root):
            raise OutsideOutputRootError(f"path {str(path)!r} escapes the output root {root}")
        return target


def load_settings() -> ServiceSettings:
    """Load process settings from environment variables.

    Returns
    -------
    ServiceSettings
        The loaded settings.

    Raises
    ------
    ValueError
        If ``MCP_PORT`` is not an integer.
    """
    port = os.getenv("MCP_PORT", "8000")
    if not port.isdigit():
        raise ValueError(f"MCP_PORT must be an integer, got {port!r}")
    return ServiceSettings(
        output_root=Path(os.getenv("HSIM_OUTPUT_ROOT", "runs")),
        log_level=os.getenv("LOG_LEVEL", "INFO"),
        host=os.getenv("MCP_HOST", "0.0.0.0"),
        port=int(port),
    )
