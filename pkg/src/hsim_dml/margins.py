"""Epoch-versioned hierarchical margin tables.

Turns a ``ClassSimilarityMatrix`` into the per-class positive margin ``M_p``,
the per-class-pair negative margin ``M_n`` and the per-class consistency
margin ``M_a`` for augmented pairs.
"""

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from ._typing import FloatArray, IntArray
from .class_stats import (
    SINGLETON_INTRA,
    ClassSimilarityMatrix,
    max_intra_similarity,
    min_intra_similarity,
    rescale_to_unit_fifth,
)
from .geometry import SimilarityKind

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.5
DEFAULT_RECIPROCAL_EPS = 1e-3
_BOUND_TOL = 1e-12

Consistency = Literal["min", "max"]


@dataclass(frozen=True)
class InterTransform:
    """How inter-class similarities are ordered before rescaling.

    ``reciprocal`` takes ``1 / max(S_ab, eps)``; ``negation`` takes ``-S_ab``.
    Both give more-similar class pairs the larger negative margin.
    """

    mode: Literal["reciprocal", "negation"] = "negation"
    eps: float = DEFAULT_RECIPROCAL_EPS

    def apply(self, inter: FloatArray) -> FloatArray:
        if self.mode == "reciprocal":
            return np.asarray(1.0 / np.maximum(inter, self.eps))
        return np.asarray(-inter)


@dataclass(frozen=True)
class MarginTable:
    """Margins for one epoch; read-only once built."""

    m_pos: FloatArray
    m_neg: FloatArray
    m_aug: FloatArray
    gamma: float
    epoch: int
    inter_transform: InterTransform = field(default_factory=InterTransform)

    def __post_init__(self) -> None:
        for arr in (self.m_pos, self.m_neg, self.m_aug):
            arr.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return int(self.m_pos.shape[0])

    @classmethod
    def baseline(cls, num_classes: int, gamma: float, epoch: int, m_aug: FloatArray | None = None) -> "MarginTable":
        """Collapsed table: ``M_p = M_n = gamma`` everywhere."""
        aug = np.ones(num_classes) if m_aug is None else np.array(m_aug, dtype=np.float64, copy=True)
        return cls(
            m_pos=np.full(num_classes, gamma, dtype=np.float64),
            m_neg=np.full((num_classes, num_classes), gamma, dtype=np.float64),
            m_aug=aug,
            gamma=gamma,
            epoch=epoch,
        )

    def collapse_class_divergence(self) -> "MarginTable":
        """Same consistency margins, but ``M_p = M_n = gamma``."""
        return MarginTable.baseline(self.num_classes, self.gamma, self.epoch, m_aug=self.m_aug).with_transform(self.inter_transform)

    def with_transform(self, transform: InterTransform) -> "MarginTable":
        return MarginTable(self.m_pos.copy(), self.m_neg.copy(), self.m_aug.copy(), self.gamma, self.epoch, transform)

    def summary(self) -> dict[str, float]:
        """Aggregates for logging and history records."""
        c = self.num_classes
        rows, cols = np.triu_indices(c, k=1)
        pairs = self.m_neg[rows, cols]
        return {
            "m_pos_mean": float(self.m_pos.mean()),
            "m_neg_mean": float(pairs.mean()) if pairs.size else self.gamma,
            "m_neg_min": float(pairs.min()) if pairs.size else self.gamma,
            "m_aug_mean": float(self.m_aug.mean()),
        }

    def to_dict(self) -> dict[str, Any]:
        """Diagnostic dump; the pair table is the row-major upper triangle."""
        c = self.num_classes
        rows, cols = np.triu_indices(c, k=1)
        return {
            "epoch": self.epoch,
            "gamma": self.gamma,
            "inter_transform": {"mode": self.inter_transform.mode, "eps": self.inter_transform.eps},
            "num_classes": c,
            "m_pos": self.m_pos.tolist(),
            "m_aug": self.m_aug.tolist(),
            "m_neg_pairs": [[int(a), int(b), float(self.m_neg[a, b])] for a, b in zip(rows, cols, strict=True)],
        }

    def dump_json(self, path: str | Path) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return out


def _check_bounds(table: MarginTable, kind: SimilarityKind) -> None:
    g = table.gamma
    if np.any(table.m_pos < g - _BOUND_TOL) or np.any(table.m_pos > g + 0.2 + _BOUND_TOL):
        raise AssertionError("m_pos escaped [gamma, gamma + 0.2]")
    if np.any(table.m_neg < g - 0.2 - _BOUND_TOL) or np.any(table.m_neg > g + _BOUND_TOL):
        raise AssertionError("m_neg escaped [gamma - 0.2, gamma]")
    if not np.array_equal(table.m_neg, table.m_neg.T):
        raise AssertionError("m_neg is not symmetric")
    aug = table.m_aug
    if kind.name == "cosine":
        if np.any(aug < -1.0) or np.any(aug > 1.0):
            raise AssertionError("m_aug escaped [-1, 1]")
    elif kind.distance_transform == "exp":
        if np.any(aug <= 0.0) or np.any(aug > 1.0):
            raise AssertionError("m_aug escaped (0, 1]")
    elif np.any(aug[aug != SINGLETON_INTRA] > 0.0):
        # singleton classes keep the 1.0 convention
        raise AssertionError("m_aug escaped (-inf, 0]")


def build_margin_table(
    stats: ClassSimilarityMatrix,
    embeddings: FloatArray | Sequence[Sequence[float]],
    labels: Sequence[int] | IntArray,
    gamma: float = DEFAULT_GAMMA,
    kind: SimilarityKind | None = None,
    inter_transform: InterTransform | None = None,
    *,
    consistency: Consistency = "min",
) -> MarginTable:
    """Build the margin table of one epoch.

    Parameters
    ----------
    stats : ClassSimilarityMatrix
        Class statistics computed from ``embeddings`` / ``labels``.
    embeddings, labels
        The same samples, used for the consistency margin.
    gamma : float
        Base margin; values above 0.2 keep every ``M_n`` positive.
    kind : SimilarityKind, optional
        Defaults to cosine.
    inter_transform : InterTransform, optional
        Defaults to negation.
    consistency : {"min", "max"}
        ``min`` takes the smallest intra-class similarity as ``M_a``; ``max``
        the largest.

    Returns
    -------
    MarginTable
        Stamped with ``stats.epoch``.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    kind = kind or SimilarityKind.cosine()
    transform = inter_transform or InterTransform()
    c = stats.num_classes

    intra_hat = rescale_to_unit_fifth(stats.intra()).values
    m_pos = gamma + intra_hat

    m_neg = np.full((c, c), gamma, dtype=np.float64)
    rows, cols, inter = stats.inter_pairs()
    if inter.size:
        inter_hat = rescale_to_unit_fifth(transform.apply(inter)).values
        m_neg[rows, cols] = gamma - inter_hat
        m_neg[cols, rows] = gamma - inter_hat

    extreme = min_intra_similarity if consistency == "min" else max_intra_similarity
    m_aug = np.array([extreme(embeddings, labels, a, kind) for a in range(c)], dtype=np.float64)

    table = MarginTable(m_pos=m_pos, m_neg=m_neg, m_aug=m_aug, gamma=gamma, epoch=stats.epoch, inter_transform=transform)
    _check_bounds(table, kind)
    logger.debug(f"margin table epoch={stats.epoch}: {table.summary()}")
    return table
