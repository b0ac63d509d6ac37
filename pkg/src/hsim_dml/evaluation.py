"""Retrieval evaluation: Recall@K and textual neighbor dumps.

Every sample is a query against all other samples. Neighbors are ranked by
descending similarity with ties broken by ascending sample index.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ._typing import FloatArray, IntArray
from .errors import DimensionMismatchError, IndexOutOfRangeError, KTooLargeError
from .geometry import SimilarityKind, similarity_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecallReport:
    k_values: tuple[int, ...]
    recalls: tuple[float, ...]
    n_queries: int

    def recall(self, k: int) -> float:
        return self.recalls[self.k_values.index(k)]

    def as_dict(self) -> dict[str, float]:
        """``{"recall@k": value}`` in ascending ``k``."""
        return {f"recall@{k}": r for k, r in zip(self.k_values, self.recalls, strict=True)}


@dataclass(frozen=True)
class NeighborRow:
    query: int
    label: int
    neighbors: tuple[int, ...]
    similarities: tuple[float, ...]
    hit: bool


def _ranking(embeddings: FloatArray | Sequence[Sequence[float]], kind: SimilarityKind) -> tuple[FloatArray, IntArray]:
    z = np.asarray(embeddings, dtype=np.float64)
    sim, _ = similarity_matrix(z, kind)
    masked = sim.copy()
    np.fill_diagonal(masked, -np.inf)
    # stable sort keeps ascending index order among equal similarities
    order = np.argsort(-masked, axis=1, kind="stable")[:, :-1]
    return sim, order.astype(np.int64)


def _check_k(k: int, n: int) -> None:
    if k < 1:
        raise ValueError(f"K must be at least 1, got {k}")
    if k >= n:
        raise KTooLargeError(f"K={k} needs more than {n} samples")


def recall_at_k(
    embeddings: FloatArray | Sequence[Sequence[float]],
    labels: Sequence[int] | IntArray,
    k_values: Sequence[int],
    kind: SimilarityKind,
) -> RecallReport:
    """Fraction of queries with a same-label sample among their top-K neighbors.

    Raises
    ------
    KTooLargeError
        If some ``K >= n``.
    """
    y = np.asarray(labels, dtype=np.int64)
    n = y.shape[0]
    if np.asarray(embeddings).shape[0] != n:
        raise DimensionMismatchError(f"{np.asarray(embeddings).shape[0]} embeddings vs {n} labels")
    if n < 2:
        raise KTooLargeError("retrieval needs at least two samples")
    ks = tuple(sorted({int(k) for k in k_values}))
    for k in ks:
        _check_k(k, n)
    _, order = _ranking(embeddings, kind)
    matches = y[order] == y[:, None]
    first_hit = np.where(matches.any(axis=1), np.argmax(matches, axis=1), n)
    recalls = tuple(float(np.mean(first_hit < k)) for k in ks)
    return RecallReport(k_values=ks, recalls=recalls, n_queries=n)


def rank_neighbors(
    embeddings: FloatArray | Sequence[Sequence[float]],
    labels: Sequence[int] | IntArray,
    query_indices: Sequence[int],
    top_k: int,
    kind: SimilarityKind | None = None,
) -> list[NeighborRow]:
    kind = kind or SimilarityKind.cosine()
    y = np.asarray(labels, dtype=np.int64)
    n = y.shape[0]
    for q in query_indices:
        if not 0 <= q < n:
            raise IndexOutOfRangeError(f"query index {q} outside [0, {n})")
    _check_k(top_k, n)
    sim, order = _ranking(embeddings, kind)
    rows = []
    for q in query_indices:
        nbrs = order[q, :top_k]
        rows.append(
            NeighborRow(
                query=int(q),
                label=int(y[q]),
                neighbors=tuple(int(j) for j in nbrs),
                similarities=tuple(float(sim[q, j]) for j in nbrs),
                hit=bool(np.any(y[nbrs] == y[q])),
            )
        )
    return rows


def neighbor_dump(
    embeddings: FloatArray | Sequence[Sequence[float]],
    labels: Sequence[int] | IntArray,
    query_indices: Sequence[int],
    top_k: int,
    kind: SimilarityKind | None = None,
) -> str:
    """Tab-separated table, one line per query.

    Columns: query id, query label, ``hit`` / ``miss``, then the neighbors as
    ``id:similarity`` with six decimals.

    Raises
    ------
    IndexOutOfRangeError
        If a query index does not address a sample.
    """
    lines = ["query\tlabel\tflag\tneighbors"]
    for row in rank_neighbors(embeddings, labels, query_indices, top_k, kind):
        nbrs = ",".join(f"{j}:{s:.6f}" for j, s in zip(row.neighbors, row.similarities, strict=True))
        lines.append(f"{row.query}\t{row.label}\t{'hit' if row.hit else 'miss'}\t{nbrs}")
    return "\n".join(lines) + "\n"
