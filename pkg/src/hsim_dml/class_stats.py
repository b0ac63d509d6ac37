"""Class-wise divergence statistics.

Average intra-class and inter-class similarity of the embeddings, the affine
rescaling of a statistic set into ``[0, 0.2]`` and the extreme intra-class
similarity consumed by the consistency margin.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ._typing import FloatArray, IntArray
from .errors import DimensionMismatchError, EmptyClassError
from .geometry import SimilarityKind, similarity_matrix

logger = logging.getLogger(__name__)

RESCALE_TOP = 0.2
SINGLETON_INTRA = 1.0


@dataclass(frozen=True)
class ClassSimilarityMatrix:
    """Symmetric ``c x c`` table of class similarities.

    ``entries[a, a]`` is the average intra-class similarity of class ``a`` and
    ``entries[a, b]`` the average similarity between classes ``a`` and ``b``.
    """

    entries: FloatArray
    class_sizes: IntArray
    epoch: int = 0

    @property
    def num_classes(self) -> int:
        return int(self.entries.shape[0])

    def intra(self) -> FloatArray:
        return np.asarray(np.diag(self.entries).copy())

    def inter_pairs(self) -> tuple[IntArray, IntArray, FloatArray]:
        """Upper-triangle ``(a, b, S_ab)`` in row-major order."""
        rows, cols = np.triu_indices(self.num_classes, k=1)
        return rows.astype(np.int64), cols.astype(np.int64), np.asarray(self.entries[rows, cols])


@dataclass(frozen=True)
class RescaledSet:
    """Values mapped into ``[0, 0.2]`` together with the source ordering."""

    values: FloatArray
    source_order: IntArray


def _class_members(labels: IntArray, num_classes: int) -> list[IntArray]:
    members = [np.flatnonzero(labels == a) for a in range(num_classes)]
    for a, idx in enumerate(members):
        if idx.size == 0:
            raise EmptyClassError(f"class {a} has no samples")
    return members


def _prepare(embeddings: FloatArray | Sequence[Sequence[float]], labels: Sequence[int] | IntArray) -> tuple[FloatArray, IntArray]:
    z = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or y.ndim != 1 or z.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"{z.shape[0] if z.ndim else 0} embeddings vs {y.shape[0] if y.ndim else 0} labels")
    return z, y


def class_similarity_matrix(
    embeddings: FloatArray | Sequence[Sequence[float]],
    labels: Sequence[int] | IntArray,
    kind: SimilarityKind,
    *,
    num_classes: int | None = None,
    epoch: int = 0,
) -> ClassSimilarityMatrix:
    """Average intra/inter class similarities of the embeddings.

    Parameters
    ----------
    embeddings : array of shape (n, d)
        Model outputs, one row per sample.
    labels : array of shape (n,)
        Class ids in ``[0, c)``.
    kind : SimilarityKind
        Similarity used for every pair.
    num_classes : int, optional
        ``c``; defaults to ``max(labels) + 1``.
    epoch : int
        Version stamp carried into the margin table.

    Returns
    -------
    ClassSimilarityMatrix
        Singleton classes get ``S_aa = 1.0``.

    Raises
    ------
    EmptyClassError
        If some class in ``[0, c)`` has no samples.
    """
    z, y = _prepare(embeddings, labels)
    c = int(num_classes if num_classes is not None else (y.max() + 1 if y.size else 0))
    members = _class_members(y, c)
    sim, _ = similarity_matrix(z, kind)

    entries = np.empty((c, c), dtype=np.float64)
    sizes = np.array([idx.size for idx in members], dtype=np.int64)
    for a in range(c):
        ia = members[a]
        n_a = ia.size
        if n_a == 1:
            logger.warning(f"class {a} is a singleton; using intra-similarity {SINGLETON_INTRA}")
            entries[a, a] = SINGLETON_INTRA
        else:
            block = sim[np.ix_(ia, ia)]
            upper = block[np.triu_indices(n_a, k=1)]
            entries[a, a] = 2.0 * float(np.sum(upper)) / (n_a * n_a - n_a)
        for b in range(a + 1, c):
            ib = members[b]
            value = float(np.sum(sim[np.ix_(ia, ib)])) / (n_a * ib.size)
            entries[a, b] = value
            entries[b, a] = value
    return ClassSimilarityMatrix(entries=entries, class_sizes=sizes, epoch=epoch)


def rescale_to_unit_fifth(values: Sequence[float] | FloatArray) -> RescaledSet:
    """Affine map ``v -> 0.2 (v - min) / (max - min)``.

    A degenerate set (all values equal, including a single value) maps to zeros.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot rescale an empty set")
    order = np.argsort(v, kind="stable").astype(np.int64)
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        return RescaledSet(values=np.zeros_like(v), source_order=order)
    return RescaledSet(values=RESCALE_TOP * (v - lo) / (hi - lo), source_order=order)


def _intra_extreme(
    embeddings: FloatArray | Sequence[Sequence[float]],
    labels: Sequence[int] | IntArray,
    class_id: int,
    kind: SimilarityKind,
    reducer: str,
) -> float:
    z, y = _prepare(embeddings, labels)
    idx = np.flatnonzero(y == class_id)
    if idx.size == 0:
        raise EmptyClassError(f"class {class_id} has no samples")
    if idx.size == 1:
        return SINGLETON_INTRA
    sim, _ = similarity_matrix(z[idx], kind)
    upper = sim[np.triu_indices(idx.size, k=1)]
    return float(upper.min() if reducer == "min" else upper.max())


def min_intra_similarity(
    embeddings: FloatArray | Sequence[Sequence[float]],
    labels: Sequence[int] | IntArray,
    class_id: int,
    kind: SimilarityKind,
) -> float:
    """Smallest similarity over unordered pairs of ``class_id``; ``1.0`` for singletons."""
    return _intra_extreme(embeddings, labels, class_id, kind, "min")


def max_intra_similarity(
    embeddings: FloatArray | Sequence[Sequence[float]],
    labels: Sequence[int] | IntArray,
    class_id: int,
    kind: SimilarityKind,
) -> float:
    """Largest similarity over unordered pairs of ``class_id``; ``1.0`` for singletons."""
    return _intra_extreme(embeddings, labels, class_id, kind, "max")


def subsample_per_class(labels: IntArray, cap: int, rng: np.random.Generator) -> IntArray:
    """Sorted sample indices keeping at most ``cap`` samples of every class."""
    keep: list[IntArray] = []
    for a in np.unique(labels):
        idx = np.flatnonzero(labels == a)
        if idx.size > cap:
            idx = np.sort(rng.choice(idx, size=cap, replace=False))
        keep.append(idx)
    return np.sort(np.concatenate(keep)).astype(np.int64) if keep else np.zeros(0, dtype=np.int64)
