"""Pair-based metric losses with analytic gradients.

Every batch loss works in similarity semantics: larger ``s_ij`` means more
alike. A loss is evaluated in two stages: a core on the similarity matrix
returning ``(value, dL/dS)``, and the geometry backward that carries ``dL/dS``
to the embeddings.

Augmented samples only ever sit in their own anchor's augmentation set; they
are neither anchors nor members of any positive or negative set.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._typing import BoolArray, FloatArray, IntArray
from .errors import DimensionMismatchError, EmptyBatchError, StaleMarginTableError
from .geometry import SimilarityKind, similarity_backward, similarity_matrix
from .margins import MarginTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MsHyperParams:
    """Scales of the augmentation, positive and negative terms."""

    scale_aug: float = 2.0
    scale_pos: float = 2.0
    scale_neg: float = 40.0

    def __post_init__(self) -> None:
        if not (self.scale_aug > 0 and self.scale_pos > 0 and self.scale_neg > 0):
            raise ValueError("multi-similarity scales must be strictly positive")


@dataclass(frozen=True)
class PairSets:
    """Index sets of one anchor."""

    anchor_index: int
    aug_set: IntArray
    pos_set: IntArray
    neg_set: IntArray


@dataclass(frozen=True)
class EmbeddingBatch:
    """A mini-batch of embeddings.

    ``aug_parent[j]`` is ``-1`` for an original sample and otherwise the batch
    index of the original sample ``j`` was augmented from.
    """

    embeddings: FloatArray
    labels: IntArray
    aug_parent: IntArray

    def __post_init__(self) -> None:
        n = self.embeddings.shape[0]
        if self.embeddings.ndim != 2 or self.labels.shape != (n,) or self.aug_parent.shape != (n,):
            raise DimensionMismatchError("embeddings, labels and aug_parent disagree in length")
        parents = self.aug_parent[self.aug_parent >= 0]
        if parents.size and (np.any(parents >= n) or np.any(self.aug_parent[parents] >= 0)):
            raise ValueError("augmentations must point at original samples of the batch")
        if parents.size and np.any(self.labels[self.aug_parent >= 0] != self.labels[parents]):
            raise ValueError("augmentations must carry their anchor's label")

    @classmethod
    def plain(cls, embeddings: FloatArray, labels: IntArray | list[int]) -> "EmbeddingBatch":
        """Batch without augmentations."""
        z = np.asarray(embeddings, dtype=np.float64)
        return cls(z, np.asarray(labels, dtype=np.int64), np.full(z.shape[0], -1, dtype=np.int64))

    def with_embeddings(self, embeddings: FloatArray) -> "EmbeddingBatch":
        return EmbeddingBatch(np.asarray(embeddings, dtype=np.float64), self.labels, self.aug_parent)

    @property
    def anchors(self) -> IntArray:
        return np.flatnonzero(self.aug_parent < 0).astype(np.int64)

    def pair_masks(self) -> tuple[BoolArray, BoolArray, BoolArray]:
        """``(aug, pos, neg)`` boolean ``n x n`` masks; row ``i`` is anchor ``i``."""
        n = self.labels.shape[0]
        original = self.aug_parent < 0
        both = original[:, None] & original[None, :]
        same = self.labels[:, None] == self.labels[None, :]
        pos = both & same & ~np.eye(n, dtype=bool)
        neg = both & ~same
        aug = self.aug_parent[None, :] == np.arange(n)[:, None]
        return aug, pos, neg

    def pair_sets(self, anchor: int) -> PairSets:
        aug, pos, neg = self.pair_masks()
        return PairSets(
            anchor_index=anchor,
            aug_set=np.flatnonzero(aug[anchor]).astype(np.int64),
            pos_set=np.flatnonzero(pos[anchor]).astype(np.int64),
            neg_set=np.flatnonzero(neg[anchor]).astype(np.int64),
        )


@dataclass(frozen=True)
class LossResult:
    """Loss value, gradient per embedding, and the hinge activity pattern.

    ``active`` is ``None`` for smooth losses; hinge losses record which hinge
    terms are positive so that kink crossings can be detected.
    """

    value: float
    grads: FloatArray
    active: BoolArray | None = None


def _require_anchors(batch: EmbeddingBatch) -> int:
    n_anchors = int(batch.anchors.size)
    if n_anchors == 0:
        raise EmptyBatchError("batch has no anchors")
    return n_anchors


def _check_table(margins: MarginTable, batch: EmbeddingBatch, epoch: int | None) -> None:
    if epoch is not None and margins.epoch != epoch:
        raise StaleMarginTableError(f"margin table is from epoch {margins.epoch}, current epoch is {epoch}")
    if batch.labels.size and int(batch.labels.max()) >= margins.num_classes:
        raise DimensionMismatchError(f"label {int(batch.labels.max())} outside a {margins.num_classes}-class margin table")


def _with_embedding_grads(
    batch: EmbeddingBatch,
    kind: SimilarityKind,
    core: Callable[[FloatArray], tuple[float, FloatArray, BoolArray | None]],
) -> LossResult:
    sim, cache = similarity_matrix(batch.embeddings, kind)
    value, grad_sim, active = core(sim)
    grads = similarity_backward(cache, grad_sim)
    return LossResult(value=float(value), grads=grads, active=active)


def _soft_sum(x: FloatArray, mask: BoolArray) -> tuple[FloatArray, FloatArray]:
    """Row-wise ``log(1 + sum_{mask} e^x)`` and its softmax weights."""
    z = np.where(mask, x, -np.inf)
    padded = np.concatenate([np.zeros((z.shape[0], 1)), z], axis=1)
    lse = logsumexp(padded, axis=1)
    weights = np.where(mask, np.exp(z - lse[:, None]), 0.0)
    return np.asarray(lse), np.asarray(weights)


def _masked_lse(x: FloatArray, mask: BoolArray) -> tuple[FloatArray, FloatArray, BoolArray]:
    """Row-wise ``log sum_{mask} e^x`` for rows with a non-empty mask."""
    has = mask.any(axis=1)
    z = np.where(mask, x, -np.inf)
    z[~has] = 0.0
    lse = logsumexp(z, axis=1)
    weights = np.where(mask, np.exp(z - lse[:, None]), 0.0)
    lse = np.where(has, lse, 0.0)
    return np.asarray(lse), np.asarray(weights), has


def _ms_core(
    sim: FloatArray,
    batch: EmbeddingBatch,
    m_pos: FloatArray,
    m_neg: FloatArray,
    hp: MsHyperParams,
    m_aug: FloatArray | None,
) -> tuple[float, FloatArray, None]:
    n_anchors = _require_anchors(batch)
    aug, pos, neg = batch.pair_masks()

    pos_lse, pos_w = _soft_sum(-hp.scale_pos * (sim - m_pos), pos)
    neg_lse, neg_w = _soft_sum(hp.scale_neg * (sim - m_neg), neg)
    per_anchor = pos_lse / hp.scale_pos + neg_lse / hp.scale_neg
    grad = neg_w - pos_w
    if m_aug is not None:
        aug_lse, aug_w = _soft_sum(-hp.scale_aug * (sim - m_aug), aug)
        per_anchor = per_anchor + aug_lse / hp.scale_aug
        grad = grad - aug_w
    value = float(np.sum(per_anchor)) / n_anchors
    return value, grad / n_anchors, None


def triplet_loss(s_ap: float, s_an: float, margin: float) -> LossResult:
    """Single-triplet hinge ``[s_an - s_ap + margin]_+``.

    ``grads`` holds ``(dL/ds_ap, dL/ds_an)``; the subgradient at the kink is 0.
    """
    value = s_an - s_ap + margin
    if value > 0:
        return LossResult(value=float(value), grads=np.array([-1.0, 1.0]), active=np.array([True]))
    return LossResult(value=0.0, grads=np.zeros(2), active=np.array([False]))


def _triplet_core(
    sim: FloatArray,
    batch: EmbeddingBatch,
    margin: FloatArray,
    aug_margin: FloatArray | None,
) -> tuple[float, FloatArray, BoolArray]:
    """All in-batch triplets plus optional augmentation hinges, averaged over active terms.

    ``margin[a, n]`` is the margin of any triplet with anchor ``a`` and negative ``n``.
    """
    _require_anchors(batch)
    aug, pos, neg = batch.pair_masks()
    hinge = (sim[:, None, :] - sim[:, :, None]) + margin[:, None, :]
    valid = pos[:, :, None] & neg[:, None, :]
    active = valid & (hinge > 0)
    terms = [hinge[active]]
    patterns = [active[valid]]
    aug_active = np.zeros_like(aug)
    if aug_margin is not None:
        aug_hinge = aug_margin - sim
        aug_active = aug & (aug_hinge > 0)
        terms.append(aug_hinge[aug_active])
        patterns.append(aug_active[aug])
    count = int(sum(t.size for t in terms))
    grad = np.zeros_like(sim)
    if count == 0:
        return 0.0, grad, np.concatenate(patterns)
    value = float(sum(float(np.sum(t)) for t in terms)) / count
    weight = active.astype(np.float64)
    grad += weight.sum(axis=1) / count
    grad -= weight.sum(axis=2) / count
    grad -= aug_active.astype(np.float64) / count
    return value, grad, np.concatenate(patterns)


def batch_triplet_loss(batch: EmbeddingBatch, margin: float, kind: SimilarityKind) -> LossResult:
    """Fixed-margin triplet loss over every in-batch ``(anchor, positive, negative)``."""
    n = batch.labels.shape[0]
    margins = np.full((n, n), float(margin))
    return _with_embedding_grads(batch, kind, lambda sim: _triplet_core(sim, batch, margins, None))


def triplet_star_loss(
    batch: EmbeddingBatch,
    margins: MarginTable,
    kind: SimilarityKind,
    triplet_margin: float = 0.5,
    *,
    epoch: int | None = None,
) -> LossResult:
    """Triplet loss with hierarchical margins.

    The triplet margin becomes ``(M_p[c_a] - gamma) + (gamma - M_n[c_a, c_n]) + triplet_margin``
    and every augmentation adds the hinge ``[M_a[c_a] - s_a,aug]_+``.
    """
    _check_table(margins, batch, epoch)
    y = batch.labels
    g = margins.gamma
    offset = (margins.m_pos[y][:, None] - g) + (g - margins.m_neg[np.ix_(y, y)])
    margin = offset + triplet_margin
    aug_margin = np.broadcast_to(margins.m_aug[y][:, None], (y.size, y.size))
    return _with_embedding_grads(batch, kind, lambda sim: _triplet_core(sim, batch, margin, aug_margin))


def _lifted_core(
    sim: FloatArray,
    batch: EmbeddingBatch,
    m_pos: FloatArray,
    m_neg: FloatArray,
    m_aug: FloatArray | None,
) -> tuple[float, FloatArray, BoolArray]:
    n_anchors = _require_anchors(batch)
    aug, pos, neg = batch.pair_masks()
    pos_lse, pos_w, has_pos = _masked_lse(m_pos - sim, pos)
    neg_lse, neg_w, has_neg = _masked_lse(sim - m_neg, neg)
    eligible = has_pos & has_neg
    inner = pos_lse + neg_lse
    hinge_on = eligible & (inner > 0)
    per_anchor = np.where(hinge_on, inner, 0.0)
    grad = hinge_on[:, None] * (neg_w - pos_w)
    patterns = [hinge_on[eligible]]
    if m_aug is not None:
        aug_lse, aug_w, has_aug = _masked_lse(m_aug - sim, aug)
        aug_on = has_aug & (aug_lse > 0)
        per_anchor = per_anchor + np.where(aug_on, aug_lse, 0.0)
        grad = grad - aug_on[:, None] * aug_w
        patterns.append(aug_on[has_aug])
    value = float(np.sum(per_anchor)) / n_anchors
    return value, grad / n_anchors, np.concatenate(patterns)


def lifted_loss(
    batch: EmbeddingBatch,
    margin: float | MarginTable,
    kind: SimilarityKind,
    *,
    epoch: int | None = None,
) -> LossResult:
    """Lifted-structure loss, averaged over anchors.

    Each anchor contributes ``[log sum_P e^{M_p - s} + log sum_N e^{s - M_n}]_+``;
    anchors without a positive or a negative contribute zero. With a float
    margin ``M_p = M_n = margin``; with a ``MarginTable`` the class margins are
    used and each anchor with augmentations adds ``[log sum_A e^{M_a - s}]_+``.
    """
    y = batch.labels
    n = y.size
    if isinstance(margin, MarginTable):
        _check_table(margin, batch, epoch)
        m_pos = np.broadcast_to(margin.m_pos[y][:, None], (n, n))
        m_neg = margin.m_neg[np.ix_(y, y)]
        m_aug: FloatArray | None = np.broadcast_to(margin.m_aug[y][:, None], (n, n))
    else:
        m_pos = np.full((n, n), float(margin))
        m_neg = m_pos
        m_aug = None
    return _with_embedding_grads(batch, kind, lambda sim: _lifted_core(sim, batch, m_pos, m_neg, m_aug))


def ms_loss(batch: EmbeddingBatch, gamma: float, scale_pos: float, scale_neg: float, kind: SimilarityKind) -> LossResult:
    """Multi-similarity loss with a fixed threshold ``gamma``, averaged over anchors."""
    n = batch.labels.size
    hp = MsHyperParams(scale_aug=scale_pos, scale_pos=scale_pos, scale_neg=scale_neg)
    fixed = np.full((n, n), float(gamma))
    return _with_embedding_grads(batch, kind, lambda sim: _ms_core(sim, batch, fixed, fixed, hp, None))


def ms_star_loss(
    batch: EmbeddingBatch,
    margins: MarginTable,
    hp: MsHyperParams,
    kind: SimilarityKind,
    *,
    epoch: int | None = None,
) -> LossResult:
    """Multi-similarity loss with hierarchical margins ``{M_a, M_p, M_n}``.

    Raises
    ------
    StaleMarginTableError
        If ``epoch`` is given and differs from the table's epoch.
    """
    _check_table(margins, batch, epoch)
    y = batch.labels
    n = y.size
    m_pos = np.broadcast_to(margins.m_pos[y][:, None], (n, n))
    m_neg = margins.m_neg[np.ix_(y, y)]
    m_aug = np.broadcast_to(margins.m_aug[y][:, None], (n, n))
    return _with_embedding_grads(batch, kind, lambda sim: _ms_core(sim, batch, m_pos, m_neg, hp, m_aug))


LossOp = Callable[[EmbeddingBatch], LossResult]


def _same_pattern(a: BoolArray | None, b: BoolArray | None) -> bool:
    if a is None or b is None:
        return True
    return a.shape == b.shape and bool(np.array_equal(a, b))


def finite_difference_check(
    loss_op: LossOp,
    batch: EmbeddingBatch,
    eps: float = 1e-5,
    *,
    min_grad: float = 1e-8,
    scale_floor: float = 1e-5,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Coordinates whose analytic gradient is below ``min_grad`` are skipped, as are
    coordinates where a perturbation of up to ``10 * eps`` changes the hinge
    activity pattern. The error of one coordinate is
    ``|a - n| / max(|a|, |n|, scale_floor)``.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    base = loss_op(batch)
    z0 = np.array(batch.embeddings, dtype=np.float64, copy=True)
    worst = 0.0
    for i in range(z0.shape[0]):
        for k in range(z0.shape[1]):
            analytic = float(base.grads[i, k])
            if abs(analytic) <= min_grad:
                continue
            shifted = {}
            for step in (eps, -eps, 10 * eps, -10 * eps):
                z = z0.copy()
                z[i, k] += step
                shifted[step] = loss_op(batch.with_embeddings(z))
            if not all(_same_pattern(base.active, r.active) for r in shifted.values()):
                continue
            numeric = (shifted[eps].value - shifted[-eps].value) / (2 * eps)
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), scale_floor)
            worst = max(worst, err)
    return worst
