"""Per-epoch training loop.

Each epoch first embeds the training split in evaluation mode, turns the class
statistics into that epoch's margin table, then runs class-balanced
mini-batches (originals plus one weak and one strong view each) through the
selected loss and Adam.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .._typing import FloatArray, IntArray
from ..class_stats import class_similarity_matrix, subsample_per_class
from ..dataio import FeatureSplit
from ..errors import StaleMarginTableError, UnsatisfiableBatchSpecError
from ..geometry import SimilarityKind
from ..losses import (
    EmbeddingBatch,
    LossOp,
    MsHyperParams,
    batch_triplet_loss,
    lifted_loss,
    ms_loss,
    ms_star_loss,
    triplet_star_loss,
)
from ..margins import Consistency, InterTransform, MarginTable, build_margin_table
from ..perturb import AugmentPolicy, NoiseSpec, augment_pair
from .model import MlpModel
from .optim import AdamState, adam_step

logger = logging.getLogger(__name__)

LossName = Literal["triplet", "lifted", "ms"]
MarginMode = Literal["fixed", "hierarchical"]

SAMPLER_STREAM = 2
STATS_STREAM = 3


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run besides the data."""

    epochs: int = 30
    classes_per_batch: int = 4
    samples_per_class: int = 4
    gamma: float = 0.5
    ms: MsHyperParams = field(default_factory=MsHyperParams)
    triplet_margin: float = 0.1
    kind: SimilarityKind = field(default_factory=SimilarityKind.cosine)
    augment: AugmentPolicy | None = None
    weak_scale: float = 0.05
    strong_factor: float = 3.0
    strong_mask_frac: float = 0.25
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    loss: LossName = "ms"
    margin_mode: MarginMode = "hierarchical"
    class_divergence: bool = True
    sample_consistency: bool = True
    lr: float = 1e-3
    weight_decay: float = 1e-5
    hidden_widths: tuple[int, ...] = (128,)
    output_dim: int = 32
    stats_cap: int = 256
    inter_transform: InterTransform = field(default_factory=InterTransform)
    consistency: Consistency = "min"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.classes_per_batch < 2:
            raise ValueError("classes_per_batch must be at least 2 so batches hold negatives")
        if self.samples_per_class < 2:
            raise ValueError("samples_per_class must be at least 2 so batches hold positives")
        if self.stats_cap < 2:
            raise ValueError("stats_cap must be at least 2")

    @property
    def batch_size(self) -> int:
        return self.classes_per_batch * self.samples_per_class

    @property
    def attaches_augmentations(self) -> bool:
        return self.margin_mode == "hierarchical" and self.sample_consistency

    @property
    def loss_label(self) -> str:
        """``ms`` for the fixed-margin baseline, ``ms*`` for the hierarchical form."""
        return self.loss + ("*" if self.margin_mode == "hierarchical" else "")

    def widths(self, input_dim: int) -> list[int]:
        return [input_dim, *self.hidden_widths, self.output_dim]


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    batches: int


@dataclass(frozen=True)
class EpochRecord:
    """One history entry of ``fit``.

    ``mean_loss`` is measured under the epoch's own margin table, so in
    hierarchical mode it moves with the table. ``reference_loss`` scores the
    model after the epoch on the first epoch's batches and table, which stay
    fixed for the whole run.
    """

    epoch: int
    mean_loss: float
    batches: int
    margins: dict[str, float] | None = None
    reference_loss: float | None = None


@dataclass
class _ReferenceSet:
    batches: list[tuple[FloatArray, IntArray, IntArray]]
    loss_op: LossOp

    def mean_loss(self, model: MlpModel) -> float:
        values = [self.loss_op(EmbeddingBatch(model.embed(x), y, p)).value for x, y, p in self.batches]
        return float(np.mean(values))


@dataclass
class FitResult:
    model: MlpModel
    history: list[EpochRecord]


EpochCallback = Callable[[EpochRecord, MarginTable | None], None]


def _stream(seed: int, epoch: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, tag]))


def class_balanced_batches(labels: IntArray, config: TrainConfig, epoch: int) -> list[IntArray]:
    """Positions of every mini-batch of one epoch.

    Each batch draws ``classes_per_batch`` distinct classes and
    ``samples_per_class`` distinct samples of each; an epoch has
    ``max(1, n // batch_size)`` batches.

    Raises
    ------
    UnsatisfiableBatchSpecError
        If fewer than ``classes_per_batch`` classes hold ``samples_per_class`` samples.
    """
    members = {int(a): np.flatnonzero(labels == a) for a in np.unique(labels)}
    eligible = np.array(sorted(a for a, idx in members.items() if idx.size >= config.samples_per_class), dtype=np.int64)
    if eligible.size < config.classes_per_batch:
        raise UnsatisfiableBatchSpecError(
            f"{eligible.size} classes have at least {config.samples_per_class} samples; "
            f"{config.classes_per_batch} are needed per batch"
        )
    rng = _stream(config.seed, epoch, SAMPLER_STREAM)
    n_batches = max(1, labels.size // config.batch_size)
    batches = []
    for _ in range(n_batches):
        chosen = rng.choice(eligible, size=config.classes_per_batch, replace=False)
        picks = [rng.choice(members[int(a)], size=config.samples_per_class, replace=False) for a in chosen]
        batches.append(np.concatenate(picks).astype(np.int64))
    return batches


def assemble_batch(
    data: FeatureSplit, positions: IntArray, policy: AugmentPolicy | None, seed: int, epoch: int
) -> tuple[FloatArray, IntArray, IntArray]:
    """Model inputs, labels and ``aug_parent`` of one batch.

    With a policy, the originals are followed by their weak views and then by
    their strong views; augmentation streams are keyed by the dataset index.
    """
    x = data.features[positions]
    y = data.labels[positions]
    m = positions.size
    if policy is None:
        return x, y, np.full(m, -1, dtype=np.int64)
    views = [augment_pair(x[k], policy, seed, int(data.indices[positions[k]]), epoch) for k in range(m)]
    weak = np.stack([v[0] for v in views])
    strong = np.stack([v[1] for v in views])
    parents = np.concatenate([np.full(m, -1), np.arange(m), np.arange(m)]).astype(np.int64)
    return np.concatenate([x, weak, strong]), np.concatenate([y, y, y]), parents


def epoch_margin_table(model: MlpModel, data: FeatureSplit, config: TrainConfig, epoch: int) -> MarginTable:
    """Statistics pass of one epoch, run on an evaluation-mode embedding."""
    rng = _stream(config.seed, epoch, STATS_STREAM)
    idx = subsample_per_class(data.labels, config.stats_cap, rng)
    z = model.embed(data.features[idx])
    present, y = np.unique(data.labels[idx], return_inverse=True)
    stats = class_similarity_matrix(z, y, config.kind, num_classes=present.size, epoch=epoch)
    table = build_margin_table(
        stats, z, y, config.gamma, config.kind, config.inter_transform, consistency=config.consistency
    )
    if present.size < data.num_classes:
        # label noise can empty a class; it keeps the base margin
        missing = sorted(set(range(data.num_classes)) - set(present.tolist()))
        logger.warning(f"epoch {epoch}: classes {missing} have no training samples")
        table = _scatter_table(table, present, data.num_classes)
    if not config.class_divergence:
        table = table.collapse_class_divergence()
    return table


def _scatter_table(table: MarginTable, present: IntArray, num_classes: int) -> MarginTable:
    full = MarginTable.baseline(num_classes, table.gamma, table.epoch)
    m_pos = np.array(full.m_pos)
    m_neg = np.array(full.m_neg)
    m_aug = np.array(full.m_aug)
    m_pos[present] = table.m_pos
    m_neg[np.ix_(present, present)] = table.m_neg
    m_aug[present] = table.m_aug
    return MarginTable(m_pos, m_neg, m_aug, table.gamma, table.epoch, table.inter_transform)


def select_loss(config: TrainConfig, margins: MarginTable | None, epoch: int) -> LossOp:
    """The batch loss of ``config`` bound to this epoch's margins."""
    kind = config.kind
    if config.margin_mode == "fixed":
        if config.loss == "triplet":
            return lambda b: batch_triplet_loss(b, config.triplet_margin, kind)
        if config.loss == "lifted":
            return lambda b: lifted_loss(b, config.gamma, kind)
        return lambda b: ms_loss(b, config.gamma, config.ms.scale_pos, config.ms.scale_neg, kind)

    if margins is None:
        raise StaleMarginTableError(f"hierarchical training at epoch {epoch} needs a margin table")
    table = margins
    if config.loss == "triplet":
        return lambda b: triplet_star_loss(b, table, kind, config.triplet_margin, epoch=epoch)
    if config.loss == "lifted":
        return lambda b: lifted_loss(b, table, kind, epoch=epoch)
    return lambda b: ms_star_loss(b, table, config.ms, kind, epoch=epoch)


def train_epoch(
    model: MlpModel,
    data: FeatureSplit,
    margins: MarginTable | None,
    config: TrainConfig,
    epoch: int,
    optimizer: AdamState,
    policy: AugmentPolicy | None,
) -> EpochStats:
    """One pass of class-balanced mini-batches; updates ``model`` in place.

    Raises
    ------
    StaleMarginTableError
        If hierarchical training gets no table or a table from another epoch.
    UnsatisfiableBatchSpecError
        If the split cannot fill a batch.
    """
    loss_op = select_loss(config, margins, epoch)
    attach = policy if config.attaches_augmentations else None
    batches = class_balanced_batches(data.labels, config, epoch)
    losses = []
    for b, positions in enumerate(batches):
        inputs, labels, parents = assemble_batch(data, positions, attach, config.seed, epoch)
        z = model.forward(inputs)
        result = loss_op(EmbeddingBatch(z, labels, parents))
        layer_grads = model.backward(result.grads)
        grads = [g for pair in layer_grads for g in pair]
        model.set_parameters(adam_step(optimizer, model.parameters(), grads))
        losses.append(result.value)
        logger.debug(f"epoch {epoch} batch {b}: loss {result.value:.6f}")
    return EpochStats(epoch=epoch, mean_loss=float(np.mean(losses)), batches=len(batches))


def _reference_set(
    data: FeatureSplit, table: MarginTable | None, config: TrainConfig, epoch: int, policy: AugmentPolicy
) -> _ReferenceSet:
    attach = policy if config.attaches_augmentations else None
    batches = [assemble_batch(data, positions, attach, config.seed, epoch) for positions in class_balanced_batches(data.labels, config, epoch)]
    return _ReferenceSet(batches=batches, loss_op=select_loss(config, table, epoch))


def fit(model: MlpModel, data: FeatureSplit, config: TrainConfig, *, on_epoch_end: EpochCallback | None = None) -> FitResult:
    """Train ``model`` for ``config.epochs`` epochs, numbered from 1.

    Parameters
    ----------
    model : MlpModel
        Updated in place and returned in the result.
    data : FeatureSplit
        Training split; its labels may be noisy.
    config : TrainConfig
        Loss, margins, batching and optimizer settings.
    on_epoch_end : callable, optional
        Called with the epoch record and the margin table used.

    Returns
    -------
    FitResult
        The model and one history record per epoch.
    """
    policy = config.augment or AugmentPolicy.from_features(
        data.features, config.weak_scale, config.strong_factor, config.strong_mask_frac
    )
    optimizer = AdamState.for_params(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    history: list[EpochRecord] = []
    reference: _ReferenceSet | None = None
    for epoch in range(1, config.epochs + 1):
        table = epoch_margin_table(model, data, config, epoch) if config.margin_mode == "hierarchical" else None
        if reference is None:
            reference = _reference_set(data, table, config, epoch, policy)
        stats = train_epoch(model, data, table, config, epoch, optimizer, policy)
        record = EpochRecord(
            epoch=epoch,
            mean_loss=stats.mean_loss,
            batches=stats.batches,
            margins=table.summary() if table else None,
            reference_loss=reference.mean_loss(model),
        )
        history.append(record)
        logger.info(
            f"epoch {epoch}/{config.epochs} [{config.loss_label}]: loss {stats.mean_loss:.6f} over {stats.batches} batches, "
            f"reference {record.reference_loss:.6f}"
        )
        if on_epoch_end is not None:
            on_epoch_end(record, table)
    return FitResult(model=model, history=history)
