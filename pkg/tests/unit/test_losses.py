"""Tests for the metric losses and their analytic gradients."""

import math

import numpy as np
import pytest

from hsim_dml.errors import DimensionMismatchError, EmptyBatchError, StaleMarginTableError
from hsim_dml.geometry import SimilarityKind
from hsim_dml.losses import (
    EmbeddingBatch,
    MsHyperParams,
    _ms_core,
    batch_triplet_loss,
    finite_difference_check,
    lifted_loss,
    ms_loss,
    ms_star_loss,
    triplet_loss,
    triplet_star_loss,
)
from hsim_dml.margins import MarginTable

pytestmark = pytest.mark.unit

COSINE = SimilarityKind.cosine()
POINCARE = SimilarityKind.poincare(1.0)
KINDS = [COSINE, POINCARE]


def random_table(rng, num_classes, gamma=0.5, epoch=0):
    m_neg = np.full((num_classes, num_classes), gamma)
    rows, cols = np.triu_indices(num_classes, k=1)
    offsets = rng.uniform(0.0, 0.2, size=rows.size)
    m_neg[rows, cols] = gamma - offsets
    m_neg[cols, rows] = gamma - offsets
    return MarginTable(
        m_pos=gamma + rng.uniform(0.0, 0.2, size=num_classes),
        m_neg=m_neg,
        m_aug=rng.uniform(0.3, 0.9, size=num_classes),
        gamma=gamma,
        epoch=epoch,
    )


def unit(angle):
    return [math.cos(angle), math.sin(angle)]


class TestEmbeddingBatch:
    def test_pair_sets_exclude_augmentations(self, rng, batch_factory):
        batch = batch_factory(rng, n_classes=2, per_class=2)
        sets = batch.pair_sets(0)
        assert sets.aug_set.tolist() == [4]
        assert sets.pos_set.tolist() == [1]
        assert sets.neg_set.tolist() == [2, 3]
        assert batch.anchors.tolist() == [0, 1, 2, 3]

    def test_augmentation_must_point_at_original(self):
        with pytest.raises(ValueError):
            EmbeddingBatch(np.zeros((3, 2)), np.zeros(3, dtype=np.int64), np.array([-1, 0, 1]))

    def test_augmentation_keeps_label(self):
        with pytest.raises(ValueError):
            EmbeddingBatch(np.zeros((2, 2)), np.array([0, 1]), np.array([-1, 0]))

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            EmbeddingBatch(np.zeros((3, 2)), np.zeros(2, dtype=np.int64), np.full(3, -1))


class TestTripletLoss:
    def test_satisfied(self):
        assert triplet_loss(0.8, 0.3, 0.2).value == 0.0

    def test_violated(self):
        result = triplet_loss(0.3, 0.8, 0.2)
        assert result.value == pytest.approx(0.7)
        assert result.grads.tolist() == [-1.0, 1.0]

    def test_kink_subgradient(self):
        result = triplet_loss(0.5, 0.3, 0.2)
        assert result.value == 0.0
        assert result.grads.tolist() == [0.0, 0.0]

    def test_batch_averages_active_terms(self):
        batch = EmbeddingBatch.plain(np.array([[1.0, 0.0], unit(math.acos(0.9)), unit(-math.acos(0.1))]), [0, 0, 1])
        # anchor 0: 0.1 - 0.9 + 1.0 = 0.2; anchor 1: s_12 - 0.9 + 1.0 is negative
        result = batch_triplet_loss(batch, 1.0, COSINE)
        assert result.value == pytest.approx(0.2, abs=1e-12)
        assert result.active.tolist() == [True, False]


class TestTripletStarLoss:
    TABLE = MarginTable(
        m_pos=np.array([0.7, 0.7]),
        m_neg=np.array([[0.5, 0.3], [0.3, 0.5]]),
        m_aug=np.array([0.7, 0.7]),
        gamma=0.5,
        epoch=1,
    )

    def test_worked_example(self):
        batch = EmbeddingBatch.plain(np.array([[1.0, 0.0], unit(math.acos(0.9)), unit(-math.acos(0.1))]), [0, 0, 1])
        result = triplet_star_loss(batch, self.TABLE, COSINE, epoch=1)
        assert result.value == pytest.approx(0.1, abs=1e-12)

    def test_augmentation_hinge(self):
        z = np.array([[1.0, 0.0], [0.0, 1.0], unit(math.acos(0.5))])
        batch = EmbeddingBatch(z, np.array([0, 1, 0]), np.array([-1, -1, 0]))
        # no positives; the only term is the augmentation hinge 0.7 - 0.5
        result = triplet_star_loss(batch, self.TABLE, COSINE)
        assert result.value == pytest.approx(0.2, abs=1e-12)

    def test_stale_table(self):
        batch = EmbeddingBatch.plain(np.eye(2), [0, 1])
        with pytest.raises(StaleMarginTableError):
            triplet_star_loss(batch, self.TABLE, COSINE, epoch=2)

    def test_label_outside_table(self):
        batch = EmbeddingBatch.plain(np.eye(3), [0, 1, 2])
        with pytest.raises(DimensionMismatchError):
            triplet_star_loss(batch, self.TABLE, COSINE)


class TestLiftedLoss:
    def test_worked_example(self):
        batch = EmbeddingBatch.plain(np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]), [0, 0, 1])
        assert lifted_loss(batch, 0.0, COSINE).value == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_anchor_without_negatives_contributes_zero(self):
        batch = EmbeddingBatch.plain(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 0])
        result = lifted_loss(batch, 0.5, COSINE)
        assert result.value == 0.0
        assert np.all(result.grads == 0.0)

    def test_class_margins(self, rng):
        table = random_table(rng, 2)
        z = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        batch = EmbeddingBatch.plain(z, [0, 0, 1])
        # anchor 0: [(M_p0 - 0) + (-1 - M_n01)]_+ ; anchor 1: [(M_p0 - 0) + (0 - M_n01)]_+
        first = max(0.0, table.m_pos[0] - 1.0 - table.m_neg[0, 1])
        second = max(0.0, table.m_pos[0] - table.m_neg[0, 1])
        expected = (first + second) / 3.0
        assert lifted_loss(batch, table, COSINE).value == pytest.approx(expected, abs=1e-12)


class TestMsLoss:
    def test_worked_example(self):
        batch = EmbeddingBatch.plain(np.array([[1.0, 0.0], [0.5, math.sqrt(3) / 2]]), [0, 0])
        assert ms_loss(batch, 0.5, 2.0, 40.0, COSINE).value == pytest.approx(0.5 * math.log(2), abs=1e-12)

    def test_single_negative_pair(self):
        batch = EmbeddingBatch.plain(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1])
        expected = math.log(1 + math.exp(40 * (0.0 - 0.1))) / 40
        assert ms_loss(batch, 0.1, 2.0, 40.0, COSINE).value == pytest.approx(expected, rel=1e-12)

    def test_star_with_augmentation(self, rng):
        table = random_table(rng, 2)
        z = np.array([[1.0, 0.0], [0.0, 1.0], unit(math.acos(0.6))])
        batch = EmbeddingBatch(z, np.array([0, 1, 0]), np.array([-1, -1, 0]))
        hp = MsHyperParams()
        neg = math.log(1 + math.exp(40 * (0.0 - table.m_neg[0, 1]))) / 40
        aug = math.log(1 + math.exp(-2 * (0.6 - table.m_aug[0]))) / 2
        expected = (2 * neg + aug) / 2
        assert ms_star_loss(batch, table, hp, COSINE).value == pytest.approx(expected, rel=1e-10)

    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            ms_loss(EmbeddingBatch.plain(np.zeros((0, 3)), []), 0.5, 2.0, 40.0, COSINE)

    def test_rejects_non_positive_scales(self):
        with pytest.raises(ValueError):
            MsHyperParams(scale_neg=0.0)

    def test_large_scale_is_finite(self, rng):
        batch = EmbeddingBatch.plain(rng.normal(size=(8, 3)), np.repeat(np.arange(4), 2))
        result = ms_loss(batch, 0.5, 50.0, 400.0, COSINE)
        assert math.isfinite(result.value)
        assert np.all(np.isfinite(result.grads))


class TestReductionIdentity:
    """With collapsed margins and no augmentations each hierarchical loss is its fixed-margin base."""

    def test_ms(self, rng):
        hp = MsHyperParams(scale_aug=2.0, scale_pos=2.0, scale_neg=40.0)
        for _ in range(1000):
            batch = EmbeddingBatch.plain(rng.normal(size=(8, 4)), np.repeat(np.arange(4), 2))
            table = MarginTable.baseline(4, 0.5, epoch=0)
            star = ms_star_loss(batch, table, hp, COSINE)
            base = ms_loss(batch, 0.5, 2.0, 40.0, COSINE)
            assert abs(star.value - base.value) <= 1e-12
            assert np.allclose(star.grads, base.grads, atol=1e-12)

    def test_triplet(self, rng):
        for _ in range(50):
            batch = EmbeddingBatch.plain(rng.normal(size=(8, 4)), np.repeat(np.arange(4), 2))
            star = triplet_star_loss(batch, MarginTable.baseline(4, 0.5, epoch=0), COSINE, triplet_margin=0.2)
            base = batch_triplet_loss(batch, 0.2, COSINE)
            assert star.value == pytest.approx(base.value, abs=1e-12)
            assert np.allclose(star.grads, base.grads, atol=1e-12)

    def test_lifted(self, rng):
        for _ in range(50):
            batch = EmbeddingBatch.plain(rng.normal(size=(8, 4)), np.repeat(np.arange(4), 2))
            star = lifted_loss(batch, MarginTable.baseline(4, 0.5, epoch=0), COSINE)
            base = lifted_loss(batch, 0.5, COSINE)
            assert star.value == pytest.approx(base.value, abs=1e-12)
            assert np.allclose(star.grads, base.grads, atol=1e-12)


class TestMsStarStructure:
    def _margins(self, table, labels):
        n = labels.size
        m_pos = np.broadcast_to(table.m_pos[labels][:, None], (n, n))
        m_neg = table.m_neg[np.ix_(labels, labels)]
        m_aug = np.broadcast_to(table.m_aug[labels][:, None], (n, n))
        return m_pos, m_neg, m_aug

    def test_translation_of_margins_and_similarities(self, rng, batch_factory):
        hp = MsHyperParams()
        for _ in range(200):
            batch = batch_factory(rng)
            m_pos, m_neg, m_aug = self._margins(random_table(rng, 3), batch.labels)
            sim = rng.uniform(-1.0, 1.0, size=(batch.labels.size, batch.labels.size))
            delta = rng.uniform(-0.5, 0.5)
            base, base_grad, _ = _ms_core(sim, batch, m_pos, m_neg, hp, m_aug)
            moved, moved_grad, _ = _ms_core(sim + delta, batch, m_pos + delta, m_neg + delta, hp, m_aug + delta)
            assert abs(moved - base) <= 1e-10
            assert np.allclose(moved_grad, base_grad, atol=1e-10)

    def test_monotone_in_pair_similarities(self, rng, batch_factory):
        hp = MsHyperParams()
        for _ in range(200):
            batch = batch_factory(rng)
            m_pos, m_neg, m_aug = self._margins(random_table(rng, 3), batch.labels)
            sim = rng.uniform(-1.0, 1.0, size=(batch.labels.size, batch.labels.size))
            aug, pos, neg = batch.pair_masks()
            base, _, _ = _ms_core(sim, batch, m_pos, m_neg, hp, m_aug)
            for mask, direction in ((neg, 1.0), (pos, -1.0), (aug, -1.0)):
                rows, cols = np.nonzero(mask)
                if rows.size == 0:
                    continue
                pick = int(rng.integers(rows.size))
                raised = sim.copy()
                raised[rows[pick], cols[pick]] += 0.1
                value, _, _ = _ms_core(raised, batch, m_pos, m_neg, hp, m_aug)
                assert direction * (value - base) >= -1e-12

    def test_monotone_in_margins(self, rng, batch_factory):
        hp = MsHyperParams()
        strict_neg = 0
        for _ in range(100):
            batch = batch_factory(rng)
            table = random_table(rng, 3)
            base = ms_star_loss(batch, table, hp, COSINE).value
            shift = rng.uniform(0.01, 0.1)
            more_pos = MarginTable(table.m_pos + shift, table.m_neg.copy(), table.m_aug.copy(), table.gamma, table.epoch)
            more_neg = MarginTable(table.m_pos.copy(), table.m_neg + shift, table.m_aug.copy(), table.gamma, table.epoch)
            more_aug = MarginTable(table.m_pos.copy(), table.m_neg.copy(), table.m_aug + shift, table.gamma, table.epoch)
            assert ms_star_loss(batch, more_pos, hp, COSINE).value > base
            lowered = ms_star_loss(batch, more_neg, hp, COSINE).value
            assert lowered <= base + 1e-12
            strict_neg += lowered < base
            assert ms_star_loss(batch, more_aug, hp, COSINE).value > base
        # far-off negatives can sit below rounding at scale 40
        assert strict_neg > 50


GRADIENT_BATCHES = 100


class TestGradients:
    @pytest.mark.slow
    @pytest.mark.parametrize("kind", KINDS)
    def test_ms(self, rng, batch_factory, kind):
        for _ in range(GRADIENT_BATCHES):
            batch = batch_factory(rng, with_augs=False)
            assert finite_difference_check(lambda b: ms_loss(b, 0.5, 2.0, 40.0, kind), batch) < 1e-4

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", KINDS)
    def test_ms_star(self, rng, batch_factory, kind):
        for _ in range(GRADIENT_BATCHES):
            batch = batch_factory(rng)
            table = random_table(rng, 3)
            op = lambda b: ms_star_loss(b, table, MsHyperParams(), kind)  # noqa: E731
            assert finite_difference_check(op, batch) < 1e-4

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", KINDS)
    def test_lifted(self, rng, batch_factory, kind):
        for _ in range(GRADIENT_BATCHES):
            batch = batch_factory(rng, with_augs=False)
            assert finite_difference_check(lambda b: lifted_loss(b, 0.5, kind), batch) < 1e-4

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", KINDS)
    def test_lifted_star(self, rng, batch_factory, kind):
        for _ in range(GRADIENT_BATCHES):
            batch = batch_factory(rng)
            table = random_table(rng, 3)
            assert finite_difference_check(lambda b: lifted_loss(b, table, kind), batch) < 1e-4

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", KINDS)
    def test_triplet(self, rng, batch_factory, kind):
        for _ in range(GRADIENT_BATCHES):
            batch = batch_factory(rng, with_augs=False)
            assert finite_difference_check(lambda b: batch_triplet_loss(b, 0.5, kind), batch) < 1e-4

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", KINDS)
    def test_triplet_star(self, rng, batch_factory, kind):
        for _ in range(GRADIENT_BATCHES):
            batch = batch_factory(rng)
            table = random_table(rng, 3)
            assert finite_difference_check(lambda b: triplet_star_loss(b, table, kind), batch) < 1e-4

    def test_zero_embedding_row(self):
        z = np.array([[0.0, 0.0], [1.0, 0.2], [0.3, 1.0], [-1.0, 0.4]])
        labels = np.array([0, 0, 1, 1])
        result = ms_loss(EmbeddingBatch.plain(z, labels), 0.5, 2.0, 40.0, COSINE)
        assert np.all(np.isfinite(result.grads))
        assert np.array_equal(result.grads[0], np.zeros(2))
        eps = 1e-6
        for i in range(1, 4):
            for k in range(2):
                zp, zm = z.copy(), z.copy()
                zp[i, k] += eps
                zm[i, k] -= eps
                up = ms_loss(EmbeddingBatch.plain(zp, labels), 0.5, 2.0, 40.0, COSINE).value
                down = ms_loss(EmbeddingBatch.plain(zm, labels), 0.5, 2.0, 40.0, COSINE).value
                numeric = (up - down) / (2 * eps)
                assert result.grads[i, k] == pytest.approx(numeric, rel=1e-5, abs=1e-8)

    def test_eps_range(self, rng, batch_factory):
        batch = batch_factory(rng)
        with pytest.raises(ValueError):
            finite_difference_check(lambda b: lifted_loss(b, 0.5, COSINE), batch, eps=1e-2)
