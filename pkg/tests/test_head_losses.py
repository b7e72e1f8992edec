"""
Tests for pooling, the separate head and the training losses
"""

import numpy as np
import pytest

from src.autograd.tensor import Tape, Tensor
from src.models.head import SeparateHead, horizontal_pooling, temporal_pooling
from src.models.losses import (
    LossConfig,
    combined_loss,
    cross_entropy_loss,
    pairwise_distances,
    triplet_indices,
    triplet_loss,
)
from src.utils.exceptions import ConfigurationError, LossError, ShapeError


class TestPooling:
    def test_temporal_max(self, rng):
        x = rng.random((2, 5, 3, 4))
        np.testing.assert_allclose(temporal_pooling(Tensor(x)).data, x.max(axis=1).astype(np.float32))

    def test_temporal_needs_frames(self):
        with pytest.raises(ShapeError):
            temporal_pooling(Tensor(np.zeros((2, 0, 3))))

    def test_horizontal_max_plus_mean(self):
        feature_map = np.arange(8.0).reshape(1, 1, 4, 2)
        out = horizontal_pooling(Tensor(feature_map), parts=2).data
        assert out.shape == (1, 2, 1)
        np.testing.assert_allclose(out[0, :, 0], [3.0 + 1.5, 7.0 + 5.5])

    def test_horizontal_max_only(self):
        out = horizontal_pooling(Tensor(np.arange(8.0).reshape(1, 1, 4, 2)), parts=4, mode='max').data
        np.testing.assert_allclose(out[0, :, 0], [1.0, 3.0, 5.0, 7.0])

    def test_parts_must_divide_height(self):
        with pytest.raises(ShapeError):
            horizontal_pooling(Tensor(np.zeros((1, 2, 16, 11))), parts=5)

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            horizontal_pooling(Tensor(np.zeros((1, 2, 16, 11))), parts=4, mode='mean')


class TestHead:
    def test_shapes_and_names(self, rng):
        head = SeparateHead(parts=3, in_dim=8, num_classes=5, rng=rng, embed_dim=6)
        out = head(Tensor(rng.standard_normal((4, 3, 8))))
        assert out.embeddings.shape == (4, 3, 6)
        assert out.logits.shape == (4, 3, 5)
        names = {name for name, _ in head.named_parameters()}
        assert {'fc.2.weight', 'bn.2.scale', 'cls.2.weight'} <= names
        assert 'cls.0.bias' not in names

    def test_parts_are_separate(self, rng):
        head = SeparateHead(parts=2, in_dim=4, num_classes=3, rng=rng, embed_dim=4).eval()
        x = rng.standard_normal((2, 2, 4))
        changed = x.copy()
        changed[:, 1] += 5.0
        a, b = head(Tensor(x)), head(Tensor(changed))
        np.testing.assert_allclose(a.embeddings.data[:, 0], b.embeddings.data[:, 0])
        np.testing.assert_allclose(a.logits.data[:, 0], b.logits.data[:, 0])

    def test_wrong_part_count(self, rng):
        with pytest.raises(ShapeError):
            SeparateHead(2, 4, 3, rng)(Tensor(np.zeros((1, 3, 4))))

    def test_needs_classes(self, rng):
        with pytest.raises(ConfigurationError):
            SeparateHead(2, 4, 0, rng)


class TestTriplet:
    def test_triplet_enumeration(self):
        anchor, positive, negative = triplet_indices(np.array([0, 0, 1, 1]))
        assert len(anchor) == 8
        labels = np.array([0, 0, 1, 1])
        assert (labels[anchor] == labels[positive]).all()
        assert (labels[anchor] != labels[negative]).all()
        assert (anchor != positive).all()

    def test_distances(self):
        emb = Tensor(np.array([[[0.0, 0.0], [3.0, 4.0]]]))
        d = pairwise_distances(emb).data
        np.testing.assert_allclose(d[0, 0, 1], 5.0, atol=1e-5)
        np.testing.assert_allclose(np.diag(d[0]), 0.0, atol=1e-5)

    def test_collapsed_embeddings_cost_the_margin(self):
        result = triplet_loss(Tensor(np.ones((4, 1, 3))), np.array([0, 0, 1, 1]), margin=0.2)
        assert result.loss.item() == pytest.approx(0.2, abs=1e-5)
        assert result.nonzero_triplet_count == 8

    def test_counts_sum_over_parts(self):
        assert triplet_loss(Tensor(np.ones((4, 2, 3))), np.array([0, 0, 1, 1])).nonzero_triplet_count == 16

    def test_separated_classes_cost_nothing(self):
        emb = np.zeros((4, 1, 2))
        emb[2:] = 100.0
        result = triplet_loss(Tensor(emb), np.array([0, 0, 1, 1]))
        assert result.loss.item() == 0.0
        assert result.nonzero_triplet_count == 0

    def test_margin_only_adds_active_triplets(self, rng):
        emb = Tensor(rng.standard_normal((8, 2, 4)))
        labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
        counts = [triplet_loss(emb, labels, margin=m).nonzero_triplet_count for m in (0.0, 0.2, 1.0)]
        assert counts[0] <= counts[1] <= counts[2]
        assert counts[2] > 0

    @pytest.mark.parametrize("labels", [[0, 0, 0, 0], [0, 1, 2, 3]])
    def test_no_valid_triplet(self, labels):
        with pytest.raises(LossError):
            triplet_loss(Tensor(np.ones((4, 1, 2))), np.array(labels))

    def test_gradient_pulls_positives_together(self, rng):
        emb = Tensor(rng.standard_normal((4, 1, 3)), requires_grad=True)
        with Tape() as tape:
            result = triplet_loss(emb, np.array([0, 0, 1, 1]), margin=10.0)
        tape.backward(result.loss)
        assert np.isfinite(emb.grad).all()
        assert np.abs(emb.grad).sum() > 0


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = cross_entropy_loss(Tensor(np.zeros((3, 2, 5))), np.array([0, 4, 2]))
        assert loss.item() == pytest.approx(np.log(5), rel=1e-5)

    def test_confident_correct_logits(self):
        logits = np.full((2, 1, 3), -20.0)
        logits[0, 0, 1] = logits[1, 0, 2] = 20.0
        assert cross_entropy_loss(Tensor(logits), np.array([1, 2])).item() < 1e-6

    def test_labels_in_range(self):
        with pytest.raises(LossError):
            cross_entropy_loss(Tensor(np.zeros((2, 1, 3))), np.array([0, 3]))

    def test_combined_is_unweighted_sum(self, rng):
        emb = Tensor(rng.standard_normal((4, 2, 3)))
        logits = Tensor(rng.standard_normal((4, 2, 2)))
        labels = np.array([0, 0, 1, 1])
        breakdown = combined_loss(emb, logits, labels, LossConfig())
        assert breakdown.total.item() == pytest.approx(breakdown.triplet.item() + breakdown.cross_entropy.item(), rel=1e-5)

    def test_margin_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            LossConfig(triplet_margin=0.0)
