"""Tests for the training objectives."""

import math

import numpy as np
import pytest

from src.autodiff.engine import DiffGraph, Parameter
from src.autodiff.gradcheck import check_gradients
from src.errors import BatchTooSmallError, LabelRangeError, NonFinitePartError, ShapeMismatchError
from src.models.backbone import BackboneConfig, BackboneModel
from src.stats.correlation import corr_vector
from src.stats.divergence import mmd_squared
from src.training.losses import (
    LossWeights,
    coral_alignment_loss,
    correlation_alignment_loss,
    correlation_vectors,
    cross_entropy,
    forecasting_loss,
    mean_absolute_error,
    mmd_squared_node,
    total_loss,
)


class TestSupervisedLosses:
    """Cross-entropy and MAE."""

    def test_uniform_logits(self):
        g = DiffGraph()
        loss = cross_entropy(g, g.constant(np.zeros((4, 3))), np.array([0, 1, 2, 0]))
        assert loss.item() == pytest.approx(math.log(3))

    def test_confident_correct_logits(self):
        g = DiffGraph()
        logits = np.array([[20.0, 0.0], [0.0, 20.0]])
        assert cross_entropy(g, g.constant(logits), np.array([0, 1])).item() < 1e-6

    def test_label_out_of_range(self):
        g = DiffGraph()
        with pytest.raises(LabelRangeError):
            cross_entropy(g, g.constant(np.zeros((2, 3))), np.array([0, 3]))

    def test_cross_entropy_gradient(self, rng):
        logits = Parameter(rng.normal(size=(5, 4)), "logits")
        labels = np.array([0, 3, 1, 1, 2])
        assert check_gradients(lambda g: cross_entropy(g, logits, labels), [logits]).max_error < 1e-5

    def test_mean_absolute_error(self):
        g = DiffGraph()
        loss = mean_absolute_error(g, g.constant(np.array([1.0, -1.0, 3.0])), np.array([0.0, 0.0, 0.0]))
        assert loss.item() == pytest.approx(5.0 / 3.0)

    def test_mae_shape_mismatch(self):
        g = DiffGraph()
        with pytest.raises(ShapeMismatchError):
            mean_absolute_error(g, g.constant(np.zeros(3)), np.zeros(4))

    def test_forecasting_loss_is_finite(self, rng):
        config = BackboneConfig(n_vars=2, n_classes=2, d_model=4, n_blocks=1, n_heads=2, d_ff=8, window_len=4)
        model = BackboneModel(config)
        loss = forecasting_loss(DiffGraph(), model, [], rng.normal(size=(2, 2, 11)), 4)
        assert np.isfinite(loss.item())
        assert loss.item() > 0


class TestCorrelationAlignment:
    """Layer-wise MMD between correlation vectors."""

    def test_correlation_vectors_match_reference(self, rng):
        hidden = rng.normal(size=(3, 5, 4))
        g = DiffGraph()
        vectors = correlation_vectors(g, g.constant(hidden)).value
        for b in range(3):
            np.testing.assert_allclose(vectors[b], corr_vector(hidden[b].T), atol=1e-12)

    def test_value_matches_reference_mmd(self, rng):
        source = [rng.normal(size=(4, 5, 3)) for _ in range(2)]
        target = [rng.normal(size=(6, 5, 3)) + 0.5 for _ in range(2)]
        g = DiffGraph()
        loss = correlation_alignment_loss(g, [g.constant(h) for h in source], [g.constant(h) for h in target])
        expected = sum(
            mmd_squared([corr_vector(x.T) for x in hs], [corr_vector(x.T) for x in ht])
            for hs, ht in zip(source, target)
        )
        assert loss.item() == pytest.approx(expected, abs=1e-10)

    def test_identical_hidden_states(self, rng):
        hidden = rng.normal(size=(4, 5, 3))
        g = DiffGraph()
        loss = correlation_alignment_loss(g, [g.constant(hidden)], [g.constant(hidden.copy())])
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_fixed_bandwidth_gradient(self, rng):
        xs = Parameter(rng.normal(size=(4, 3)), "xs")
        ys = Parameter(rng.normal(size=(5, 3)) + 1.0, "ys")
        result = check_gradients(lambda g: mmd_squared_node(g, xs, ys, sigma=1.3), [xs, ys])
        assert result.max_error < 1e-5

    def test_gradient_through_correlation_vectors(self, rng):
        hidden = Parameter(rng.normal(size=(4, 5, 3)), "hidden")
        other = rng.normal(size=(4, 9)) * 0.1

        def build(g):
            return mmd_squared_node(g, correlation_vectors(g, hidden), g.constant(other), sigma=0.8)

        assert check_gradients(build, [hidden]).max_error < 1e-5

    def test_single_window_batch(self, rng):
        g = DiffGraph()
        single = g.constant(rng.normal(size=(1, 5, 3)))
        with pytest.raises(BatchTooSmallError):
            correlation_alignment_loss(g, [single], [g.constant(rng.normal(size=(3, 5, 3)))])

    def test_layer_count_mismatch(self, rng):
        g = DiffGraph()
        hidden = g.constant(rng.normal(size=(2, 5, 3)))
        with pytest.raises(ShapeMismatchError):
            correlation_alignment_loss(g, [hidden, hidden], [hidden])


class TestCoralAlignment:
    """CORAL on time-pooled features."""

    def test_zero_for_shifted_copy(self, rng):
        hidden = rng.normal(size=(6, 4, 3))
        g = DiffGraph()
        loss = coral_alignment_loss(g, [g.constant(hidden)], [g.constant(hidden + 2.0)])
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_gradient(self, rng):
        hidden = Parameter(rng.normal(size=(5, 4, 3)), "hidden")
        other = rng.normal(size=(6, 4, 3)) * 2.0
        result = check_gradients(lambda g: coral_alignment_loss(g, [hidden], [g.constant(other)]), [hidden])
        assert result.max_error < 1e-5


class TestTotalLoss:
    """Weighted combination of the loss parts."""

    def test_weighted_sum(self):
        breakdown = total_loss(1.0, 2.0, 4.0, LossWeights(lambda_corr=0.5, lambda_f=0.25))
        assert breakdown.total == pytest.approx(1.0 + 2.0 + 0.5)
        assert breakdown.to_dict() == {"l_c": 1.0, "l_f": 2.0, "l_corr": 4.0, "total": 3.5}

    def test_zero_weights_leave_classification(self):
        assert total_loss(0.7, 9.0, 9.0, LossWeights(0.0, 0.0)).total == pytest.approx(0.7)

    @pytest.mark.parametrize("bad", [math.nan, math.inf])
    def test_non_finite_part(self, bad):
        with pytest.raises(NonFinitePartError):
            total_loss(1.0, bad, 0.0, LossWeights())

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_corr=-0.1)
