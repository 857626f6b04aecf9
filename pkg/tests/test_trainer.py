"""Tests for the joint loss, its gradients and the training loop."""

import math

import numpy as np
import pytest

import application.trainer as trainer
from application.trainer import (
    Batch,
    LossContext,
    fit,
    prediction_loss,
    total_loss,
)
from domain.dataset import AssociationMatrix, DatasetBundle, DataSplit, split_associations
from domain.errors import DivergenceError, ShapeError
from domain.models import Variant, init_state, score_matrix
from domain.numkit import RngStream, finite_diff_check


def _batch(split: DataSplit, negatives) -> Batch:
    pairs = list(split.train_positives) + list(negatives)
    labels = [1.0] * len(split.train_positives) + [0.0] * len(negatives)
    return Batch.from_pairs(pairs, labels)


@pytest.fixture
def tiny_batch(tiny_bundle, tiny_split) -> Batch:
    values = tiny_bundle.training_view(tiny_split).associations.values
    zeros = list(zip(*np.nonzero(values == 0)))[::3]
    return _batch(tiny_split, zeros)


class TestPredictionLoss:
    def test_value(self):
        loss = prediction_loss([0.9, 0.2], [1, 0])
        assert loss == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2)

    def test_clamped_extremes_are_finite(self):
        loss = prediction_loss([0.0, 1.0], [1, 0])
        expected = -(math.log(1e-12) + math.log(1 - (1 - 1e-12))) / 2
        assert math.isfinite(loss)
        assert loss == pytest.approx(expected, rel=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            prediction_loss([0.5, 0.5], [1])


class TestTotalLoss:
    @pytest.mark.parametrize("variant", list(Variant))
    def test_prediction_term_matches_probabilities(
        self, variant, make_config, tiny_bundle, tiny_split, tiny_batch
    ):
        cfg = make_config(variant=variant)
        training = tiny_bundle.training_view(tiny_split)
        state = init_state(cfg, 6, 5)
        parts = total_loss(tiny_batch, state, training, cfg)
        probabilities = score_matrix(state, training.associations.values.astype(float))
        expected = prediction_loss(
            probabilities[tiny_batch.drugs, tiny_batch.diseases], tiny_batch.labels
        )
        assert parts.prediction == pytest.approx(expected, rel=1e-10)
        assert parts.total == pytest.approx(
            parts.prediction + cfg.alpha * parts.drug + cfg.beta * parts.disease
        )
        if variant is Variant.NMF:
            assert parts.drug > 0 and parts.disease > 0
        else:
            assert parts.drug == parts.disease == 0.0

    @pytest.mark.parametrize("variant", list(Variant))
    def test_gradients_match_finite_differences(
        self, variant, make_config, tiny_bundle, tiny_split, tiny_batch
    ):
        training = tiny_bundle.training_view(tiny_split)
        worst = 0.0
        for seed in range(10):
            cfg = make_config(variant=variant, seed=seed, alpha=0.7, beta=0.3)
            state = init_state(cfg, 6, 5)
            context = LossContext.build(training, cfg)
            worst = max(
                worst,
                finite_diff_check(
                    lambda: total_loss(tiny_batch, state, training, cfg, context).total,
                    state.params,
                    h=1e-5,
                    samples=20,
                    rng=RngStream(seed),
                ),
            )
        assert worst <= 1e-4

    def test_empty_batch(self, make_config, tiny_bundle):
        cfg = make_config()
        with pytest.raises(ShapeError):
            total_loss(Batch.from_pairs([], []), init_state(cfg, 6, 5), tiny_bundle, cfg)

    def test_non_finite_loss_diverges(self, make_config, tiny_bundle, tiny_batch):
        cfg = make_config(variant="mf")
        state = init_state(cfg, 6, 5)
        state.params["drug_table"].value[:] = np.nan
        with pytest.raises(DivergenceError):
            total_loss(tiny_batch, state, tiny_bundle, cfg)

    def test_linear_in_the_drug_weight(self, make_config, tiny_bundle, tiny_split, tiny_batch):
        training = tiny_bundle.training_view(tiny_split)
        state = init_state(make_config(), 6, 5)
        totals = []
        for alpha in (0.0, 1.0, 2.0):
            cfg = make_config(alpha=alpha)
            totals.append(total_loss(tiny_batch, state, training, cfg).total)
        assert totals[2] - totals[0] == pytest.approx(2 * (totals[1] - totals[0]), abs=1e-9)
        assert totals[1] > totals[0]


class TestFit:
    def test_deterministic(self, make_config, tiny_bundle, tiny_split):
        cfg = make_config(epochs=4)
        a = fit(tiny_bundle, tiny_split, cfg)
        b = fit(tiny_bundle, tiny_split, cfg)
        for name in a.state.params:
            np.testing.assert_array_equal(a.state.params[name].value, b.state.params[name].value)
        assert a.log == b.log

    def test_zero_epochs_returns_initial_state(self, make_config, tiny_bundle, tiny_split):
        cfg = make_config(epochs=0)
        result = fit(tiny_bundle, tiny_split, cfg)
        initial = init_state(cfg, 6, 5)
        assert result.log == []
        for name, tensor in result.state.params.items():
            np.testing.assert_array_equal(tensor.value, initial.params[name].value)

    def test_logs_every_epoch(self, make_config, tiny_bundle, tiny_split):
        seen = []
        cfg = make_config(epochs=3, alpha=0.5, beta=0.25)
        result = fit(
            tiny_bundle, tiny_split, cfg,
            on_epoch=lambda entry, state: seen.append(entry.epoch),
        )
        assert seen == [1, 2, 3]
        assert [e.epoch for e in result.log] == [1, 2, 3]
        for entry in result.log:
            assert entry.loss == pytest.approx(
                entry.loss_p + cfg.alpha * entry.loss_d + cfg.beta * entry.loss_s, abs=1e-9
            )

    def test_prediction_loss_decreases(self, make_config, small_bundle):
        split = split_associations(small_bundle.associations, 0.7, 0)
        cfg = make_config(latent_dim=4, epochs=40, batch_size=64, negatives_per_positive=3)
        result = fit(small_bundle, split, cfg)
        assert result.log[-1].loss_p < result.log[0].loss_p

    def test_total_loss_descends_on_noise_free_data(self, make_config, small_bundle):
        split = split_associations(small_bundle.associations, 0.7, 0)
        cfg = make_config(
            latent_dim=4, epochs=50, batch_size=64, negatives_per_positive=3, alpha=0.5, beta=0.5
        )
        losses = [entry.loss for entry in fit(small_bundle, split, cfg).log]
        assert len(losses) == 50
        assert losses[-1] < losses[0]
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_never_sees_test_positives(self, make_config, tiny_bundle, tiny_split, monkeypatch):
        seen = []
        original = trainer.sample_negatives

        def spy(assoc, *args, **kwargs):
            seen.append(assoc.values.copy())
            return original(assoc, *args, **kwargs)

        monkeypatch.setattr(trainer, "sample_negatives", spy)
        fit(tiny_bundle, tiny_split, make_config(epochs=2))
        assert len(seen) == 2
        for values in seen:
            for i, j in tiny_split.test_positives:
                assert values[i, j] == 0

    @pytest.mark.parametrize("variant", list(Variant))
    def test_hidden_positive_changes_nothing(self, variant, make_config, tiny_bundle, tiny_split):
        """Adding a held-out positive leaves the training run bit-for-bit unchanged."""
        assoc = tiny_bundle.associations
        extra = next(zip(*np.nonzero(assoc.values == 0)))
        extra = (int(extra[0]), int(extra[1]))
        values = assoc.values.copy()
        values[extra] = 1
        grown = DatasetBundle(
            AssociationMatrix(assoc.drug_ids, assoc.disease_ids, values),
            tiny_bundle.drug_sim,
            tiny_bundle.disease_sim,
        )
        grown_split = DataSplit(
            tiny_split.train_positives,
            tuple(sorted(tiny_split.test_positives + (extra,))),
            tiny_split.seed,
            tiny_split.ratio,
        )
        cfg = make_config(variant=variant, epochs=3)
        a = fit(tiny_bundle, tiny_split, cfg)
        b = fit(grown, grown_split, cfg)
        for name in a.state.params:
            np.testing.assert_array_equal(a.state.params[name].value, b.state.params[name].value)

    @pytest.mark.parametrize("variant", list(Variant))
    def test_every_parameter_is_updated(self, variant, make_config, tiny_bundle, tiny_split):
        cfg = make_config(variant=variant, epochs=1)
        initial = init_state(cfg, 6, 5)
        trained = fit(tiny_bundle, tiny_split, cfg).state
        for name, tensor in trained.params.items():
            assert tensor.step_count > 0, name
            assert not np.array_equal(tensor.value, initial.params[name].value), name
