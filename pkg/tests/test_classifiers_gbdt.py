"""Boosted-tree classifier: hand-checked stumps, loss curves, rankings."""

import math

import numpy as np
import pytest

from kt_career.classifiers import GbdtSpec, fit_classifier
from kt_career.classifiers.gbdt import GbdtClassifier
from kt_career.errors import ConfigError, DegenerateLabelsError


def blobs(rng, n_per_class=80, gap=2.5, d=5):
    x0 = rng.normal(0.0, 1.0, size=(n_per_class, d))
    x1 = rng.normal(0.0, 1.0, size=(n_per_class, d))
    x1[:, 0] += gap
    x = np.vstack([x0, x1])
    y = np.repeat([0, 1], n_per_class)
    return x, y


class TestHandChecked:
    def test_single_stump_on_step_data(self):
        """Four points, balanced labels: base score 0, split at 1.5,
        Newton leaves (sum residuals 0.5 each) / (sum hessians 0.25 each)
        give -2 and +2, scaled by the 0.1 learning rate."""
        x = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        model = GbdtClassifier(
            n_estimators=1, max_depth=1, learning_rate=0.1
        ).fit(x, y)
        assert model.base_score == pytest.approx(0.0, abs=1e-15)
        scores = model.decision_function(x)
        np.testing.assert_allclose(scores, [-0.2, -0.2, 0.2, 0.2], atol=1e-12)
        probs = model.predict_proba(x)
        want = 1.0 / (1.0 + math.exp(0.2))
        assert probs[0] == pytest.approx(want, abs=1e-12)

    def test_base_score_is_prior_log_odds(self):
        rng = np.random.default_rng(120)
        x = rng.normal(size=(40, 2))
        y = np.repeat([0, 1], [30, 10])
        model = GbdtClassifier(n_estimators=1, max_depth=2).fit(x, y)
        assert model.base_score == pytest.approx(math.log(10 / 30), abs=1e-12)

    def test_zero_stages_predict_the_base_rate(self):
        rng = np.random.default_rng(121)
        x = rng.normal(size=(50, 3))
        y = np.repeat([0, 1], [20, 30])
        model = GbdtClassifier(n_estimators=0, max_depth=2).fit(x, y)
        probs = model.predict_proba(rng.normal(size=(9, 3)))
        np.testing.assert_allclose(probs, 0.6, atol=1e-12)


class TestTraining:
    def test_stage_losses_never_increase(self):
        rng = np.random.default_rng(122)
        x, y = blobs(rng)
        model = fit_classifier(GbdtSpec(n_estimators=40, max_depth=3), x, y)
        losses = np.array(model.stage_losses)
        assert losses.size == 40
        assert np.all(np.diff(losses) <= 1e-12)
        assert losses[-1] < losses[0]

    def test_separates_clean_blobs(self):
        rng = np.random.default_rng(123)
        x, y = blobs(rng, gap=3.0)
        model = fit_classifier(GbdtSpec(n_estimators=30, max_depth=3), x, y)
        assert (model.predict(x) == y).mean() >= 0.95

    def test_deterministic_refit(self):
        rng = np.random.default_rng(124)
        x, y = blobs(rng)
        spec = GbdtSpec(n_estimators=15, max_depth=3)
        a = fit_classifier(spec, x, y)
        b = fit_classifier(spec, x, y)
        assert a.stage_losses == b.stage_losses
        probe = rng.normal(size=(30, x.shape[1]))
        assert (
            a.decision_function(probe).tobytes()
            == b.decision_function(probe).tobytes()
        )

    def test_oversized_leaf_bound_freezes_the_model(self):
        """When no split satisfies the leaf minimum, every tree is a
        Newton root leaf and predictions are constant over inputs."""
        rng = np.random.default_rng(125)
        x, y = blobs(rng, n_per_class=20)
        model = GbdtClassifier(
            n_estimators=5, max_depth=3, min_samples_leaf=25
        ).fit(x, y)
        probs = model.predict_proba(rng.normal(size=(12, x.shape[1])))
        assert np.ptp(probs) == 0.0

    def test_depth_one_uses_single_splits(self):
        rng = np.random.default_rng(126)
        x, y = blobs(rng)
        model = fit_classifier(GbdtSpec(n_estimators=3, max_depth=1), x, y)
        for root in model.trees:
            assert hasattr(root, "feature")
            assert isinstance(root.left.value, float)
            assert isinstance(root.right.value, float)


class TestRanking:
    def test_importances_find_the_planted_feature(self):
        rng = np.random.default_rng(127)
        n = 300
        x = rng.normal(0.0, 1.0, size=(n, 7))
        logits = 2.0 * x[:, 4]
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logits))).astype(int)
        model = fit_classifier(GbdtSpec(n_estimators=25, max_depth=2), x, y)
        scores = model.feature_scores()
        assert np.argmax(scores) == 4
        assert model.coefficients() is None

    def test_unfitted_scores_raise(self):
        with pytest.raises(RuntimeError):
            GbdtClassifier(n_estimators=1, max_depth=1).feature_scores()


class TestValidation:
    def test_single_class_rejected(self):
        rng = np.random.default_rng(128)
        with pytest.raises(DegenerateLabelsError):
            GbdtClassifier(n_estimators=2, max_depth=2).fit(
                rng.normal(size=(10, 2)), np.ones(10)
            )

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n_estimators=0),
            dict(max_depth=0),
            dict(learning_rate=0.0),
            dict(learning_rate=1.5),
            dict(min_samples_leaf=0),
        ],
    )
    def test_bad_spec_fields(self, kwargs):
        with pytest.raises(ConfigError):
            GbdtSpec(**kwargs)
