"""Training-loop behavior: convergence, clipping, early stop, determinism."""

import math

import numpy as np
import pytest

import kt_career.dkt.training as training_mod
from kt_career.dkt import (
    TrainConfig,
    evaluate_losses,
    forward,
    next_step_predictions,
    train,
    write_training_log,
)
from kt_career.dkt.losses import loss_breakdown
from kt_career.dkt.model import SequenceBatch
from kt_career.dkt.training import _segment
from kt_career.errors import ConfigError, TrainingDivergedError
from kt_career.metrics import auc


def mastery_sequences(rng, n_students, n_skills, min_len=10, max_len=24):
    """Toy learners: success probability rises with per-skill practice."""
    seqs = []
    for _ in range(n_students):
        length = int(rng.integers(min_len, max_len))
        skills = rng.integers(0, n_skills, size=length)
        level = np.zeros(n_skills)
        corrects = np.zeros(length)
        for t in range(length):
            prob = 0.2 + 0.7 * level[skills[t]]
            corrects[t] = float(rng.random() < prob)
            level[skills[t]] = min(1.0, level[skills[t]] + 0.3)
        seqs.append((skills, corrects))
    return seqs


@pytest.fixture(scope="module")
def toy_data():
    rng = np.random.default_rng(50)
    return mastery_sequences(rng, 50, 5)


QUICK = dict(
    hidden_size=8,
    learning_rate=0.05,
    dropout=0.0,
    optimizer="adam",
    batch_size=16,
    val_fraction=0.2,
    seed=7,
)


class TestConvergence:
    def test_loss_decreases_and_predictions_beat_chance(self, toy_data):
        config = TrainConfig(max_epochs=15, patience=15, **QUICK)
        result = train(toy_data, 5, config)
        assert result.history[-1].loss_total < result.history[0].loss_total
        probs, targets = next_step_predictions(result.params, toy_data)
        assert auc(probs, targets) > 0.6

    def test_best_epoch_tracks_highest_validation_auc(self, toy_data):
        config = TrainConfig(max_epochs=10, patience=10, **QUICK)
        result = train(toy_data, 5, config)
        finite = [r for r in result.history if math.isfinite(r.val_auc)]
        assert finite
        best = max(finite, key=lambda r: r.val_auc)
        assert result.best_val_auc == best.val_auc
        assert result.best_epoch <= result.n_epochs_run


class TestDeterminism:
    def test_identical_runs_bitwise(self, toy_data):
        config = TrainConfig(max_epochs=4, dropout=0.5, **{k: v for k, v in QUICK.items() if k != "dropout"})
        a = train(toy_data, 5, config)
        b = train(toy_data, 5, config)
        assert a.params.flatten().tobytes() == b.params.flatten().tobytes()
        assert a.history == b.history

    def test_seed_changes_the_run(self, toy_data):
        base = {k: v for k, v in QUICK.items() if k != "seed"}
        a = train(toy_data, 5, TrainConfig(max_epochs=3, seed=1, **base))
        b = train(toy_data, 5, TrainConfig(max_epochs=3, seed=2, **base))
        assert a.params.flatten().tobytes() != b.params.flatten().tobytes()


class TestClipping:
    def test_recorded_norms_respect_the_bound(self, toy_data):
        config = TrainConfig(
            max_epochs=3, clip_norm=0.01, **QUICK
        )
        result = train(toy_data, 5, config)
        peak = max(r.grad_norm_max for r in result.history)
        assert peak <= 0.01 + 1e-9
        # the bound actually engaged, it is not just a loose ceiling
        assert peak > 0.009


class TestEarlyStopping:
    def test_stops_on_noise_with_no_signal(self):
        rng = np.random.default_rng(51)
        seqs = [
            (
                rng.integers(0, 4, size=12),
                rng.integers(0, 2, size=12).astype(np.float64),
            )
            for _ in range(30)
        ]
        config = TrainConfig(
            hidden_size=4,
            max_epochs=40,
            patience=2,
            val_fraction=0.25,
            seed=9,
            dropout=0.0,
        )
        result = train(seqs, 4, config)
        assert result.stopped_early
        assert result.n_epochs_run < 40

    def test_without_validation_runs_every_epoch(self, toy_data):
        config = TrainConfig(
            max_epochs=4, val_fraction=0.0,
            **{k: v for k, v in QUICK.items() if k != "val_fraction"},
        )
        result = train(toy_data, 5, config)
        assert result.n_epochs_run == 4
        assert not result.stopped_early
        assert all(math.isnan(r.val_auc) for r in result.history)
        assert result.best_epoch == 4


class TestDivergenceGuard:
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_parameters_raise_with_epoch(self, toy_data, monkeypatch):
        def poison(params, grads, learning_rate):
            params.w_out[0, 0] = math.inf

        monkeypatch.setattr(training_mod, "_sgd_update", poison)
        config = TrainConfig(hidden_size=4, max_epochs=5, optimizer="sgd", seed=3)
        with pytest.raises(TrainingDivergedError) as info:
            train(toy_data, 5, config)
        assert info.value.epoch == 1


class TestSegmentation:
    def test_long_sequences_are_chunked(self):
        sk = np.arange(11) % 3
        co = np.ones(11)
        segments = _segment([(sk, co)], 5)
        assert [len(s) for s, _ in segments] == [5, 5]
        np.testing.assert_array_equal(segments[0][0], sk[:5])
        np.testing.assert_array_equal(segments[1][0], sk[5:10])

    def test_short_tail_of_one_step_is_dropped(self):
        segments = _segment([(np.zeros(6, dtype=int), np.ones(6))], 5)
        assert [len(s) for s, _ in segments] == [5]

    def test_single_step_sequences_vanish(self):
        assert _segment([(np.zeros(1, dtype=int), np.ones(1))], 5) == []

    def test_training_uses_full_sequences_at_inference(self, toy_data):
        """Segments only bound the training batches; forward runs unsplit."""
        config = TrainConfig(
            max_epochs=2, max_segment_len=6,
            **{k: v for k, v in QUICK.items()},
        )
        result = train(toy_data, 5, config)
        sk, co = toy_data[0]
        states = forward(result.params, (sk, co))
        assert len(states) == sk.size


class TestEvaluationHelpers:
    def test_next_step_predictions_gather_the_right_cells(self, toy_data):
        config = TrainConfig(max_epochs=2, **QUICK)
        result = train(toy_data, 5, config)
        seqs = toy_data[:3]
        probs, targets = next_step_predictions(result.params, seqs)
        want_p = []
        want_t = []
        for sk, co in seqs:
            values = forward(result.params, (sk, co)).values
            for t in range(sk.size - 1):
                want_p.append(values[t, sk[t + 1]])
                want_t.append(co[t + 1])
        np.testing.assert_allclose(probs, np.array(want_p), rtol=0, atol=1e-12)
        np.testing.assert_array_equal(targets, np.array(want_t))

    def test_single_step_sequences_are_skipped(self, toy_data):
        config = TrainConfig(max_epochs=1, **QUICK)
        result = train(toy_data, 5, config)
        probs_a, _ = next_step_predictions(result.params, toy_data[:2])
        stub = (np.array([0]), np.array([1.0]))
        probs_b, _ = next_step_predictions(result.params, list(toy_data[:2]) + [stub])
        assert probs_a.size == probs_b.size

    def test_evaluate_losses_is_chunking_invariant(self, toy_data):
        config = TrainConfig(max_epochs=1, **QUICK)
        result = train(toy_data, 5, config)
        small = evaluate_losses(result.params, toy_data, chunk_size=3)
        big = evaluate_losses(result.params, toy_data, chunk_size=1000)
        assert small.prediction == pytest.approx(big.prediction, abs=1e-12)
        assert small.waviness_l1 == pytest.approx(big.waviness_l1, abs=1e-12)

    def test_evaluate_losses_matches_direct_breakdown(self, toy_data):
        config = TrainConfig(max_epochs=1, **QUICK)
        result = train(toy_data, 5, config)
        got = evaluate_losses(result.params, toy_data[:5])
        batch = SequenceBatch.from_arrays(toy_data[:5])
        outputs, _ = training_mod.forward_batch(result.params, batch)
        want = loss_breakdown(outputs, batch)
        assert got.prediction == pytest.approx(want.prediction, abs=1e-12)
        assert got.reconstruction == pytest.approx(want.reconstruction, abs=1e-12)


class TestTrainingLog:
    def test_round_trip_and_stable_bytes(self, toy_data, tmp_path):
        config = TrainConfig(max_epochs=3, **QUICK)
        result = train(toy_data, 5, config)
        path = tmp_path / "log.csv"
        write_training_log(path, result)
        text = path.read_text()
        lines = text.strip().split("\n")
        assert len(lines) == 1 + result.n_epochs_run
        assert lines[0].startswith("epoch,loss_total,")
        write_training_log(tmp_path / "again.csv", result)
        assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(hidden_size=0),
            dict(learning_rate=0.0),
            dict(learning_rate=1.5),
            dict(dropout=1.0),
            dict(dropout=-0.1),
            dict(clip_norm=0.0),
            dict(lambda_r=-1.0),
            dict(batch_size=0),
            dict(max_epochs=0),
            dict(patience=0),
            dict(init_std=0.0),
            dict(optimizer="momentum"),
            dict(val_fraction=1.0),
            dict(max_segment_len=1),
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_dktplus_sets_the_recommended_weights(self):
        base = TrainConfig(hidden_size=32, seed=5)
        plus = base.dktplus()
        assert (plus.lambda_r, plus.lambda_w1, plus.lambda_w2) == (0.1, 0.3, 3.0)
        assert plus.hidden_size == 32
        assert plus.seed == 5
        assert (base.lambda_r, base.lambda_w1, base.lambda_w2) == (0.0, 0.0, 0.0)
