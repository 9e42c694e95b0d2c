"""LSTM forward/backward against naive re-implementations.

The oracle here materializes the one-hot encodings and walks the
recurrence step by step with explicit gate formulas, so any slip in the
gather-based batched code shows up as a numeric mismatch.
"""

import numpy as np
import pytest

from kt_career.dkt import DktParams, SequenceBatch, forward, forward_batch
from kt_career.dkt.gradcheck import analytic_gradient
from kt_career.dkt.model import KnowledgeStateSequence
from kt_career.errors import ShapeError


def naive_forward(params, skills, corrects):
    """Reference forward pass: explicit one-hots, no batching, no gathers."""
    m, h = params.n_skills, params.hidden_size
    hidden = np.zeros(h)
    cell = np.zeros(h)
    states = []
    for skill, correct in zip(skills, corrects):
        x = np.zeros(2 * m)
        x[skill] = 1.0
        if correct:
            x[m + skill] = 1.0
        pre = x @ params.w_in + hidden @ params.u_rec + params.b_gate
        gi = 1.0 / (1.0 + np.exp(-pre[:h]))
        gf = 1.0 / (1.0 + np.exp(-pre[h : 2 * h]))
        gg = np.tanh(pre[2 * h : 3 * h])
        go = 1.0 / (1.0 + np.exp(-pre[3 * h :]))
        cell = gf * cell + gi * gg
        hidden = go * np.tanh(cell)
        z = hidden @ params.w_out + params.b_out
        states.append(1.0 / (1.0 + np.exp(-z)))
    return np.array(states)


def random_params(rng, n_skills, hidden_size, std=0.3):
    return DktParams.initialize(n_skills, hidden_size, std, rng)


def random_sequence(rng, n_skills, length):
    return (
        rng.integers(0, n_skills, size=length),
        rng.integers(0, 2, size=length).astype(np.float64),
    )


class TestForward:
    def test_matches_naive_unrolled_oracle(self):
        rng = np.random.default_rng(7)
        for m, h, length in [(3, 4, 6), (5, 2, 9), (2, 7, 1)]:
            params = random_params(rng, m, h)
            sk, co = random_sequence(rng, m, length)
            got = forward(params, (sk, co)).values
            want = naive_forward(params, sk, co)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_batched_rows_match_single_sequence_runs(self):
        rng = np.random.default_rng(8)
        params = random_params(rng, 4, 5)
        seqs = [random_sequence(rng, 4, length) for length in (7, 3, 1, 5)]
        batch = SequenceBatch.from_arrays(seqs)
        outputs, _ = forward_batch(params, batch)
        for row, (sk, co) in enumerate(seqs):
            solo = forward(params, (sk, co)).values
            np.testing.assert_allclose(
                outputs[row, : sk.size], solo, rtol=0, atol=1e-12
            )

    def test_output_range_is_open_unit_interval(self):
        rng = np.random.default_rng(9)
        params = random_params(rng, 3, 4, std=5.0)
        sk, co = random_sequence(rng, 3, 40)
        values = forward(params, (sk, co)).values
        assert np.all(values > 0.0)
        assert np.all(values < 1.0)

    def test_rejects_out_of_range_skill_ids(self):
        rng = np.random.default_rng(10)
        params = random_params(rng, 3, 4)
        batch = SequenceBatch.from_arrays([(np.array([0, 3]), np.array([1.0, 0.0]))])
        with pytest.raises(ShapeError):
            forward_batch(params, batch)


class TestDropout:
    def test_deterministic_under_seeded_generator(self):
        rng = np.random.default_rng(11)
        params = random_params(rng, 3, 16)
        batch = SequenceBatch.from_arrays([random_sequence(rng, 3, 12)])
        a, _ = forward_batch(params, batch, dropout_rate=0.5, rng=np.random.default_rng(5))
        b, _ = forward_batch(params, batch, dropout_rate=0.5, rng=np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_mask_zeroes_or_rescales_hidden_units(self):
        rng = np.random.default_rng(12)
        params = random_params(rng, 3, 64)
        batch = SequenceBatch.from_arrays([random_sequence(rng, 3, 4)])
        rate = 0.5
        _, cache = forward_batch(
            params, batch, dropout_rate=rate, rng=np.random.default_rng(6), need_cache=True
        )
        mask = cache.drop_mask
        assert set(np.unique(mask)) <= {0.0, 1.0 / (1.0 - rate)}
        np.testing.assert_allclose(
            cache.dropped_hidden, cache.hidden * mask, rtol=0, atol=0
        )
        # roughly half the units survive
        assert 0.3 < (mask > 0).mean() < 0.7

    def test_rate_zero_has_no_mask(self):
        rng = np.random.default_rng(13)
        params = random_params(rng, 2, 3)
        batch = SequenceBatch.from_arrays([random_sequence(rng, 2, 3)])
        _, cache = forward_batch(params, batch, need_cache=True)
        assert cache.drop_mask is None

    def test_dropout_without_generator_is_an_error(self):
        rng = np.random.default_rng(14)
        params = random_params(rng, 2, 3)
        batch = SequenceBatch.from_arrays([random_sequence(rng, 2, 3)])
        with pytest.raises(ValueError):
            forward_batch(params, batch, dropout_rate=0.5)


class TestParams:
    def test_initialize_sets_forget_bias_to_one(self):
        rng = np.random.default_rng(15)
        h = 6
        params = DktParams.initialize(4, h, 0.05, rng)
        np.testing.assert_array_equal(params.b_gate[h : 2 * h], np.ones(h))
        np.testing.assert_array_equal(params.b_gate[:h], np.zeros(h))
        np.testing.assert_array_equal(params.b_gate[2 * h :], np.zeros(2 * h))
        np.testing.assert_array_equal(params.b_out, np.zeros(4))

    def test_initialize_weight_scale(self):
        rng = np.random.default_rng(16)
        params = DktParams.initialize(50, 100, 0.05, rng)
        assert abs(params.w_in.std() - 0.05) < 0.005
        assert abs(params.w_in.mean()) < 0.005

    def test_flatten_round_trip(self):
        rng = np.random.default_rng(17)
        params = random_params(rng, 3, 4)
        flat = params.flatten()
        rebuilt = params.with_flat(flat)
        for a, b in zip(params.arrays(), rebuilt.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_with_flat_rejects_wrong_size(self):
        rng = np.random.default_rng(18)
        params = random_params(rng, 3, 4)
        with pytest.raises(ShapeError):
            params.with_flat(np.zeros(params.flatten().size + 1))

    def test_shape_validation(self):
        rng = np.random.default_rng(19)
        good = random_params(rng, 3, 4)
        with pytest.raises(ShapeError):
            DktParams(
                good.w_in,
                good.u_rec[:, :-1],
                good.b_gate,
                good.w_out,
                good.b_out,
            )


class TestBatch:
    def test_padding_layout(self):
        batch = SequenceBatch.from_arrays(
            [
                (np.array([1, 0, 2]), np.array([1.0, 0.0, 1.0])),
                (np.array([2]), np.array([0.0])),
            ]
        )
        assert batch.size == 2
        assert batch.max_len == 3
        np.testing.assert_array_equal(batch.skills[1], [2, -1, -1])
        np.testing.assert_array_equal(batch.corrects[1], [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(batch.lengths, [3, 1])
        assert batch.n_loss_terms == 2
        np.testing.assert_array_equal(
            batch.step_mask(), [[True, True, True], [True, False, False]]
        )

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            SequenceBatch.from_arrays([])

    def test_zero_length_sequence_rejected(self):
        with pytest.raises(ValueError):
            SequenceBatch.from_arrays([(np.array([], dtype=int), np.array([]))])


class TestBackwardLinearity:
    def test_combined_batch_gradient_is_weighted_sum_of_parts(self):
        """Padding must not leak gradient: the batch-of-two gradient is the
        term-count-weighted average of the per-sequence gradients."""
        rng = np.random.default_rng(20)
        params = random_params(rng, 3, 4)
        seq_a = random_sequence(rng, 3, 5)
        seq_b = random_sequence(rng, 3, 2)
        lam = dict(lambda_r=0.1, lambda_w1=0.3, lambda_w2=3.0)

        g_both = analytic_gradient(
            params, SequenceBatch.from_arrays([seq_a, seq_b]), **lam
        )
        g_a = analytic_gradient(params, SequenceBatch.from_arrays([seq_a]), **lam)
        g_b = analytic_gradient(params, SequenceBatch.from_arrays([seq_b]), **lam)

        n_a, n_b = 4, 1  # loss terms per sequence
        for combined, part_a, part_b in zip(
            g_both.arrays(), g_a.arrays(), g_b.arrays()
        ):
            want = (n_a * part_a + n_b * part_b) / (n_a + n_b)
            np.testing.assert_allclose(combined, want, rtol=0, atol=1e-12)


class TestKnowledgeStateSequence:
    def test_len_and_last_state(self):
        values = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        seq = KnowledgeStateSequence(values)
        assert len(seq) == 3
        np.testing.assert_array_equal(seq.last_state, [0.5, 0.6])

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeError):
            KnowledgeStateSequence(np.zeros(4))
