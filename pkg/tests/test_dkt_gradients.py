"""Analytic parameter gradients against central finite differences."""

import numpy as np

from kt_career.dkt import DktParams, SequenceBatch
from kt_career.dkt.gradcheck import analytic_gradient, gradient_check, total_loss
from kt_career.dkt.losses import loss_breakdown, output_grad
from kt_career.dkt.model import backward_batch, forward_batch


def small_batch(rng, n_skills, lengths):
    seqs = [
        (
            rng.integers(0, n_skills, size=length),
            rng.integers(0, 2, size=length).astype(np.float64),
        )
        for length in lengths
    ]
    return SequenceBatch.from_arrays(seqs)


class TestGradientCheck:
    def test_plain_prediction_loss(self):
        rng = np.random.default_rng(40)
        params = DktParams.initialize(3, 4, 0.2, rng)
        batch = small_batch(rng, 3, (4, 3))
        report = gradient_check(params, batch)
        assert report.max_relative_error < 1e-4
        assert report.checked == params.flatten().size

    def test_full_regularized_loss(self):
        rng = np.random.default_rng(41)
        params = DktParams.initialize(3, 4, 0.2, rng)
        batch = small_batch(rng, 3, (4, 3))
        report = gradient_check(
            params, batch, lambda_r=0.1, lambda_w1=0.3, lambda_w2=3.0
        )
        assert report.max_relative_error < 1e-4

    def test_varied_shapes(self):
        rng = np.random.default_rng(42)
        for n_skills, hidden, lengths in [(2, 2, (3,)), (4, 5, (2, 5, 4)), (2, 3, (6,))]:
            params = DktParams.initialize(n_skills, hidden, 0.3, rng)
            batch = small_batch(rng, n_skills, lengths)
            report = gradient_check(params, batch, lambda_r=0.2, lambda_w2=1.0)
            assert report.max_relative_error < 1e-4, (n_skills, hidden, lengths)


class _ReplayRng:
    """Hands out a recorded stream of uniform draws, then repeats it.

    Lets finite differences see the same dropout masks as the analytic
    backward pass.
    """

    def __init__(self, draws):
        self.draws = draws
        self.cursor = 0

    def random(self, shape):
        value = self.draws[self.cursor % len(self.draws)]
        self.cursor += 1
        assert value.shape == shape
        return value


class TestDropoutGradient:
    def test_matches_finite_differences_under_fixed_mask(self):
        rng = np.random.default_rng(43)
        params = DktParams.initialize(3, 4, 0.3, rng)
        batch = small_batch(rng, 3, (4, 2))
        rate = 0.5
        draws = [rng.random((batch.size, 4)) for _ in range(batch.max_len)]
        lam = (0.1, 0.3, 3.0)

        def loss_at(p):
            outputs, _ = forward_batch(
                p, batch, dropout_rate=rate, rng=_ReplayRng(draws)
            )
            return loss_breakdown(outputs, batch).total(*lam)

        outputs, cache = forward_batch(
            params, batch, dropout_rate=rate, rng=_ReplayRng(draws), need_cache=True
        )
        grad_z = output_grad(outputs, batch, *lam)
        analytic = backward_batch(params, batch, cache, grad_z).flatten()

        flat = params.flatten()
        eps = 1e-5
        picked = np.random.default_rng(44).choice(flat.size, size=30, replace=False)
        for idx in picked:
            bumped = flat.copy()
            bumped[idx] += eps
            plus = loss_at(params.with_flat(bumped))
            bumped[idx] = flat[idx] - eps
            minus = loss_at(params.with_flat(bumped))
            numeric = (plus - minus) / (2 * eps)
            denom = max(abs(analytic[idx]), abs(numeric), 1e-6)
            assert abs(analytic[idx] - numeric) / denom < 1e-4


class TestTotalLoss:
    def test_matches_breakdown_total(self):
        rng = np.random.default_rng(45)
        params = DktParams.initialize(3, 4, 0.2, rng)
        batch = small_batch(rng, 3, (5, 3))
        outputs, _ = forward_batch(params, batch)
        want = loss_breakdown(outputs, batch).total(0.1, 0.3, 3.0)
        got = total_loss(params, batch, 0.1, 0.3, 3.0)
        assert abs(got - want) < 1e-15

    def test_analytic_gradient_shrinks_loss_along_negative_direction(self):
        rng = np.random.default_rng(46)
        params = DktParams.initialize(3, 4, 0.2, rng)
        batch = small_batch(rng, 3, (5, 4))
        grads = analytic_gradient(params, batch, 0.1, 0.3, 3.0)
        before = total_loss(params, batch, 0.1, 0.3, 3.0)
        stepped = params.with_flat(params.flatten() - 0.05 * grads.flatten())
        after = total_loss(stepped, batch, 0.1, 0.3, 3.0)
        assert after < before
