"""Prediction loss and the three regularizers over batched outputs.

All four terms share the same index range per sequence: steps t and t+1
with t running over the first T-1 positions. The prediction loss scores
y_t at the next step's skill against the next answer; the reconstruction
term scores y_t at the current skill against the current answer; the two
waviness terms penalize the L1 norm and squared L2 norm of consecutive
output differences. Every term is normalized by the total number of
contributing steps across the batch (the waviness terms additionally by
the number of skills).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError, UndefinedLossError
from .model import PROB_EPS, KnowledgeStateSequence, SequenceBatch, _sequence_arrays


@dataclass(frozen=True)
class LossBreakdown:
    """The four loss components, each already normalized."""

    prediction: float
    reconstruction: float
    waviness_l1: float
    waviness_l2_sq: float

    def total(self, lambda_r: float, lambda_w1: float, lambda_w2: float) -> float:
        return (
            self.prediction
            + lambda_r * self.reconstruction
            + lambda_w1 * self.waviness_l1
            + lambda_w2 * self.waviness_l2_sq
        )


def _cross_entropy(p: np.ndarray, target: np.ndarray) -> np.ndarray:
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return -(target * np.log(p) + (1.0 - target) * np.log1p(-p))


def _pair_mask(batch: SequenceBatch) -> np.ndarray:
    # pair t -> (t, t+1); valid while t+1 is inside the sequence
    t = np.arange(batch.max_len - 1)
    return t[None, :] < (batch.lengths[:, None] - 1)


def loss_term_sums(
    outputs: np.ndarray, batch: SequenceBatch
) -> tuple[float, float, float, float, int]:
    """Unnormalized sums of the four loss terms plus the term count.

    Returning raw sums lets callers aggregate over mini-batches exactly
    before normalizing once.
    """
    b, t_max, m = outputs.shape
    if (b, t_max) != batch.skills.shape:
        raise ShapeError(
            f"outputs shape {outputs.shape} does not match batch "
            f"{batch.skills.shape}"
        )
    n_terms = batch.n_loss_terms
    if t_max < 2 or n_terms == 0:
        return 0.0, 0.0, 0.0, 0.0, n_terms

    valid = _pair_mask(batch)
    sk = np.where(batch.skills >= 0, batch.skills, 0)
    nxt = sk[:, 1:]
    cur = sk[:, :-1]
    head = outputs[:, :-1, :]

    p_next = np.take_along_axis(head, nxt[:, :, None], axis=2)[:, :, 0]
    p_cur = np.take_along_axis(head, cur[:, :, None], axis=2)[:, :, 0]
    ce_next = _cross_entropy(p_next, batch.corrects[:, 1:])
    ce_cur = _cross_entropy(p_cur, batch.corrects[:, :-1])

    diff = outputs[:, 1:, :] - outputs[:, :-1, :]
    sum_pred = float(ce_next[valid].sum())
    sum_rec = float(ce_cur[valid].sum())
    sum_w1 = float(np.abs(diff)[valid].sum())
    sum_w2 = float((diff**2)[valid].sum())
    return sum_pred, sum_rec, sum_w1, sum_w2, n_terms


def breakdown_from_sums(
    sums: tuple[float, float, float, float, int], n_skills: int
) -> LossBreakdown:
    sum_pred, sum_rec, sum_w1, sum_w2, n_terms = sums
    if n_terms == 0:
        raise UndefinedLossError(
            "no prediction targets: every sequence has fewer than 2 steps"
        )
    return LossBreakdown(
        prediction=sum_pred / n_terms,
        reconstruction=sum_rec / n_terms,
        waviness_l1=sum_w1 / (n_skills * n_terms),
        waviness_l2_sq=sum_w2 / (n_skills * n_terms),
    )


def loss_breakdown(outputs: np.ndarray, batch: SequenceBatch) -> LossBreakdown:
    """All four normalized loss terms of one batch."""
    return breakdown_from_sums(
        loss_term_sums(outputs, batch), outputs.shape[2]
    )


def output_grad(
    outputs: np.ndarray,
    batch: SequenceBatch,
    lambda_r: float,
    lambda_w1: float,
    lambda_w2: float,
) -> np.ndarray:
    """Gradient of the combined loss with respect to the output-layer
    preactivation z (where y = sigmoid(z)).

    The cross-entropy parts reduce to (p - target) in z space; the
    waviness parts are formed in y space and pushed through y(1 - y).
    The sign subgradient at exactly equal consecutive outputs is taken
    as zero.
    """
    b, t_max, m = outputs.shape
    n_terms = batch.n_loss_terms
    if n_terms == 0:
        raise UndefinedLossError(
            "no prediction targets: every sequence has fewer than 2 steps"
        )

    valid = _pair_mask(batch)
    sk = np.where(batch.skills >= 0, batch.skills, 0)
    nxt = sk[:, 1:]
    cur = sk[:, :-1]
    head = outputs[:, :-1, :]
    p_next = np.take_along_axis(head, nxt[:, :, None], axis=2)[:, :, 0]
    p_cur = np.take_along_axis(head, cur[:, :, None], axis=2)[:, :, 0]

    grad_z = np.zeros_like(outputs)
    rows, cols = np.nonzero(valid)
    grad_z[rows, cols, nxt[rows, cols]] += (
        p_next[rows, cols] - batch.corrects[rows, cols + 1]
    ) / n_terms
    if lambda_r:
        grad_z[rows, cols, cur[rows, cols]] += (
            lambda_r * (p_cur[rows, cols] - batch.corrects[rows, cols]) / n_terms
        )

    if lambda_w1 or lambda_w2:
        diff = outputs[:, 1:, :] - outputs[:, :-1, :]
        coef = (
            lambda_w1 * np.sign(diff) + 2.0 * lambda_w2 * diff
        ) / (m * n_terms)
        coef *= valid[:, :, None]
        grad_y = np.zeros_like(outputs)
        grad_y[:, 1:, :] += coef
        grad_y[:, :-1, :] -= coef
        grad_z += grad_y * outputs * (1.0 - outputs)

    return grad_z


def _coerce_states(states) -> list[np.ndarray]:
    out = []
    for s in states:
        values = s.values if isinstance(s, KnowledgeStateSequence) else np.asarray(s)
        if values.ndim != 2:
            raise ShapeError(f"knowledge states must be (T, M), got {values.shape}")
        out.append(values.astype(np.float64, copy=False))
    return out


def _assemble(states, sequences) -> tuple[np.ndarray, SequenceBatch]:
    ys = _coerce_states(states)
    pairs = [_sequence_arrays(s) for s in sequences]
    if len(ys) != len(pairs):
        raise ShapeError(
            f"{len(ys)} state sequences but {len(pairs)} interaction sequences"
        )
    m = ys[0].shape[1]
    for y, (sk, _) in zip(ys, pairs):
        if y.shape[1] != m:
            raise ShapeError("state sequences disagree on the skill count")
        if y.shape[0] != sk.size:
            raise ShapeError(
                f"state sequence of {y.shape[0]} steps does not match "
                f"interaction sequence of {sk.size}"
            )
    batch = SequenceBatch.from_arrays(pairs)
    outputs = np.zeros((batch.size, batch.max_len, m))
    for row, y in enumerate(ys):
        outputs[row, : y.shape[0], :] = y
    return outputs, batch


def loss_prediction(states, sequences) -> float:
    """Next-step cross-entropy averaged over all scored steps."""
    outputs, batch = _assemble(states, sequences)
    return loss_breakdown(outputs, batch).prediction


def regularizer_r(states, sequences) -> float:
    """Current-step reconstruction cross-entropy, same index range."""
    outputs, batch = _assemble(states, sequences)
    return loss_breakdown(outputs, batch).reconstruction


def regularizer_w(states, sequences) -> tuple[float, float]:
    """Waviness pair (L1 mean, squared L2 mean) of consecutive outputs."""
    outputs, batch = _assemble(states, sequences)
    b = loss_breakdown(outputs, batch)
    return b.waviness_l1, b.waviness_l2_sq


def loss_total(states, sequences, config) -> float:
    """Combined training objective under the config's lambda weights."""
    outputs, batch = _assemble(states, sequences)
    return loss_breakdown(outputs, batch).total(
        config.lambda_r, config.lambda_w1, config.lambda_w2
    )
