"""Mini-batch training with gradient clipping and early stopping.

Long sequences are cut into bounded segments for training so that one
pathological student cannot dominate a batch, but validation and every
downstream use of the model run over full, unsplit sequences. Model
selection watches next-step AUC on a held-out student split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, TrainingDivergedError, UndefinedMetricError
from ..metrics import auc as auc_score
from .losses import (
    LossBreakdown,
    breakdown_from_sums,
    loss_term_sums,
    output_grad,
)
from .model import (
    DktParams,
    SequenceBatch,
    _sequence_arrays,
    backward_batch,
    forward_batch,
)

_OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 200
    learning_rate: float = 0.01
    dropout: float = 0.5
    clip_norm: float = 3.0
    lambda_r: float = 0.0
    lambda_w1: float = 0.0
    lambda_w2: float = 0.0
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 5
    init_std: float = 0.05
    optimizer: str = "sgd"
    val_fraction: float = 0.2
    max_segment_len: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ConfigError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(
                f"learning_rate must lie in (0, 1], got {self.learning_rate}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        for name in ("lambda_r", "lambda_w1", "lambda_w2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.init_std <= 0:
            raise ConfigError(f"init_std must be positive, got {self.init_std}")
        if self.optimizer not in _OPTIMIZERS:
            raise ConfigError(
                f"optimizer must be one of {_OPTIMIZERS}, got {self.optimizer!r}"
            )
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(
                f"val_fraction must lie in [0, 1), got {self.val_fraction}"
            )
        if self.max_segment_len < 2:
            raise ConfigError(
                f"max_segment_len must be >= 2, got {self.max_segment_len}"
            )

    def dktplus(self) -> "TrainConfig":
        """Same configuration with the recommended regularizer weights."""
        return replace(self, lambda_r=0.1, lambda_w1=0.3, lambda_w2=3.0)

    def as_dict(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "learning_rate": self.learning_rate,
            "dropout": self.dropout,
            "clip_norm": self.clip_norm,
            "lambda_r": self.lambda_r,
            "lambda_w1": self.lambda_w1,
            "lambda_w2": self.lambda_w2,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "init_std": self.init_std,
            "optimizer": self.optimizer,
            "val_fraction": self.val_fraction,
            "max_segment_len": self.max_segment_len,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss_total: float
    loss_prediction: float
    loss_reconstruction: float
    waviness_l1: float
    waviness_l2_sq: float
    val_auc: float
    grad_norm_max: float


@dataclass
class TrainResult:
    params: DktParams
    n_skills: int
    config: TrainConfig
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_auc: float = math.nan
    stopped_early: bool = False

    @property
    def n_epochs_run(self) -> int:
        return len(self.history)


def _segment(pairs, max_len: int):
    """Cut (skills, corrects) pairs into chunks of at most max_len steps.

    Chunks shorter than 2 steps carry no loss terms and are dropped.
    """
    out = []
    for sk, co in pairs:
        for start in range(0, sk.size, max_len):
            s = sk[start : start + max_len]
            c = co[start : start + max_len]
            if s.size >= 2:
                out.append((s, c))
    return out


def _clip_gradient(grads: DktParams, clip_norm: float) -> float:
    """Scale the gradient to the clip norm when it exceeds it.

    Returns the norm measured after any scaling, not the pre-clip norm
    capped on paper.
    """
    sq = sum(float(np.sum(a * a)) for a in grads.arrays())
    norm = math.sqrt(sq)
    if norm > clip_norm and norm > 0:
        factor = clip_norm / norm
        for a in grads.arrays():
            a *= factor
        sq = sum(float(np.sum(a * a)) for a in grads.arrays())
        norm = math.sqrt(sq)
    return norm


class _Adam:
    def __init__(self, params: DktParams, learning_rate: float):
        self.lr = learning_rate
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-8
        self.step = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def update(self, params: DktParams, grads: DktParams) -> None:
        self.step += 1
        correct1 = 1.0 - self.beta1**self.step
        correct2 = 1.0 - self.beta2**self.step
        for a, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            a -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def _sgd_update(params: DktParams, grads: DktParams, learning_rate: float) -> None:
    for a, g in zip(params.arrays(), grads.arrays()):
        a -= learning_rate * g


def next_step_predictions(
    params: DktParams, sequences, chunk_size: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """Pool next-step probabilities and answers over full sequences.

    For each sequence, the model's output at step t for the skill asked
    at step t+1 is paired with the answer given at t+1. Sequences with a
    single step contribute nothing.
    """
    pairs = [_sequence_arrays(s) for s in sequences]
    pairs = [p for p in pairs if p[0].size >= 2]
    probs: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    for start in range(0, len(pairs), chunk_size):
        chunk = pairs[start : start + chunk_size]
        batch = SequenceBatch.from_arrays(chunk)
        outputs, _ = forward_batch(params, batch)
        for row, (sk, co) in enumerate(chunk):
            t = np.arange(sk.size - 1)
            probs.append(outputs[row, t, sk[1:]])
            targets.append(co[1:])
    if not probs:
        return np.empty(0), np.empty(0)
    return np.concatenate(probs), np.concatenate(targets)


def evaluate_losses(
    params: DktParams, sequences, chunk_size: int = 64
) -> LossBreakdown:
    """Loss components over full, unsplit sequences without dropout."""
    pairs = [_sequence_arrays(s) for s in sequences]
    pairs = [p for p in pairs if p[0].size >= 2]
    sums = [0.0, 0.0, 0.0, 0.0, 0]
    for start in range(0, len(pairs), chunk_size):
        chunk = pairs[start : start + chunk_size]
        batch = SequenceBatch.from_arrays(chunk)
        outputs, _ = forward_batch(params, batch)
        part = loss_term_sums(outputs, batch)
        for i in range(5):
            sums[i] += part[i]
    return breakdown_from_sums(tuple(sums), params.n_skills)


def _validation_auc(params: DktParams, sequences) -> float:
    probs, targets = next_step_predictions(params, sequences)
    if probs.size == 0:
        return math.nan
    try:
        return auc_score(probs, targets)
    except UndefinedMetricError:
        return math.nan


def train(sequences, n_skills: int, config: TrainConfig) -> TrainResult:
    """Fit the model; returns the best parameters seen under validation.

    Students are split once into train and validation groups. Training
    runs over shuffled segment mini-batches; after each epoch the
    validation next-step AUC decides early stopping. Without validation
    students (val_fraction 0 or too few students) every epoch runs and
    the final parameters win.
    """
    all_pairs = [_sequence_arrays(s) for s in sequences]
    if not all_pairs:
        raise ValueError("training needs at least one sequence")
    rng = np.random.default_rng(config.seed)

    n_students = len(all_pairs)
    n_val = int(round(n_students * config.val_fraction))
    if config.val_fraction > 0 and n_val == 0 and n_students >= 2:
        n_val = 1
    if n_val >= n_students:
        n_val = n_students - 1
    order = rng.permutation(n_students)
    val_pairs = [all_pairs[i] for i in order[:n_val]]
    train_pairs = [all_pairs[i] for i in order[n_val:]]

    segments = _segment(train_pairs, config.max_segment_len)
    if not segments:
        raise ValueError(
            "no trainable segments: every training sequence has fewer than 2 steps"
        )

    params = DktParams.initialize(
        n_skills, config.hidden_size, config.init_std, rng
    )
    adam = _Adam(params, config.learning_rate) if config.optimizer == "adam" else None

    result = TrainResult(params=params, n_skills=n_skills, config=config)
    best_params = params.copy()
    best_auc = -math.inf
    best_epoch = 0
    epochs_since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(segments))
        epoch_sums = [0.0, 0.0, 0.0, 0.0, 0]
        grad_norm_max = 0.0

        for start in range(0, len(segments), config.batch_size):
            chunk = [segments[i] for i in perm[start : start + config.batch_size]]
            batch = SequenceBatch.from_arrays(chunk)
            outputs, cache = forward_batch(
                params,
                batch,
                dropout_rate=config.dropout,
                rng=rng,
                need_cache=True,
            )
            part = loss_term_sums(outputs, batch)
            for i in range(5):
                epoch_sums[i] += part[i]
            grad_z = output_grad(
                outputs,
                batch,
                config.lambda_r,
                config.lambda_w1,
                config.lambda_w2,
            )
            grads = backward_batch(params, batch, cache, grad_z)
            norm = _clip_gradient(grads, config.clip_norm)
            if not math.isfinite(norm):
                raise TrainingDivergedError(epoch)
            grad_norm_max = max(grad_norm_max, norm)
            if adam is not None:
                adam.update(params, grads)
            else:
                _sgd_update(params, grads, config.learning_rate)

        if not params.is_finite():
            raise TrainingDivergedError(epoch)

        breakdown = breakdown_from_sums(tuple(epoch_sums), n_skills)
        val_auc = _validation_auc(params, val_pairs) if val_pairs else math.nan
        result.history.append(
            EpochRecord(
                epoch=epoch,
                loss_total=breakdown.total(
                    config.lambda_r, config.lambda_w1, config.lambda_w2
                ),
                loss_prediction=breakdown.prediction,
                loss_reconstruction=breakdown.reconstruction,
                waviness_l1=breakdown.waviness_l1,
                waviness_l2_sq=breakdown.waviness_l2_sq,
                val_auc=val_auc,
                grad_norm_max=grad_norm_max,
            )
        )

        if val_pairs:
            if math.isfinite(val_auc) and val_auc > best_auc:
                best_auc = val_auc
                best_params = params.copy()
                best_epoch = epoch
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= config.patience:
                    result.stopped_early = True
                    break
        else:
            best_params = params
            best_epoch = epoch

    if best_epoch == 0:
        # Validation never produced a usable AUC; keep the final model.
        best_params = params
        best_epoch = result.history[-1].epoch
    result.params = best_params
    result.best_epoch = best_epoch
    result.best_val_auc = best_auc if math.isfinite(best_auc) else math.nan
    return result


def write_training_log(path, result: TrainResult) -> None:
    """One CSV row per epoch with loss components and validation AUC."""
    lines = [
        "epoch,loss_total,loss_prediction,loss_reconstruction,"
        "waviness_l1,waviness_l2_sq,val_auc,grad_norm_max"
    ]
    for rec in result.history:
        lines.append(
            ",".join(
                [str(rec.epoch)]
                + [
                    repr(float(v))
                    for v in (
                        rec.loss_total,
                        rec.loss_prediction,
                        rec.loss_reconstruction,
                        rec.waviness_l1,
                        rec.waviness_l2_sq,
                        rec.val_auc,
                        rec.grad_norm_max,
                    )
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
