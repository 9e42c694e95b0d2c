"""Single-layer LSTM over one-hot interaction encodings.

The input at each step is the length-2M encoding of (skill, correctness);
since at most two positions are set, input projections are computed by
gathering rows of the input weight matrix instead of materializing the
one-hot vectors. The output layer maps the hidden state through a sigmoid
to per-skill correctness probabilities. Dropout, when enabled, acts on the
hidden-to-output connection only.

Gate order in the stacked weight matrices is input, forget, cell, output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data_model import StudentSequence
from ..errors import ShapeError

# Probabilities are kept this far away from exact 0 and 1.
PROB_EPS = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class DktParams:
    """Model weights.

    w_in:  (2M, 4H) input weights, rows 0..M-1 for the skill half and
           rows M..2M-1 for the correctness half of the encoding.
    u_rec: (H, 4H) recurrent weights.
    b_gate: (4H,) gate biases.
    w_out: (H, M) and b_out: (M,) output layer.
    """

    w_in: np.ndarray
    u_rec: np.ndarray
    b_gate: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    @property
    def n_skills(self) -> int:
        return self.w_in.shape[0] // 2

    @property
    def hidden_size(self) -> int:
        return self.u_rec.shape[0]

    def __post_init__(self):
        m2, h4 = self.w_in.shape
        h = self.u_rec.shape[0]
        m = m2 // 2
        if m2 != 2 * m or h4 != 4 * h:
            raise ShapeError(f"w_in shape {self.w_in.shape} is not (2M, 4H)")
        if self.u_rec.shape != (h, 4 * h):
            raise ShapeError(f"u_rec shape {self.u_rec.shape} is not (H, 4H)")
        if self.b_gate.shape != (4 * h,):
            raise ShapeError(f"b_gate shape {self.b_gate.shape} is not (4H,)")
        if self.w_out.shape != (h, m):
            raise ShapeError(f"w_out shape {self.w_out.shape} is not (H, M)")
        if self.b_out.shape != (m,):
            raise ShapeError(f"b_out shape {self.b_out.shape} is not (M,)")

    @classmethod
    def initialize(
        cls, n_skills: int, hidden_size: int, std: float, rng: np.random.Generator
    ) -> "DktParams":
        """Zero-mean Gaussian weights; biases zero except the forget gate at 1."""
        if n_skills < 1 or hidden_size < 1:
            raise ValueError("n_skills and hidden_size must be >= 1")
        if std <= 0:
            raise ValueError(f"init std must be positive, got {std}")
        m, h = n_skills, hidden_size
        b_gate = np.zeros(4 * h)
        b_gate[h : 2 * h] = 1.0
        return cls(
            w_in=rng.normal(0.0, std, size=(2 * m, 4 * h)),
            u_rec=rng.normal(0.0, std, size=(h, 4 * h)),
            b_gate=b_gate,
            w_out=rng.normal(0.0, std, size=(h, m)),
            b_out=np.zeros(m),
        )

    @staticmethod
    def field_names() -> list[str]:
        return ["w_in", "u_rec", "b_gate", "w_out", "b_out"]

    def arrays(self) -> list[np.ndarray]:
        return [self.w_in, self.u_rec, self.b_gate, self.w_out, self.b_out]

    def copy(self) -> "DktParams":
        return DktParams(*[a.copy() for a in self.arrays()])

    def zeros_like(self) -> "DktParams":
        return DktParams(*[np.zeros_like(a) for a in self.arrays()])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vector: np.ndarray) -> "DktParams":
        """Rebuild a parameter set from a flat vector of matching size."""
        out = []
        offset = 0
        for a in self.arrays():
            out.append(vector[offset : offset + a.size].reshape(a.shape).copy())
            offset += a.size
        if offset != vector.size:
            raise ShapeError(
                f"flat vector has {vector.size} entries, expected {offset}"
            )
        return DktParams(*out)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass(frozen=True)
class KnowledgeStateSequence:
    """Per-step skill mastery estimates, shape (T, M), entries in (0, 1)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeError(f"expected (T, M) matrix, got shape {self.values.shape}")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def last_state(self) -> np.ndarray:
        return self.values[-1]


@dataclass
class SequenceBatch:
    """Padded batch of interaction sequences.

    skills: (B, T) int, -1 past each row's length.
    corrects: (B, T) float 0/1, 0 past the length.
    lengths: (B,) int.
    """

    skills: np.ndarray
    corrects: np.ndarray
    lengths: np.ndarray

    @property
    def size(self) -> int:
        return self.skills.shape[0]

    @property
    def max_len(self) -> int:
        return self.skills.shape[1]

    @property
    def n_loss_terms(self) -> int:
        return int(np.maximum(self.lengths - 1, 0).sum())

    def step_mask(self) -> np.ndarray:
        return np.arange(self.max_len)[None, :] < self.lengths[:, None]

    @classmethod
    def from_arrays(cls, pairs: list[tuple[np.ndarray, np.ndarray]]) -> "SequenceBatch":
        if not pairs:
            raise ValueError("batch needs at least one sequence")
        lengths = np.array([len(s) for s, _ in pairs], dtype=np.int64)
        if lengths.min() < 1:
            raise ValueError("every sequence must hold at least one step")
        t_max = int(lengths.max())
        b = len(pairs)
        skills = np.full((b, t_max), -1, dtype=np.int64)
        corrects = np.zeros((b, t_max), dtype=np.float64)
        for row, (s, c) in enumerate(pairs):
            s = np.asarray(s, dtype=np.int64)
            c = np.asarray(c, dtype=np.float64)
            if s.shape != c.shape or s.ndim != 1:
                raise ShapeError("skills and corrects must be matching 1-D arrays")
            skills[row, : s.size] = s
            corrects[row, : c.size] = c
        return cls(skills, corrects, lengths)

    @classmethod
    def from_sequences(cls, sequences) -> "SequenceBatch":
        pairs = [_sequence_arrays(s) for s in sequences]
        return cls.from_arrays(pairs)

    def validate_against(self, n_skills: int) -> None:
        mask = self.step_mask()
        valid = self.skills[mask]
        if valid.size and (valid.min() < 0 or valid.max() >= n_skills):
            raise ShapeError(
                f"skill ids must lie in [0, {n_skills}), got range "
                f"[{valid.min()}, {valid.max()}]"
            )


def _sequence_arrays(seq) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(seq, StudentSequence):
        return seq.skill_array(), seq.correct_array()
    skills, corrects = seq
    return np.asarray(skills, dtype=np.int64), np.asarray(corrects, dtype=np.float64)


@dataclass
class ForwardCache:
    """Per-step activations kept for backpropagation."""

    skills: np.ndarray  # (T, B) clipped gather indices
    corrects: np.ndarray  # (T, B)
    gate_i: np.ndarray  # (T, B, H)
    gate_f: np.ndarray
    gate_g: np.ndarray
    gate_o: np.ndarray
    cell: np.ndarray
    cell_tanh: np.ndarray
    hidden: np.ndarray
    dropped_hidden: np.ndarray
    drop_mask: np.ndarray | None


def forward_batch(
    params: DktParams,
    batch: SequenceBatch,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
    need_cache: bool = False,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Run the LSTM over a padded batch.

    Returns the output probabilities (B, T, M) and, when requested, the
    activation cache. Outputs at padded steps are computed from junk state
    and must be ignored through the batch mask.
    """
    if dropout_rate and rng is None:
        raise ValueError("dropout needs a random generator")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError(f"dropout_rate must lie in [0, 1), got {dropout_rate}")
    batch.validate_against(params.n_skills)

    m, h = params.n_skills, params.hidden_size
    b, t_max = batch.size, batch.max_len
    sk_all = np.where(batch.skills >= 0, batch.skills, 0)

    cache = None
    if need_cache:
        shape = (t_max, b, h)
        cache = ForwardCache(
            skills=sk_all.T.copy(),
            corrects=batch.corrects.T.copy(),
            gate_i=np.empty(shape),
            gate_f=np.empty(shape),
            gate_g=np.empty(shape),
            gate_o=np.empty(shape),
            cell=np.empty(shape),
            cell_tanh=np.empty(shape),
            hidden=np.empty(shape),
            dropped_hidden=np.empty(shape),
            drop_mask=np.empty(shape) if dropout_rate else None,
        )

    outputs = np.empty((b, t_max, m))
    h_prev = np.zeros((b, h))
    c_prev = np.zeros((b, h))
    keep = 1.0 - dropout_rate

    for t in range(t_max):
        sk = sk_all[:, t]
        correct = batch.corrects[:, t]
        pre = params.w_in[sk] + correct[:, None] * params.w_in[m + sk]
        pre += h_prev @ params.u_rec + params.b_gate
        gi = sigmoid(pre[:, :h])
        gf = sigmoid(pre[:, h : 2 * h])
        gg = np.tanh(pre[:, 2 * h : 3 * h])
        go = sigmoid(pre[:, 3 * h :])
        cell = gf * c_prev + gi * gg
        cell_tanh = np.tanh(cell)
        hidden = go * cell_tanh
        if dropout_rate:
            mask = (rng.random((b, h)) >= dropout_rate) / keep
            dropped = hidden * mask
        else:
            mask = None
            dropped = hidden
        z = dropped @ params.w_out + params.b_out
        outputs[:, t, :] = np.clip(sigmoid(z), PROB_EPS, 1.0 - PROB_EPS)

        if cache is not None:
            cache.gate_i[t] = gi
            cache.gate_f[t] = gf
            cache.gate_g[t] = gg
            cache.gate_o[t] = go
            cache.cell[t] = cell
            cache.cell_tanh[t] = cell_tanh
            cache.hidden[t] = hidden
            cache.dropped_hidden[t] = dropped
            if mask is not None:
                cache.drop_mask[t] = mask
        h_prev, c_prev = hidden, cell

    return outputs, cache


def forward(
    params: DktParams,
    sequence,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> KnowledgeStateSequence:
    """Knowledge-state trajectory of one full, unsplit sequence."""
    batch = SequenceBatch.from_arrays([_sequence_arrays(sequence)])
    outputs, _ = forward_batch(params, batch, dropout_rate=dropout_rate, rng=rng)
    return KnowledgeStateSequence(outputs[0])


def backward_batch(
    params: DktParams,
    batch: SequenceBatch,
    cache: ForwardCache,
    grad_z: np.ndarray,
) -> DktParams:
    """Backpropagate a gradient given with respect to the output-layer
    preactivation (shape (B, T, M), zero at padded steps)."""
    m, h = params.n_skills, params.hidden_size
    b, t_max = batch.size, batch.max_len
    if grad_z.shape != (b, t_max, m):
        raise ShapeError(
            f"grad_z shape {grad_z.shape} does not match batch ({b}, {t_max}, {m})"
        )

    grads = params.zeros_like()
    dh_next = np.zeros((b, h))
    dc_next = np.zeros((b, h))
    d_pre = np.empty((b, 4 * h))

    for t in range(t_max - 1, -1, -1):
        dz = grad_z[:, t, :]
        grads.w_out += cache.dropped_hidden[t].T @ dz
        grads.b_out += dz.sum(axis=0)
        dh = dz @ params.w_out.T
        if cache.drop_mask is not None:
            dh *= cache.drop_mask[t]
        dh += dh_next

        gi, gf = cache.gate_i[t], cache.gate_f[t]
        gg, go = cache.gate_g[t], cache.gate_o[t]
        cell_tanh = cache.cell_tanh[t]
        c_prev = cache.cell[t - 1] if t > 0 else 0.0

        do = dh * cell_tanh
        dc = dc_next + dh * go * (1.0 - cell_tanh**2)
        d_pre[:, :h] = (dc * gg) * gi * (1.0 - gi)
        d_pre[:, h : 2 * h] = (dc * c_prev) * gf * (1.0 - gf)
        d_pre[:, 2 * h : 3 * h] = (dc * gi) * (1.0 - gg**2)
        d_pre[:, 3 * h :] = do * go * (1.0 - go)

        grads.b_gate += d_pre.sum(axis=0)
        if t > 0:
            grads.u_rec += cache.hidden[t - 1].T @ d_pre
        sk = cache.skills[t]
        np.add.at(grads.w_in, sk, d_pre)
        np.add.at(grads.w_in, m + sk, cache.corrects[t][:, None] * d_pre)

        dh_next = d_pre @ params.u_rec.T
        dc_next = dc * gf

    return grads
