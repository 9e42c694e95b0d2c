"""Finite-difference verification of the analytic parameter gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import loss_breakdown, output_grad
from .model import DktParams, SequenceBatch, backward_batch, forward_batch


def total_loss(
    params: DktParams,
    batch: SequenceBatch,
    lambda_r: float = 0.0,
    lambda_w1: float = 0.0,
    lambda_w2: float = 0.0,
) -> float:
    outputs, _ = forward_batch(params, batch)
    return loss_breakdown(outputs, batch).total(lambda_r, lambda_w1, lambda_w2)


def analytic_gradient(
    params: DktParams,
    batch: SequenceBatch,
    lambda_r: float = 0.0,
    lambda_w1: float = 0.0,
    lambda_w2: float = 0.0,
) -> DktParams:
    outputs, cache = forward_batch(params, batch, need_cache=True)
    grad_z = output_grad(outputs, batch, lambda_r, lambda_w1, lambda_w2)
    return backward_batch(params, batch, cache, grad_z)


@dataclass(frozen=True)
class GradientCheckReport:
    max_relative_error: float
    checked: int
    worst_component: str


def gradient_check(
    params: DktParams,
    batch: SequenceBatch,
    lambda_r: float = 0.0,
    lambda_w1: float = 0.0,
    lambda_w2: float = 0.0,
    epsilon: float = 1e-5,
    floor: float = 1e-6,
) -> GradientCheckReport:
    """Compare the analytic gradient against central differences.

    Every parameter component is perturbed individually. The relative
    error at a component divides by max(|analytic|, |numeric|, floor)
    so that near-zero pairs do not blow up the ratio.
    """
    analytic = analytic_gradient(params, batch, lambda_r, lambda_w1, lambda_w2)
    flat = params.flatten()
    flat_grad = analytic.flatten()
    worst = 0.0
    worst_name = ""
    names = _component_names(params)
    for idx in range(flat.size):
        bumped = flat.copy()
        bumped[idx] += epsilon
        loss_plus = total_loss(
            params.with_flat(bumped), batch, lambda_r, lambda_w1, lambda_w2
        )
        bumped[idx] = flat[idx] - epsilon
        loss_minus = total_loss(
            params.with_flat(bumped), batch, lambda_r, lambda_w1, lambda_w2
        )
        numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
        denom = max(abs(flat_grad[idx]), abs(numeric), floor)
        rel = abs(flat_grad[idx] - numeric) / denom
        if rel > worst:
            worst = rel
            worst_name = names[idx]
    return GradientCheckReport(
        max_relative_error=worst, checked=flat.size, worst_component=worst_name
    )


def _component_names(params: DktParams) -> list[str]:
    names = []
    for label, arr in zip(params.field_names(), params.arrays()):
        for pos in np.ndindex(arr.shape):
            names.append(f"{label}{list(pos)}")
    return names
