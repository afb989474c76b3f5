"""Clip-level training losses: L1, the smoothness term over adjacent clip
estimates, and their weighted sum."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class LossBreakdown:
    l1: float
    smooth: float
    total: float
    lam: float


def smooth_loss(hrs) -> float:
    """Mean absolute deviation of a run of adjacent HR estimates from their mean."""
    x = np.asarray(hrs, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError(f"smooth loss needs at least 2 estimates, got {x.shape}")
    return float(np.abs(x - x.mean()).mean())


def smooth_loss_grad(hrs) -> np.ndarray:
    """Gradient of :func:`smooth_loss`, with sign(0) := 0 at ties.

    With ``s_i = sign(hr_i - mean)`` and ``T = len(hrs)``::

        dL/dhr_t = (s_t - mean(s)) / T
    """
    x = np.asarray(hrs, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError(f"smooth loss needs at least 2 estimates, got {x.shape}")
    s = np.sign(x - x.mean())
    return (s - s.mean()) / len(x)


def _groups(n: int, groups) -> list[np.ndarray]:
    if groups is None:
        return [np.arange(n)]
    return [np.asarray(g, dtype=np.int64) for g in groups]


def total_loss_and_grad(pred, gt, lam: float = 100.0,
                        groups: Sequence[Sequence[int]] | None = None) -> tuple[LossBreakdown, np.ndarray]:
    """``mean|pred - gt| + lam * smooth`` and its gradient w.r.t. ``pred``.

    ``groups`` lists index runs of adjacent clips; the smooth term is the
    mean of :func:`smooth_loss` over runs with at least two members (runs
    shorter than two are skipped). By default all of ``pred`` is one run.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {gt.shape} labels")
    if len(pred) == 0:
        raise ValueError("empty prediction list")
    diff = pred - gt
    l1 = float(np.abs(diff).mean())
    grad = np.sign(diff) / len(pred)

    runs = [g for g in _groups(len(pred), groups) if len(g) >= 2]
    smooth = 0.0
    if runs and lam != 0.0:
        for g in runs:
            smooth += smooth_loss(pred[g])
            grad[g] += lam * smooth_loss_grad(pred[g]) / len(runs)
        smooth /= len(runs)
    elif runs:
        smooth = float(np.mean([smooth_loss(pred[g]) for g in runs]))
    return LossBreakdown(l1, smooth, l1 + lam * smooth, lam), grad


def total_loss(pred, gt, lam: float = 100.0, groups=None) -> LossBreakdown:
    return total_loss_and_grad(pred, gt, lam, groups)[0]
