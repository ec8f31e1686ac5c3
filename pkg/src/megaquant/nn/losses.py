"""Loss functions, each with value and gradient (mean over all elements)."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, DomainError


def _check(pred, target):
    if pred.shape != target.shape:
        raise DimensionError(f"loss shapes differ: {pred.shape} vs {target.shape}")


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    _check(pred, target)
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    _check(pred, target)
    return 2.0 * (pred - target) / pred.size


def huber_loss(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> float:
    """Quadratic below ``delta``, linear above; mean over elements."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    _check(pred, target)
    err = np.abs(pred - target)
    quad = 0.5 * err * err
    lin = delta * (err - 0.5 * delta)
    return float(np.mean(np.where(err <= delta, quad, lin)))


def huber_loss_grad(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> np.ndarray:
    if delta <= 0:
        raise DomainError("delta must be positive")
    _check(pred, target)
    return np.clip(pred - target, -delta, delta) / pred.size
