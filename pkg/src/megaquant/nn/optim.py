"""Adam optimiser with the linear batch-size learning-rate scaling rule."""
from __future__ import annotations

import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import DimensionError, TrainingError

BASE_LEARNING_RATE = 1e-4
BASE_BATCH_SIZE = 16


def scaled_learning_rate(batch_size: int, base_lr: float = BASE_LEARNING_RATE,
                         base_batch: int = BASE_BATCH_SIZE) -> float:
    """Learning rate scaled linearly with batch size (1e-4 at batch 16)."""
    return base_lr * batch_size / base_batch


class Adam:
    """Bias-corrected Adam updating parameter arrays in place.

    The bias corrections are folded into per-step scalars,
    p -= lr * sqrt(bc2)/bc1 * m / (sqrt(v) + eps * sqrt(bc2)),
    which is algebraically identical to the textbook update but needs
    fewer passes over the moment buffers. Scratch space is reused per
    parameter shape to avoid allocation churn in the hot loop.
    """

    def __init__(self, params: Sequence[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.lr = learning_rate
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self.m: List[np.ndarray] = [np.zeros_like(p) for p in self.params]
        self.v: List[np.ndarray] = [np.zeros_like(p) for p in self.params]
        self.step_count = 0
        self._scratch: Dict[Tuple[int, ...], np.ndarray] = {}

    def _buffer(self, shape) -> np.ndarray:
        buf = self._scratch.get(shape)
        if buf is None:
            buf = np.empty(shape)
            self._scratch[shape] = buf
        return buf

    def step(self, grads: Sequence[np.ndarray]):
        if len(grads) != len(self.params):
            raise DimensionError("gradient list does not match parameter list")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        lr_t = self.lr * math.sqrt(bc2) / bc1
        eps_t = self.epsilon * math.sqrt(bc2)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise DimensionError(f"gradient shape {g.shape} vs parameter {p.shape}")
            s = self._buffer(p.shape)
            np.multiply(g, g, out=s)
            if not math.isfinite(float(s.sum())):
                raise TrainingError(
                    f"non-finite gradient for parameter of shape {p.shape} "
                    f"at step {t}")
            v *= self.beta2
            s *= 1.0 - self.beta2
            v += s
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=s)
            m += s
            np.sqrt(v, out=s)
            s += eps_t
            np.divide(m, s, out=s)
            s *= lr_t
            p -= s
