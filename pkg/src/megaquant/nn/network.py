"""Sequential container wiring layers into one differentiable unit."""
from __future__ import annotations

from typing import List, Sequence

import numpy as np

from ..errors import DimensionError
from .layers import Dropout, Layer


class Sequential:
    """A plain layer pipeline; an empty pipeline is the identity."""

    def __init__(self, layers: Sequence[Layer] = ()):
        self.layers: List[Layer] = list(layers)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, training=training)
            except DimensionError as exc:
                raise DimensionError(
                    f"layer {i} ({type(layer).__name__}): {exc}") from exc
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self) -> List[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def grads(self) -> List[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def seed_dropout(self, rng: np.random.Generator):
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.seed(rng)

    def output_shape(self, input_shape):
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape
