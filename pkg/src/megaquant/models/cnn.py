"""Convolutional multi-class regressor.

The network is a stack of conv blocks along the frequency axis, a
reduce stage collapsing the acquisition-channel axis to height one,
four further frequency convolutions, and a two-layer dense head. Each
conv block is convolution -> batchnorm (when the block dropout is 0) ->
relu -> dropout (when positive) -> max-pool (when the downsampling code
is negative). Positive downsampling codes use strides instead of
pooling. Trained with mean squared error on normalised targets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigError
from ..nn import Activation, BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool2D, Sequential
from ..preprocess import ExportConfig


@dataclass(frozen=True)
class CnnConfig:
    """Complete hyperparameter description of one CNN instance.

    ``down_early`` applies to the first two conv blocks, ``down_late``
    to the second and fourth tail blocks; positive values stride along
    frequency, negative values max-pool by the absolute value, zero
    neither. ``conv_dropout`` = 0 selects batch normalisation inside
    every conv block, > 0 selects dropout at that rate instead.
    """

    filters_early: int = 256
    filters_late: int = 512
    kernels: Tuple[int, int, int, int] = (9, 7, 5, 3)
    down_early: int = -2
    down_late: int = -3
    conv_dropout: float = 0.0
    dense_dropout: float = 0.3
    dense_units: int = 1024
    output_activation: str = "sigmoid"
    export: ExportConfig = field(default_factory=ExportConfig)
    batch_size: int = 16
    n_outputs: int = 5

    def __post_init__(self):
        if min(self.filters_early, self.filters_late, self.dense_units) < 1:
            raise ConfigError("filter and dense unit counts must be >= 1")
        if any(k < 3 or k % 2 == 0 for k in self.kernels):
            raise ConfigError(f"kernels must be odd and >= 3, got {self.kernels}")
        if not 0.0 <= self.dense_dropout < 1.0:
            raise ConfigError("dense dropout must lie in [0,1)")
        if not 0.0 <= self.conv_dropout < 1.0:
            raise ConfigError("conv dropout must lie in [0,1)")
        if self.output_activation not in ("sigmoid", "softmax"):
            raise ConfigError("output activation must be sigmoid or softmax")
        if self.n_outputs < 1 or self.batch_size < 1:
            raise ConfigError("n_outputs and batch_size must be >= 1")


def _block_plan(cfg: CnnConfig, n_channels: int) -> List[Tuple[int, Tuple[int, int], int]]:
    """(filters, kernel, down) for every conv block, reduce stage included."""
    k1, k2, k3, k4 = cfg.kernels
    plan = [(cfg.filters_early, (1, k1), cfg.down_early),
            (cfg.filters_early, (1, k2), cfg.down_early)]
    height = n_channels
    while height > 1:
        kh = min(height, 3)
        plan.append((cfg.filters_early, (kh, k3), 0))
        height -= kh - 1
    plan.extend([
        (cfg.filters_early, (1, k4), 0),
        (cfg.filters_early, (1, k4), cfg.down_late),
        (cfg.filters_late, (1, k4), 0),
        (cfg.filters_late, (1, k4), cfg.down_late),
    ])
    return plan


def cnn_shape_trace(cfg: CnnConfig, n_channels: Optional[int] = None,
                    n_points: Optional[int] = None) -> List[Tuple[str, Tuple[int, ...]]]:
    """Shape propagation without allocating weights.

    Returns (stage, (channels, height, width)) per stage plus the final
    dense shapes; lets the whole search space be validated cheaply.
    """
    n_channels = n_channels if n_channels is not None else cfg.export.n_channels
    n_points = n_points if n_points is not None else cfg.export.n_points
    c, h, w = 1, n_channels, n_points
    trace = [("input", (c, h, w))]
    for i, (filters, (kh, kw), down) in enumerate(_block_plan(cfg, n_channels)):
        if kh > h:
            raise ConfigError(f"block {i}: kernel height {kh} exceeds height {h}")
        h = h - kh + 1
        if down > 0:
            w = -(-w // down)
        elif down < 0:
            w = w // -down
            if w < 1:
                raise ConfigError(f"block {i}: pooling by {-down} exhausts the width")
        c = filters
        trace.append((f"conv{i}", (c, h, w)))
    trace.append(("flatten", (c * h * w,)))
    trace.append(("dense1", (cfg.dense_units,)))
    trace.append(("output", (cfg.n_outputs,)))
    return trace


def build_cnn(cfg: CnnConfig, rng: Optional[np.random.Generator] = None) -> Sequential:
    """Materialise the network; input shape is (N, 1, channels, n_points)."""
    rng = rng or np.random.default_rng(0)
    n_channels = cfg.export.n_channels
    layers = []
    c_in = 1
    for filters, kernel, down in _block_plan(cfg, n_channels):
        layers.append(Conv2D(c_in, filters, kernel,
                             stride_w=down if down > 0 else 1, rng=rng))
        if cfg.conv_dropout == 0.0:
            layers.append(BatchNorm(filters))
        layers.append(Activation("relu"))
        if cfg.conv_dropout > 0.0:
            layers.append(Dropout(cfg.conv_dropout))
        if down < 0:
            layers.append(MaxPool2D(-down))
        c_in = filters
    trace = cnn_shape_trace(cfg, n_channels)
    flat = trace[-3][1][0]
    layers.append(Flatten())
    layers.append(Dense(flat, cfg.dense_units, rng))
    layers.append(Activation("sigmoid"))
    if cfg.dense_dropout > 0.0:
        layers.append(Dropout(cfg.dense_dropout))
    layers.append(Dense(cfg.dense_units, cfg.n_outputs, rng))
    layers.append(Activation(cfg.output_activation))
    return Sequential(layers)
