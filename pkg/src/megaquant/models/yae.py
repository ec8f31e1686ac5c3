"""Y-shaped autoencoder: shared encoder, reconstruction and quantifier heads.

Each input channel gets its own dense encoder halving the width per
layer down to a latent code, and its own decoder expanding back to the
full spectrum. The quantifier flattens all channel latents and
regresses concentrations. Both heads use the Huber loss; the quantifier
loss weight ramps up over the first epochs so early training is driven
by reconstruction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigError, DimensionError
from ..nn import Activation, Dense, Dropout, Sequential
from ..preprocess import ExportConfig


@dataclass(frozen=True)
class YaeConfig:
    encoder_depth: int = 5
    decoder_depth: int = 6
    quantifier_depth: int = 2
    quantifier_width: int = 384
    encoder_activation: str = "tanh"
    decoder_activation: str = "tanh"
    quantifier_activation: str = "sigmoid"
    output_activation: str = "sigmoid"
    encoder_dropout: float = 0.2
    export: ExportConfig = field(default_factory=lambda: ExportConfig(
        datatypes=("imaginary", "real")))
    batch_size: int = 16
    recon_weight: float = 1.0
    quant_weight_start: float = 0.1
    quant_weight_end: float = 1.0
    ramp_epochs: Optional[int] = None
    huber_delta: float = 1.0
    n_outputs: int = 5

    def __post_init__(self):
        if min(self.encoder_depth, self.decoder_depth, self.quantifier_depth) < 2:
            raise ConfigError("encoder, decoder and quantifier need depth >= 2")
        if not 0.0 <= self.encoder_dropout < 1.0:
            raise ConfigError("encoder dropout must lie in [0,1)")
        if self.quantifier_width < 1:
            raise ConfigError("quantifier width must be >= 1")
        n_f = self.export.n_points
        for depth, who in ((self.encoder_depth, "encoder"), (self.decoder_depth, "decoder")):
            if n_f % (1 << (depth - 1)) != 0:
                raise ConfigError(
                    f"n_points {n_f} not divisible by 2^{depth - 1} for the {who}")


def yae_widths(cfg: YaeConfig) -> Dict[str, List[int]]:
    """Layer widths implied by the halving scheme.

    encoder: hidden widths then the latent; decoder: hidden widths then
    the full spectrum; quantifier: hidden widths then the output. The
    decoder start width follows its own depth, independent of the
    latent width.
    """
    n_f = cfg.export.n_points
    encoder = [n_f >> (l - 1) for l in range(1, cfg.encoder_depth)]
    latent = n_f >> (cfg.encoder_depth - 1)
    decoder = [n_f >> (l - 1) for l in range(cfg.decoder_depth, 1, -1)]
    quantifier = [cfg.quantifier_width >> (l - 1) for l in range(1, cfg.quantifier_depth)]
    if any(w < 1 for w in quantifier):
        raise ConfigError("quantifier width halves to zero at this depth")
    return {"encoder": encoder + [latent],
            "decoder": decoder + [n_f],
            "quantifier": quantifier + [cfg.n_outputs],
            "latent": [latent]}


class YShapedAutoencoder:
    """Per-channel encoders and decoders with a shared quantifier head."""

    def __init__(self, cfg: YaeConfig, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        self.n_channels = cfg.export.n_channels
        self.n_points = cfg.export.n_points
        widths = yae_widths(cfg)
        self.latent_width = widths["latent"][0]

        self.encoders: List[Sequential] = []
        self.decoders: List[Sequential] = []
        for _ in range(self.n_channels):
            layers = []
            prev = self.n_points
            for w in widths["encoder"][:-1]:
                layers += [Dense(prev, w, rng), Activation(cfg.encoder_activation)]
                if cfg.encoder_dropout > 0:
                    layers.append(Dropout(cfg.encoder_dropout))
                prev = w
            layers += [Dense(prev, self.latent_width, rng),
                       Activation(cfg.encoder_activation)]
            self.encoders.append(Sequential(layers))

            layers = []
            prev = self.latent_width
            for w in widths["decoder"]:
                layers += [Dense(prev, w, rng), Activation(cfg.decoder_activation)]
                prev = w
            self.decoders.append(Sequential(layers))

        layers = []
        prev = self.n_channels * self.latent_width
        for w in widths["quantifier"][:-1]:
            layers += [Dense(prev, w, rng), Activation(cfg.quantifier_activation)]
            prev = w
        layers += [Dense(prev, cfg.n_outputs, rng), Activation(cfg.output_activation)]
        self.quantifier = Sequential(layers)

    def _parts(self) -> List[Sequential]:
        return self.encoders + self.decoders + [self.quantifier]

    def params(self) -> List[np.ndarray]:
        return [p for part in self._parts() for p in part.params()]

    def grads(self) -> List[np.ndarray]:
        return [g for part in self._parts() for g in part.grads()]

    def zero_grads(self):
        for part in self._parts():
            part.zero_grads()

    def seed_dropout(self, rng: np.random.Generator):
        for part in self._parts():
            part.seed_dropout(rng)

    def forward(self, x: np.ndarray, training: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """(reconstruction, concentrations) for input (N, channels, n_points)."""
        if x.ndim != 3 or x.shape[1] != self.n_channels or x.shape[2] != self.n_points:
            raise DimensionError(
                f"expected (N, {self.n_channels}, {self.n_points}), got {x.shape}")
        latents = [enc.forward(x[:, c, :], training)
                   for c, enc in enumerate(self.encoders)]
        recon = np.stack([dec.forward(z, training)
                          for dec, z in zip(self.decoders, latents)], axis=1)
        pred = self.quantifier.forward(np.concatenate(latents, axis=1), training)
        return recon, pred

    def backward(self, grad_recon: np.ndarray, grad_pred: np.ndarray):
        """Accumulate gradients for both heads; latents sum both paths."""
        grad_z = self.quantifier.backward(grad_pred)
        for c, (enc, dec) in enumerate(zip(self.encoders, self.decoders)):
            gl = dec.backward(grad_recon[:, c, :])
            gl = gl + grad_z[:, c * self.latent_width:(c + 1) * self.latent_width]
            enc.backward(gl)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, training=False)[1]

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, training=False)[0]


def build_yae(cfg: YaeConfig, rng: Optional[np.random.Generator] = None) -> YShapedAutoencoder:
    return YShapedAutoencoder(cfg, rng)
