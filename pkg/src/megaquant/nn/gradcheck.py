"""Central finite-difference validation of analytic gradients.

Central differences with step h carry O(h^2) truncation plus float64
cancellation noise of roughly 1e-11 on unit-scale losses, so exactly
zero analytic gradients need an absolute floor in the denominator.
Piecewise-linear layers (relu, max pooling) are only differentiable
away from their kinks; ``kink_margin`` lets callers resample inputs
that land too close for the step size to stay on one branch.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .layers import Activation, MaxPool2D
from .network import Sequential

DEFAULT_STEP = 1e-5
DEFAULT_FLOOR = 1e-6


def max_relative_error(net: Sequential, x: np.ndarray, target: np.ndarray,
                       loss: Callable, loss_grad: Callable,
                       step: float = DEFAULT_STEP, floor: float = DEFAULT_FLOOR,
                       coords_per_param: int = 10,
                       rng: np.random.Generator | None = None,
                       training: bool = True, dropout_seed: int = 7) -> float:
    """Worst relative disagreement between backprop and central differences.

    Relative error per coordinate is |num - ana| / max(|num|, |ana|, floor);
    the floor absorbs finite-difference noise where the true gradient is 0.
    Dropout layers are reseeded identically before every evaluation so
    the sampled masks are held fixed while parameters are perturbed.
    """
    rng = rng or np.random.default_rng(0)

    def evaluate():
        net.seed_dropout(np.random.default_rng(dropout_seed))
        return loss(net.forward(x, training=training), target)

    net.seed_dropout(np.random.default_rng(dropout_seed))
    out = net.forward(x, training=training)
    net.zero_grads()
    net.backward(loss_grad(out, target))
    analytic = [g.copy() for g in net.grads()]

    worst = 0.0
    for p, g in zip(net.params(), analytic):
        flat_p, flat_g = p.ravel(), g.ravel()
        n = min(coords_per_param, flat_p.size)
        for i in rng.choice(flat_p.size, size=n, replace=False):
            orig = flat_p[i]
            flat_p[i] = orig + step
            lp = evaluate()
            flat_p[i] = orig - step
            lm = evaluate()
            flat_p[i] = orig
            numeric = (lp - lm) / (2.0 * step)
            rel = abs(numeric - flat_g[i]) / max(abs(numeric), abs(flat_g[i]), floor)
            worst = max(worst, rel)
    return worst


def kink_margin(net: Sequential, x: np.ndarray, training: bool = True,
                dropout_seed: int = 7) -> float:
    """Smallest distance of any relu input to 0 or pooling runner-up gap.

    A margin well above the finite-difference step guarantees the
    perturbed forward passes stay on the same linear branch. Dropout is
    seeded with the same default as the gradient check so the walked
    network matches the one being differenced.
    """
    net.seed_dropout(np.random.default_rng(dropout_seed))
    margin = np.inf
    for layer in net.layers:
        if isinstance(layer, Activation) and layer.name == "relu":
            margin = min(margin, float(np.min(np.abs(x))))
        if isinstance(layer, MaxPool2D) and layer.pw > 1:
            n, c, h, w = x.shape
            w_out = w // layer.pw
            win = np.sort(x[:, :, :, :w_out * layer.pw]
                          .reshape(n, c, h, w_out, layer.pw), axis=-1)
            gaps = win[..., -1] - win[..., -2]
            # exact ties come from relu-clipped zeros and stay tied under
            # perturbation; only small nonzero gaps can flip the argmax
            unstable = gaps[gaps > 0]
            if unstable.size:
                margin = min(margin, float(unstable.min()))
        x = layer.forward(x, training=training)
    return margin
