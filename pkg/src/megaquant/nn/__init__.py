"""Minimal reverse-mode neural toolkit (float64, batch-first numpy)."""
from .gradcheck import kink_margin, max_relative_error
from .layers import (Activation, BatchNorm, Conv2D, Dense, Dropout, Flatten,
                     Layer, MaxPool2D, glorot_uniform)
from .losses import huber_loss, huber_loss_grad, mse_loss, mse_loss_grad
from .network import Sequential
from .optim import Adam, scaled_learning_rate

__all__ = [
    "Activation", "Adam", "BatchNorm", "Conv2D", "Dense", "Dropout", "Flatten",
    "Layer", "MaxPool2D", "Sequential", "glorot_uniform", "huber_loss",
    "huber_loss_grad", "kink_margin", "max_relative_error", "mse_loss",
    "mse_loss_grad", "scaled_learning_rate",
]
