"""Gaussian-process model selection over mixed hyperparameter spaces."""
from .acquisition import expected_improvement, propose_ei, propose_thompson
from .gp import GpState, KernelParams, gp_fit
from .loop import BoBudget, SelectionResult, select_model
from .space import Categorical, ConfigSpace, Ordinal

__all__ = [
    "BoBudget", "Categorical", "ConfigSpace", "GpState", "KernelParams",
    "Ordinal", "SelectionResult", "expected_improvement", "gp_fit",
    "propose_ei", "propose_thompson", "select_model",
]
