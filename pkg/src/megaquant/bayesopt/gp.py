"""Exact Gaussian-process regression with a squared-exponential kernel.

Zero prior mean, per-dimension length scales, and a noise variance with
a small floor. Hyperparameters are fitted by maximising the log
marginal likelihood with multi-start L-BFGS over log-parameters, using
the analytic gradient. A fixed jitter stabilises every factorisation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

from ..errors import ConditioningError, DomainError

JITTER = 1e-8
NOISE_FLOOR = 1e-6


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    length_scales: np.ndarray
    noise_variance: float

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=np.float64)
        object.__setattr__(self, "length_scales", ls)
        if self.signal_variance <= 0 or np.any(ls <= 0) or self.noise_variance < 0:
            raise DomainError("kernel parameters must be positive (noise >= 0)")


def _sq_dists(xa: np.ndarray, xb: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    a = xa / length_scales
    b = xb / length_scales
    return np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)


def kernel_matrix(xa, xb, params: KernelParams) -> np.ndarray:
    return params.signal_variance * np.exp(-0.5 * _sq_dists(xa, xb, params.length_scales))


class GpState:
    """Fitted posterior; supports zero observations (pure prior)."""

    def __init__(self, x: np.ndarray, y: np.ndarray, params: KernelParams):
        self.x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self.y = np.asarray(y, dtype=np.float64)
        if self.y.size == 0:
            self.x = self.x.reshape(0, self.x.shape[-1] if self.x.size else 1)
        self.params = params
        if not np.all(np.isfinite(self.y)):
            raise DomainError("observed objectives must be finite")
        if len(self.y) > 1 and params.noise_variance < 1e-12:
            # with (near) zero noise, duplicate inputs with conflicting
            # values make exact interpolation impossible
            for i in range(len(self.y)):
                same = np.all(self.x == self.x[i], axis=1)
                if np.any(same & (self.y != self.y[i])):
                    raise ConditioningError(
                        "duplicate points with conflicting values and zero noise")
        if len(self.y):
            k = kernel_matrix(self.x, self.x, params)
            k[np.diag_indices_from(k)] += params.noise_variance + JITTER
            try:
                self._chol = cho_factor(k, lower=True)
            except np.linalg.LinAlgError as exc:
                raise ConditioningError(
                    "kernel matrix not positive definite (duplicate points "
                    "with conflicting values and zero noise?)") from exc
            self.alpha = cho_solve(self._chol, self.y)
        else:
            self._chol = None
            self.alpha = np.zeros(0)

    @property
    def n_observations(self) -> int:
        return len(self.y)

    def posterior(self, xq) -> Tuple[np.ndarray, np.ndarray]:
        """Latent mean and variance at query points (m, d) -> (m,), (m,)."""
        xq = np.atleast_2d(np.asarray(xq, dtype=np.float64))
        if self._chol is None:
            return (np.zeros(len(xq)),
                    np.full(len(xq), self.params.signal_variance))
        ks = kernel_matrix(self.x, xq, self.params)
        mean = ks.T @ self.alpha
        v = solve_triangular(self._chol[0], ks, lower=True)
        var = self.params.signal_variance - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def posterior_cov(self, xq) -> Tuple[np.ndarray, np.ndarray]:
        """Joint latent mean and covariance over the query set."""
        xq = np.atleast_2d(np.asarray(xq, dtype=np.float64))
        kss = kernel_matrix(xq, xq, self.params)
        if self._chol is None:
            return np.zeros(len(xq)), kss
        ks = kernel_matrix(self.x, xq, self.params)
        mean = ks.T @ self.alpha
        v = solve_triangular(self._chol[0], ks, lower=True)
        return mean, kss - v.T @ v

    def incumbent(self) -> float:
        if not len(self.y):
            raise DomainError("no observations, no incumbent")
        return float(self.y.min())


def _log_marginal_likelihood(theta, x, y, d):
    """LML and gradient in theta = log(signal, ls_1..ls_d, noise)."""
    signal = np.exp(theta[0])
    ls = np.exp(theta[1:1 + d])
    noise = np.exp(theta[1 + d])
    n = len(y)
    scaled = x / ls
    sq = np.sum((scaled[:, None, :] - scaled[None, :, :]) ** 2, axis=2)
    kf = signal * np.exp(-0.5 * sq)
    k = kf + (noise + JITTER) * np.eye(n)
    try:
        chol = cho_factor(k, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf, np.zeros_like(theta)
    alpha = cho_solve(chol, y)
    lml = (-0.5 * float(y @ alpha)
           - float(np.sum(np.log(np.diag(chol[0]))))
           - 0.5 * n * np.log(2 * np.pi))
    kinv = cho_solve(chol, np.eye(n))
    outer = np.outer(alpha, alpha) - kinv
    grad = np.empty_like(theta)
    grad[0] = 0.5 * float(np.sum(outer * kf))
    for j in range(d):
        dk = kf * ((x[:, None, j] - x[None, :, j]) ** 2) / ls[j] ** 2
        grad[1 + j] = 0.5 * float(np.sum(outer * dk))
    grad[1 + d] = 0.5 * float(np.trace(outer)) * noise
    return lml, grad


def fit_kernel_params(x: np.ndarray, y: np.ndarray, restarts: int = 4,
                      seed: int = 0, noise_floor: float = NOISE_FLOOR) -> KernelParams:
    """Maximise the log marginal likelihood from several start points."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    d = x.shape[1]
    y_scale = max(float(np.var(y)), 1e-4)
    # objectives are deterministic CV means; the noise term only absorbs
    # residual jitter, so its upper bound stays small
    bounds = ([(np.log(1e-6), np.log(1e3))]
              + [(np.log(0.03), np.log(30.0))] * d
              + [(np.log(noise_floor), np.log(1e-2))])
    starts = [np.concatenate(([np.log(y_scale)], np.log(0.5) * np.ones(d),
                              [np.log(max(noise_floor, 1e-4))]))]
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(max(restarts - 1, 0)):
        starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))
    best_theta, best_lml = starts[0], -np.inf
    for theta0 in starts:
        res = minimize(lambda t: tuple(-v for v in _log_marginal_likelihood(t, x, y, d)),
                       theta0, jac=True, method="L-BFGS-B", bounds=bounds)
        if np.isfinite(res.fun) and -res.fun > best_lml:
            best_lml, best_theta = -res.fun, res.x
    signal = float(np.exp(best_theta[0]))
    ls = np.exp(best_theta[1:1 + d])
    noise = max(float(np.exp(best_theta[1 + d])), noise_floor)
    return KernelParams(signal, ls, noise)


def gp_fit(points: Sequence, values: Sequence,
           kernel_params: Optional[KernelParams] = None,
           restarts: int = 4, seed: int = 0) -> GpState:
    """Exact GP regression; fits hyperparameters unless given explicitly."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    y = np.asarray(values, dtype=np.float64)
    if y.size == 0:
        if kernel_params is None:
            raise DomainError("an empty fit needs explicit kernel parameters")
        return GpState(np.zeros((0, x.shape[-1] if x.size else 1)), y, kernel_params)
    if len(y) < 2 and kernel_params is None:
        raise DomainError("hyperparameter fitting needs at least 2 observations")
    if kernel_params is None:
        kernel_params = fit_kernel_params(x, y, restarts=restarts, seed=seed)
    return GpState(x, y, kernel_params)
