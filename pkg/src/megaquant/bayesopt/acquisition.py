"""Acquisition strategies: expected improvement and Thompson sampling.

Both operate on the encoded hypercube. EI is maximised by multi-start
L-BFGS over the continuous relaxation, then snapped onto the grid;
Thompson draws one joint posterior sample over a candidate set and
takes its argmin. Proposals never repeat configurations the caller has
already evaluated.
"""
from __future__ import annotations

from typing import Dict, Iterable, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from ..errors import ConditioningError
from .gp import GpState
from .space import ConfigSpace

GRID_LIMIT = 4096


def expected_improvement(gp: GpState, x, incumbent: float) -> np.ndarray:
    """EI for minimisation; exactly zero wherever the posterior is certain."""
    mean, var = gp.posterior(x)
    sigma = np.sqrt(var)
    improve = incumbent - mean
    out = np.zeros_like(mean)
    ok = sigma > 0
    z = improve[ok] / sigma[ok]
    out[ok] = improve[ok] * norm.cdf(z) + sigma[ok] * norm.pdf(z)
    return np.maximum(out, 0.0)


def _candidate_set(space: ConfigSpace, count: int, rng: np.random.Generator):
    if len(space) <= GRID_LIMIT:
        return list(space.all_configs())
    return space.sample_configs(count, rng)


def _rank_key(space, gp, config, ei_value):
    mean, _ = gp.posterior(space.encode(config)[None, :])
    return (-ei_value, float(mean[0]), space.key(config))


def propose_ei(gp: GpState, space: ConfigSpace, restarts: int = 10, seed: int = 0,
               exclude: Iterable[Tuple] = ()) -> Tuple[Dict, bool]:
    """Best-EI config via multi-start gradient ascent; (config, fallback_flag).

    Each restart's optimum is snapped to the grid and re-scored at the
    snapped point; ties break towards lower posterior mean, then
    lexicographic config order. If every restart lands on an excluded
    config the best-of-grid fallback is used and flagged.
    """
    excluded = set(exclude)
    incumbent = gp.incumbent()
    rng = np.random.Generator(np.random.PCG64(seed))
    d = space.encoded_dim

    def neg_ei(x):
        return -float(expected_improvement(gp, x[None, :], incumbent)[0])

    seen = {}
    for _ in range(restarts):
        x0 = rng.random(d)
        res = minimize(neg_ei, x0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * d)
        if not np.all(np.isfinite(res.x)):
            continue
        config = space.decode(res.x)
        key = space.key(config)
        if key in excluded or key in seen:
            continue
        ei_here = float(expected_improvement(gp, space.encode(config)[None, :],
                                             incumbent)[0])
        seen[key] = (config, ei_here)
    if seen:
        best = min(seen.values(), key=lambda ce: _rank_key(space, gp, ce[0], ce[1]))
        return best[0], False
    # every restart collided; fall back to the best untried grid candidate
    candidates = [c for c in _candidate_set(space, 4 * restarts, rng)
                  if space.key(c) not in excluded]
    if not candidates:
        raise ConditioningError("no unevaluated configurations remain")
    scored = [(c, float(expected_improvement(
        gp, space.encode(c)[None, :], incumbent)[0])) for c in candidates]
    best = min(scored, key=lambda ce: _rank_key(space, gp, ce[0], ce[1]))
    return best[0], True


def propose_thompson(gp: GpState, space: ConfigSpace, candidate_count: int = GRID_LIMIT,
                     seed: int = 0, exclude: Iterable[Tuple] = ()) -> Dict:
    """Argmin of one joint posterior draw over the candidate set."""
    rng = np.random.Generator(np.random.PCG64(seed))
    excluded = set(exclude)
    candidates = [c for c in _candidate_set(space, candidate_count, rng)
                  if space.key(c) not in excluded]
    if not candidates:
        raise ConditioningError("no unevaluated configurations remain")
    x = np.stack([space.encode(c) for c in candidates])
    mean, cov = gp.posterior_cov(x)
    jitter = 1e-10 * max(float(np.trace(cov)) / len(cov), 1.0)
    for _ in range(8):
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(len(cov)))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
    else:
        raise ConditioningError("posterior covariance factorisation failed",
                                condition=jitter)
    draw = mean + chol @ rng.standard_normal(len(candidates))
    best = min(range(len(candidates)),
               key=lambda i: (draw[i], space.key(candidates[i])))
    return candidates[best]
