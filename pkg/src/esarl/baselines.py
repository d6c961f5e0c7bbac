"""Comparison optimizers for the extremum-seeking demos.

``search_gradient_step`` is the score-function (policy-gradient style) estimator
of the gradient of ``E_{u ~ N(mu, sigma^2)} J(u)`` with respect to the mean.
``analytic_gd_step`` is plain gradient descent and serves as the upper bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .esc import DivergenceError, EscTrace, Objective


@dataclass(frozen=True)
class SearchDist:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), mu.shape).copy()
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


def score_mu(d: SearchDist, u: np.ndarray) -> np.ndarray:
    """Gradient of the Gaussian log-density with respect to the mean, ``(u - mu) / sigma^2``."""
    return (np.asarray(u) - d.mu) / d.sigma**2


def estimate_gradient(d: SearchDist, samples: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Monte Carlo score-function estimate of the mean gradient of ``E[J]``.

    For a batch of more than one sample each value is centred with the mean of
    the *other* samples; the leave-one-out baseline keeps the estimator unbiased.
    A single sample is used without a baseline.
    """
    values = np.asarray(values, dtype=float)
    b = len(values)
    if b == 0:
        raise ValueError("empty batch")
    scores = score_mu(d, samples)
    if b == 1:
        return values[0] * scores[0]
    centred = (values - values.mean()) * (b / (b - 1.0))
    return centred @ scores / b


def search_gradient_step(d: SearchDist, obj: Objective, batch: int, lr: float, rng) -> SearchDist:
    """One mean-only update ``mu <- mu - lr * g_hat`` from ``batch`` objective queries."""
    if batch < 1:
        raise ValueError("batch must be at least 1")
    rng = np.random.default_rng(rng)
    samples = d.mu + d.sigma * rng.standard_normal((batch, d.mu.size))
    values = np.array([obj.eval(u) for u in samples])
    if not np.all(np.isfinite(values)):
        raise DivergenceError("non-finite objective value in search-gradient batch")
    g = estimate_gradient(d, samples, values)
    return SearchDist(d.mu - lr * g, d.sigma)


def analytic_gd_step(u, grad, lr: float) -> np.ndarray:
    return np.asarray(u, dtype=float) - lr * np.asarray(grad, dtype=float)


def run_search_gradient(obj: Objective, mu0, sigma, batch: int, lr: float, iterations: int,
                        seed: int = 0, dt: float = 1.0, time_varying: bool = False) -> EscTrace:
    """Run the search gradient; one trace row per iteration.

    ``u`` holds the last sample of the batch and ``v`` the distribution mean.
    For time-varying objectives iteration ``k`` is evaluated at time ``k * dt``.
    """
    rng = np.random.default_rng(seed)
    d = SearchDist(mu0, sigma)
    n = d.mu.size
    us = np.empty((iterations, n))
    vs = np.empty((iterations, n))
    js = np.empty(iterations)
    for k in range(iterations):
        time = k * dt if time_varying else 0.0
        timed = Objective(lambda u, _t, time=time: obj.fn(u, time))
        samples = d.mu + d.sigma * rng.standard_normal((batch, n))
        values = np.array([timed.eval(u) for u in samples])
        obj.queries += timed.queries
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"non-finite objective at iteration {k}", k)
        vs[k] = d.mu
        us[k] = samples[-1]
        js[k] = obj.fn(d.mu, time)
        d = SearchDist(d.mu - lr * estimate_gradient(d, samples, values), d.sigma)
    step = np.arange(iterations)
    return EscTrace(step, step * dt, us, vs, js)


def run_gradient_descent(mu0, lr: float, iterations: int, dt: float = 1.0,
                         time_varying: bool = False) -> EscTrace:
    u = np.asarray(mu0, dtype=float)
    us = np.empty((iterations, u.size))
    js = np.empty(iterations)
    for k in range(iterations):
        time = k * dt if time_varying else 0.0
        c = np.array([0.1 * time, 0.5 * time]) if time_varying else np.array([0.1, 0.5])
        us[k] = u
        js[k] = float(np.sum((u - c) ** 2))
        u = analytic_gd_step(u, 2.0 * (u - c), lr)
    step = np.arange(iterations)
    return EscTrace(step, step * dt, us, us.copy(), js)


def queries_to_level(j_values: np.ndarray, level: float, queries_per_iter: int) -> Optional[int]:
    """Objective queries spent before the tracked value first drops below ``level``.

    Returns ``None`` when the level is never reached.
    """
    hit = np.flatnonzero(np.asarray(j_values) < level)
    if hit.size == 0:
        return None
    return int(hit[0]) * queries_per_iter


def batch_variance(d: SearchDist, obj: Objective, batch: int, repeats: int, rng) -> np.ndarray:
    """Per-dimension variance of the gradient estimate over independent batches."""
    rng = np.random.default_rng(rng)
    est = np.empty((repeats, d.mu.size))
    for r in range(repeats):
        samples = d.mu + d.sigma * rng.standard_normal((batch, d.mu.size))
        values = np.array([obj.fn(u, 0.0) for u in samples])
        est[r] = estimate_gradient(d, samples, values)
    return est.var(axis=0, ddof=1)

