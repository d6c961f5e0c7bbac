"""Sinusoidal-perturbation extremum seeking control.

The loop probes an objective at ``u = v + K sin(w t)`` and moves the estimate
``v`` along the demodulated, filtered response:

    v' = -alpha * LP[ sin(w t) * HP[ J(u) ] ]      (minimization)

Each input dimension gets its own frequency so the demodulated channels
decouple. Time is discrete: step ``t`` corresponds to wall time ``t * dt`` and
``v`` is integrated with explicit Euler.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .filters import FilterState, highpass, highpass_step, lowpass, lowpass_step


class DivergenceError(FloatingPointError):
    """Objective produced a non-finite value."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


def default_frequencies(omega_base: float, dim: int) -> np.ndarray:
    """Distinct per-dimension frequencies ``omega_base * (1 + i/dim)``."""
    return omega_base * (1.0 + np.arange(dim) / dim)


@dataclass(frozen=True)
class EscParams:
    K: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    dt: float
    maximize: bool = False
    hp_cutoff: Optional[np.ndarray] = None
    lp_cutoff: Optional[np.ndarray] = None

    def __post_init__(self):
        K = np.atleast_1d(np.asarray(self.K, dtype=float))
        dim = K.size
        omega = np.broadcast_to(np.asarray(self.omega, dtype=float), (dim,)).copy()
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (dim,)).copy()
        if np.any(K < 0):
            raise ValueError("perturbation amplitudes must be non-negative")
        if np.any(omega <= 0):
            raise ValueError("frequencies must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if dim > 1 and len(np.unique(omega)) != dim:
            raise ValueError("each dimension needs a distinct frequency")
        # cutoffs default to a fifth of the probe frequency
        hp = omega / 5.0 if self.hp_cutoff is None else self.hp_cutoff
        lp = omega / 5.0 if self.lp_cutoff is None else self.lp_cutoff
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "hp_cutoff", np.broadcast_to(np.asarray(hp, float), (dim,)).copy())
        object.__setattr__(self, "lp_cutoff", np.broadcast_to(np.asarray(lp, float), (dim,)).copy())

    @property
    def dim(self) -> int:
        return self.K.size

    @property
    def sign(self) -> float:
        return 1.0 if self.maximize else -1.0


@dataclass(frozen=True)
class EscState:
    params: EscParams
    v: np.ndarray
    t: int
    hp: FilterState
    lp: FilterState

    @property
    def time(self) -> float:
        return self.t * self.params.dt


def esc_init(params: EscParams, v0) -> EscState:
    v0 = np.asarray(v0, dtype=float).reshape(params.dim)
    if not np.all(np.isfinite(v0)):
        raise ValueError("initial estimate must be finite")
    return EscState(
        params,
        v0.copy(),
        0,
        highpass(params.hp_cutoff, params.dt),
        lowpass(params.lp_cutoff, params.dt),
    )


@dataclass
class Objective:
    """A black-box objective ``J(u, time)`` that counts its own queries."""

    fn: Callable[[np.ndarray, float], float]
    known_optimum: Optional[Callable[[float], np.ndarray]] = None
    queries: int = field(default=0, init=False)

    def eval(self, u: np.ndarray, time: float = 0.0) -> float:
        self.queries += 1
        return float(self.fn(u, time))

    __call__ = eval


def esc_probe(state: EscState) -> np.ndarray:
    """Input to apply at the current step: ``v + K sin(omega t dt)``."""
    p = state.params
    return state.v + p.K * np.sin(p.omega * (state.t * p.dt))


def esc_update(state: EscState, j_value: float) -> EscState:
    """Advance the estimate with one objective measurement taken at ``esc_probe(state)``."""
    if not math.isfinite(j_value):
        raise DivergenceError(f"non-finite objective value {j_value!r} at step {state.t}", state.t)
    p = state.params
    hp, h = highpass_step(state.hp, np.full(p.dim, j_value))
    demod = np.sin(p.omega * (state.t * p.dt)) * h
    lp, low = lowpass_step(state.lp, demod)
    v = state.v + p.sign * p.alpha * low * p.dt
    return EscState(p, v, state.t + 1, hp, lp)


@dataclass
class EscTrace:
    step: np.ndarray
    time: np.ndarray
    u: np.ndarray
    v: np.ndarray
    j: np.ndarray

    def __len__(self):
        return len(self.step)

    def to_csv(self, header_comment: Optional[str] = None) -> str:
        return trace_csv(self.step, self.time, self.u, self.v, self.j, header_comment)


def trace_csv(step, time, u, v, j, header_comment: Optional[str] = None) -> str:
    """CSV text with columns step, time, u_1..u_n, v_1..v_n, j."""
    u = np.asarray(u).reshape(len(step), -1)
    v = np.asarray(v).reshape(len(step), -1)
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    n = u.shape[1]
    w.writerow(["step", "time"] + [f"u_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)] + ["j"])
    for k in range(len(step)):
        w.writerow([int(step[k]), repr(float(time[k]))] + [repr(float(x)) for x in u[k]]
                   + [repr(float(x)) for x in v[k]] + [repr(float(j[k]))])
    return buf.getvalue()


def esc_run(params: EscParams, obj: Objective, v0, steps: int) -> EscTrace:
    """Iterate probe, evaluate, update for ``steps`` iterations (one query each)."""
    if steps <= 0:
        raise ValueError("steps must be positive")
    state = esc_init(params, v0)
    dim = params.dim
    us = np.empty((steps, dim))
    vs = np.empty((steps, dim))
    js = np.empty(steps)
    for k in range(steps):
        u = esc_probe(state)
        j = obj.eval(u, state.time)
        if not math.isfinite(j):
            raise DivergenceError(f"objective returned {j!r} at step {k}", k)
        us[k] = u
        vs[k] = state.v
        js[k] = j
        state = esc_update(state, j)
    step = np.arange(steps)
    return EscTrace(step, step * params.dt, us, vs, js)


def fit_decay_rate(time: np.ndarray, error: np.ndarray, discard: float = 0.1) -> tuple[float, float]:
    """Least-squares exponential rate of ``error`` after discarding a leading fraction.

    Returns ``(rate, r_squared)`` for the model ``log error = c - rate * time``.
    """
    start = int(len(time) * discard)
    t = np.asarray(time[start:], dtype=float)
    y = np.log(np.asarray(error[start:], dtype=float))
    A = np.vstack([np.ones_like(t), t]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(-coef[1]), float(r2)


def predicted_rate(alpha: float, K: float, curvature: float) -> float:
    """Local error-dynamics rate ``alpha * K * J''(u*) / 2`` of the averaged loop."""
    return 0.5 * alpha * K * curvature


# Example objectives used by the demos and tests.

def example_static(u, time=0.0):
    return (u[0] - 0.1) ** 2 + (u[1] - 0.5) ** 2


def example_dynamic(u, time):
    return (u[0] - 0.1 * time) ** 2 + (u[1] - 0.5 * time) ** 2


def example_objective(dynamic: bool = False) -> Objective:
    if dynamic:
        return Objective(example_dynamic, lambda t: np.array([0.1 * t, 0.5 * t]))
    return Objective(example_static, lambda t: np.array([0.1, 0.5]))


def with_params(params: EscParams, **changes) -> EscParams:
    return replace(params, **changes)
