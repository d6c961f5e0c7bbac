"""Extremum-seeking action selection.

Each environment step the sampled action is probed at ``a + v + K sin(w t dt)``
through the Q-network; the high-pass filtered response, demodulated by the
same sinusoid, nudges the per-episode correction ``v``. The action sent to the
environment is ``a + v``. There is no low-pass stage: the remaining
high-frequency content of ``v`` acts as extra exploration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .filters import highpass, highpass_step


@dataclass(frozen=True)
class EsaConfig:
    K: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    dt_esa: float = 0.05
    hp_cutoffs: Optional[np.ndarray] = None
    decay: str = "none"  # none | linear | exponential
    decay_end: float = 100.0  # linear: iteration at which alpha reaches zero
    decay_rate: float = 0.99  # exponential: per-iteration factor
    v_clip: float = 0.5
    normalize_q: bool = True

    def __post_init__(self):
        K = np.atleast_1d(np.asarray(self.K, dtype=float))
        n = K.size
        omega = np.broadcast_to(np.asarray(self.omega, dtype=float), (n,)).copy()
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (n,)).copy()
        hp = omega / 5.0 if self.hp_cutoffs is None else self.hp_cutoffs
        hp = np.broadcast_to(np.asarray(hp, dtype=float), (n,)).copy()
        if np.any(K < 0):
            raise ValueError("K must be non-negative")
        if np.any(omega <= 0) or np.any(hp <= 0):
            raise ValueError("frequencies and cutoffs must be positive")
        if n > 1 and len(np.unique(omega)) != n:
            raise ValueError("each action dimension needs a distinct frequency")
        if not self.v_clip > 0:
            raise ValueError("v_clip must be positive")
        if self.decay not in ("none", "linear", "exponential"):
            raise ValueError(f"unknown decay schedule {self.decay!r}")
        for name, val in (("K", K), ("omega", omega), ("alpha", alpha), ("hp_cutoffs", hp)):
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.K.size


def default_v_clip(action_low, action_high) -> float:
    return float(np.max(0.5 * (np.asarray(action_high) - np.asarray(action_low)) * 0.25))


def decay_alpha(config: EsaConfig, iteration: int) -> EsaConfig:
    if config.decay == "none":
        return config
    if config.decay == "linear":
        factor = max(0.0, 1.0 - iteration / config.decay_end)
    else:
        factor = config.decay_rate**iteration
    return replace(config, alpha=config.alpha * factor)


@dataclass
class EsaEpisodeState:
    """Per-episode ESA memory; build a fresh one at every episode start."""

    config: EsaConfig
    action_low: np.ndarray
    action_high: np.ndarray
    q_scale: float = 1.0
    v: np.ndarray = None
    v_applied: np.ndarray = None
    t: int = 0
    # high-pass memory, one channel per action dimension; all channels see the same input
    hp_in: float = 0.0
    hp_out: list = None
    hp_primed: bool = False
    queries: int = 0
    skipped: int = 0
    last_q: float = 0.0
    last_filtered: float = 0.0
    abs_filtered_sum: float = field(default=0.0)

    def __post_init__(self):
        c = self.config
        if self.v is None:
            self.v = np.zeros(c.dim)
        if self.v_applied is None:
            self.v_applied = self.v.copy()
        if self.hp_out is None:
            self.hp_out = [0.0] * c.dim
        # plain-float copies for the per-step loop, where numpy call overhead dominates
        coef = highpass(c.hp_cutoffs, c.dt_esa).coefficient
        self._rows = list(zip(c.K.tolist(), c.omega.tolist(), (c.alpha * c.K).tolist(), coef.tolist()))
        self._low = self.action_low.tolist()
        self._high = self.action_high.tolist()


def esa_reset(config: EsaConfig, action_low, action_high, q_scale: float = 1.0) -> EsaEpisodeState:
    return EsaEpisodeState(config, np.asarray(action_low, float), np.asarray(action_high, float), q_scale)


def probe_offset(state: EsaEpisodeState) -> np.ndarray:
    c = state.config
    return state.v + c.K * np.sin(c.omega * (state.t * c.dt_esa))


def esa_select(state: EsaEpisodeState, s, a_sampled, q: Callable[[np.ndarray, np.ndarray], float]):
    """One ESA step; updates ``state`` in place and returns ``(state, a_applied)``.

    The applied action uses the correction held *before* this step's update,
    so the first action of every episode equals the sampled one. ``q`` is
    queried exactly once.
    """
    c = state.config
    rows = state._rows
    tau = state.t * c.dt_esa
    v_now = state.v
    state.v_applied = v_now
    vs = v_now.tolist()
    acts = np.asarray(a_sampled, dtype=float).tolist()
    phases = [math.sin(r[1] * tau) for r in rows]
    qval = float(q(s, np.array([a + (v + r[0] * ph) for a, v, r, ph in zip(acts, vs, rows, phases)])))
    state.queries += 1
    if math.isfinite(qval):
        x = qval / state.q_scale if c.normalize_q else qval
        # backward-Euler high-pass, the recurrence of filters.highpass_step on plain floats
        if state.hp_primed:
            dx = x - state.hp_in
            hs = [row[3] * (y + dx) for row, y in zip(rows, state.hp_out)]
        else:
            hs = [0.0] * len(rows)
            state.hp_primed = True
        state.hp_in = x
        state.hp_out = hs
        lim = c.v_clip
        state.v = np.array([min(max(v + row[2] * ph * h, -lim), lim)
                            for v, row, ph, h in zip(vs, rows, phases, hs)])
        state.last_q = qval
        state.last_filtered = sum(hs) / len(hs)
        state.abs_filtered_sum += abs(state.last_filtered)
    else:
        state.skipped += 1
    state.t += 1
    a_applied = [min(max(a + v, lo), hi) for a, v, lo, hi in zip(acts, vs, state._low, state._high)]
    return state, np.array(a_applied)


def iqr_scale(values, floor: float = 1e-6) -> float:
    """Interquartile range of ``values``; used to make ESA's alpha reward-scale free."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 1.0
    q75, q25 = np.percentile(values, [75, 25])
    return float(max(q75 - q25, floor))


def analytic_q_step(a, grad_a, step_size: float) -> np.ndarray:
    """Diagnostic alternative to ESA: ascend the Q-network's action gradient."""
    return np.asarray(a) + step_size * np.asarray(grad_a)


def scan_filtered_q(q, s, a_center, dim: int, half_width: float, steps: int, hp_cutoff: float,
                    dt: float = 1.0) -> np.ndarray:
    """Sweep one action coordinate and high-pass filter the Q response in sweep order.

    Returns an array with columns ``(a_dim, q_raw, q_filtered)``.
    """
    a_center = np.asarray(a_center, dtype=float)
    grid = np.linspace(a_center[dim] - half_width, a_center[dim] + half_width, steps)
    f = highpass(hp_cutoff, dt)
    out = np.empty((steps, 3))
    for k, x in enumerate(grid):
        a = a_center.copy()
        a[dim] = x
        qv = float(q(s, a))
        f, y = highpass_step(f, qv)
        out[k] = (x, qv, y)
    return out
