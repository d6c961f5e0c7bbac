"""Desk-scale continuous-control tasks.

``pendulum``   torque-limited swing-up; angle 0 is upright.
``pointmass``  planar double integrator tracking a moving target (circle or
               figure-eight).

The API is functional: :func:`reset` builds an :class:`EnvState` from a seed
and :func:`step` returns a new state without mutating the old one. Episodes end
only on the time limit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    dt: float
    max_episode_steps: int
    gamma: float = 0.99
    # pendulum
    g: float = 10.0
    m: float = 1.0
    l: float = 1.0
    max_speed: float = 8.0
    # point-mass
    path: str = "circle"
    radius: float = 1.0
    rate: float = 0.5
    accel_weight: float = 0.01
    # steps-to-threshold level used by the benchmark harness
    threshold: float = -np.inf

    def __post_init__(self):
        lo = np.asarray(self.action_low, dtype=float).reshape(self.action_dim)
        hi = np.asarray(self.action_high, dtype=float).reshape(self.action_dim)
        if not np.all(lo < hi):
            raise ValueError("action_low must be below action_high")
        if self.max_episode_steps <= 0:
            raise ValueError("max_episode_steps must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        object.__setattr__(self, "action_low", lo)
        object.__setattr__(self, "action_high", hi)

    @property
    def state_dim(self) -> int:
        return self.obs_dim


def pendulum_spec(**overrides) -> EnvSpec:
    kw = dict(name="pendulum", obs_dim=3, action_dim=1, action_low=[-2.0], action_high=[2.0],
              dt=0.05, max_episode_steps=200, threshold=-300.0)
    kw.update(overrides)
    return EnvSpec(**kw)


def pointmass_spec(path: str = "circle", **overrides) -> EnvSpec:
    if path not in ("circle", "eight"):
        raise ValueError(f"unknown target path {path!r}")
    kw = dict(name="pointmass", obs_dim=8, action_dim=2, action_low=[-1.0, -1.0],
              action_high=[1.0, 1.0], dt=0.05, max_episode_steps=400, path=path, threshold=-30.0)
    kw.update(overrides)
    return EnvSpec(**kw)


def make_spec(name: str, **overrides) -> EnvSpec:
    if name == "pendulum":
        return pendulum_spec(**overrides)
    if name in ("pointmass", "pointmass_circle"):
        return pointmass_spec("circle", **overrides)
    if name == "pointmass_eight":
        return pointmass_spec("eight", **overrides)
    raise ValueError(f"unknown environment {name!r}")


@dataclass(frozen=True)
class EnvState:
    spec: EnvSpec
    x: tuple  # physical state as plain floats
    t: int = 0
    rng: Optional[np.random.Generator] = field(default=None, compare=False, repr=False)


def wrap_angle(theta: float) -> float:
    return ((theta + math.pi) % (2.0 * math.pi)) - math.pi


def pendulum_energy(theta: float, theta_dot: float, g: float = 10.0) -> float:
    """Conserved quantity of the unforced pendulum, per unit ``m l^2``.

    With angle 0 upright the dynamics ``theta'' = 1.5 g sin(theta)`` conserve
    ``theta_dot^2 / 6 + (g/2) cos(theta)``.
    """
    return theta_dot**2 / 6.0 + 0.5 * g * math.cos(theta)


def target(spec: EnvSpec, time: float) -> tuple[np.ndarray, np.ndarray]:
    """Target position and velocity at ``time``."""
    w, r = spec.rate, spec.radius
    ph = w * time
    if spec.path == "circle":
        p = np.array([r * math.cos(ph), r * math.sin(ph)])
        pd = np.array([-r * w * math.sin(ph), r * w * math.cos(ph)])
    else:
        # lemniscate of Gerono: a figure-eight through the origin
        p = np.array([r * math.sin(ph), r * math.sin(ph) * math.cos(ph)])
        pd = np.array([r * w * math.cos(ph), r * w * math.cos(2.0 * ph)])
    return p, pd


def observe(state: EnvState) -> np.ndarray:
    spec = state.spec
    if spec.name == "pendulum":
        th, thd = state.x
        return np.array([math.cos(th), math.sin(th), thd])
    px, py, vx, vy = state.x
    p, pd = target(spec, state.t * spec.dt)
    return np.array([px - p[0], py - p[1], vx - pd[0], vy - pd[1], p[0], p[1], pd[0], pd[1]])


def reset(spec: EnvSpec, seed) -> tuple[EnvState, np.ndarray]:
    rng = np.random.default_rng(seed)
    if spec.name == "pendulum":
        x = (float(rng.uniform(-math.pi, math.pi)), float(rng.uniform(-1.0, 1.0)))
    else:
        pos = rng.uniform(-0.5, 0.5, size=2)
        x = (float(pos[0]), float(pos[1]), 0.0, 0.0)
    state = EnvState(spec, x, 0, rng)
    return state, observe(state)


def set_state(spec: EnvSpec, x, t: int = 0) -> tuple[EnvState, np.ndarray]:
    """Place the environment in an explicit physical state (tests, scans)."""
    state = EnvState(spec, tuple(float(v) for v in x), t, None)
    return state, observe(state)


def clip_action(spec: EnvSpec, action) -> np.ndarray:
    return np.minimum(np.maximum(action, spec.action_low), spec.action_high)


def step(state: EnvState, action) -> tuple[EnvState, np.ndarray, float, bool]:
    spec = state.spec
    a = np.asarray(action, dtype=float).reshape(spec.action_dim)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite action {action!r}")
    a = clip_action(spec, a)
    if spec.name == "pendulum":
        th, thd = state.x
        u = float(a[0])
        reward = -(wrap_angle(th) ** 2 + 0.1 * thd**2 + 0.001 * u**2)
        acc = 1.5 * spec.g / spec.l * math.sin(th) + 3.0 * u / (spec.m * spec.l**2)
        thd = min(max(thd + acc * spec.dt, -spec.max_speed), spec.max_speed)
        th = th + thd * spec.dt
        x = (th, thd)
    else:
        px, py, vx, vy = state.x
        ax, ay = float(a[0]), float(a[1])
        px, py = px + vx * spec.dt, py + vy * spec.dt
        vx, vy = vx + ax * spec.dt, vy + ay * spec.dt
        x = (px, py, vx, vy)
        p, _ = target(spec, (state.t + 1) * spec.dt)
        reward = -((px - p[0]) ** 2 + (py - p[1]) ** 2) - spec.accel_weight * (ax * ax + ay * ay)
    t = state.t + 1
    nxt = EnvState(spec, x, t, state.rng)
    return nxt, observe(nxt), float(reward), t >= spec.max_episode_steps


def write_episode_log(path, states, actions, rewards) -> None:
    """CSV with columns step, x_1..x_k, a_1..a_m, reward (one row per transition)."""
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float).reshape(len(rewards), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"x_{i + 1}" for i in range(states.shape[1])]
                   + [f"a_{i + 1}" for i in range(actions.shape[1])] + ["reward"])
        for k, r in enumerate(rewards):
            w.writerow([k] + [repr(float(v)) for v in states[k]] + [repr(float(v)) for v in actions[k]]
                       + [repr(float(r))])
