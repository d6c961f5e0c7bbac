"""Clipped-surrogate policy optimization with GAE and a Monte-Carlo Q-network.

The trainer owns three networks: a Gaussian policy, a state-value network and
a Q-network over ``(state, action)``. All three are fitted on the same
rollout; the Q-network exists for the ESA hook, which queries it once per
environment step when enabled.
"""
from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import envs as E
from .approx import (Adam, GaussianPolicyHead, MlpParams, backward_cached, diag_gaussian_logprob,
                     forward, forward_cached, gaussian_logprob_backward,
                     gaussian_logprob_cached, init_mlp)
from .esa import EsaConfig, decay_alpha, esa_reset, esa_select, iqr_scale


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    total_steps: int = 150_000
    rollout_steps: int = 2048
    epochs: int = 10
    minibatch: int = 64
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    q_lr: float = 1e-3
    hidden: tuple = (64, 64)
    max_grad_norm: float = 0.5
    log_std_init: float = 0.0
    reward_scale: float = 1.0
    logp_mode: str = "applied"  # applied | sampled
    trailing_episodes: int = 10

    def __post_init__(self):
        if self.logp_mode not in ("applied", "sampled"):
            raise ValueError(f"logp_mode must be 'applied' or 'sampled', got {self.logp_mode!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    logp: float
    r: float
    s_next: np.ndarray
    done: bool


class RolloutBuffer:
    """Fixed-size on-policy storage; ``close`` computes returns and normalized advantages."""

    def __init__(self, size: int, obs_dim: int, act_dim: int):
        self.size = size
        self.obs = np.zeros((size, obs_dim))
        self.act = np.zeros((size, act_dim))
        self.logp = np.zeros(size)
        self.rew = np.zeros(size)
        self.next_obs = np.zeros((size, obs_dim))
        self.done = np.zeros(size, dtype=bool)
        self.val = np.zeros(size)
        self.n = 0
        self.adv = None
        self.ret = None

    def add(self, s, a, logp, r, s_next, done, value=0.0) -> None:
        i = self.n
        self.obs[i] = s
        self.act[i] = a
        self.logp[i] = logp
        self.rew[i] = r
        self.next_obs[i] = s_next
        self.done[i] = done
        self.val[i] = value
        self.n += 1

    def transitions(self):
        for i in range(self.n):
            yield Transition(self.obs[i], self.act[i], float(self.logp[i]), float(self.rew[i]),
                             self.next_obs[i], bool(self.done[i]))

    def close(self, value_last: float, gamma: float, lam: float) -> None:
        n = self.n
        adv, ret = gae(self.rew[:n], self.val[:n], value_last, gamma, lam, self.done[:n])
        self.ret = ret
        self.adv = normalize(adv)

    def __len__(self):
        return self.n


def gae(rewards, values, value_last: float, gamma: float, lam: float, dones=None):
    """Generalized advantage estimates and value targets.

    ``dones[t]`` cuts both bootstrapping and the advantage recursion after step t.
    Returns ``(advantages, returns)`` with ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(values) != len(rewards):
        raise ValueError("rewards and values must have equal length")
    T = len(rewards)
    dones = np.zeros(T, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    adv = np.zeros(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        v_next = value_last if t == T - 1 else values[t + 1]
        delta = rewards[t] + gamma * v_next * nonterminal - values[t]
        acc = delta + gamma * lam * nonterminal * acc
        adv[t] = acc
    return adv, adv + values


def normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return x - x.mean()
    return (x - x.mean()) / (x.std() + 1e-8)


def ppo_clip_loss(ratio, advantage, epsilon: float):
    """Negated clipped surrogate ``-min(r A, clip(r, 1-eps, 1+eps) A)`` (elementwise)."""
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage
    loss = -np.minimum(unclipped, clipped)
    return float(loss) if loss.ndim == 0 else loss


def ppo_clip_grad(ratio, advantage, epsilon: float) -> np.ndarray:
    """Derivative of :func:`ppo_clip_loss` with respect to the ratio."""
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage
    active = unclipped <= clipped
    return np.where(active, -advantage, 0.0)


@dataclass
class Learner:
    policy: GaussianPolicyHead
    value_net: MlpParams
    q_net: MlpParams
    policy_opt: Adam
    value_opt: Adam
    q_opt: Adam


def make_learner(obs_dim: int, act_dim: int, cfg: PpoConfig, rng) -> Learner:
    rng = np.random.default_rng(rng)
    h = list(cfg.hidden)
    policy = GaussianPolicyHead(init_mlp([obs_dim] + h + [act_dim], rng, out_scale=0.01),
                                np.full(act_dim, cfg.log_std_init))
    value_net = init_mlp([obs_dim] + h + [1], rng, out_scale=1.0)
    q_net = init_mlp([obs_dim + act_dim] + h + [1], rng, out_scale=1.0)
    return Learner(
        policy, value_net, q_net,
        Adam(policy.arrays(), cfg.lr, max_grad_norm=cfg.max_grad_norm),
        Adam(value_net.arrays(), cfg.lr, max_grad_norm=cfg.max_grad_norm),
        Adam(q_net.arrays(), cfg.q_lr, max_grad_norm=cfg.max_grad_norm),
    )


def regression_step(net: MlpParams, opt: Adam, x: np.ndarray, y: np.ndarray) -> float:
    """One Adam step on mean ``0.5 (net(x) - y)^2``; returns the loss."""
    pred, acts = forward_cached(net, x)
    err = pred[:, 0] - y
    grads, _ = backward_cached(net, acts, (err / len(y))[:, None])
    opt.step(grads)
    return float(0.5 * np.mean(err * err))


def update(learner: Learner, buffer: RolloutBuffer, cfg: PpoConfig, rng) -> dict:
    """Several epochs of minibatch steps on all three networks (in place).

    Returns diagnostics: ``approx_kl``, ``clip_frac``, ``policy_loss``,
    ``value_loss``, ``q_loss``.
    """
    n = len(buffer)
    if n == 0 or buffer.adv is None:
        raise ValueError("update needs a closed, non-empty buffer")
    obs, act, old_logp = buffer.obs[:n], buffer.act[:n], buffer.logp[:n]
    adv, ret = buffer.adv, buffer.ret
    q_in = np.concatenate([obs, act], axis=1)
    pol = learner.policy
    pl = vl = ql = 0.0
    batches = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            m = len(idx)
            logp, cache = gaussian_logprob_cached(pol, obs[idx], act[idx])
            ratio = np.exp(logp - old_logp[idx])
            loss = ppo_clip_loss(ratio, adv[idx], cfg.clip_eps)
            d_ratio = ppo_clip_grad(ratio, adv[idx], cfg.clip_eps)
            grads = gaussian_logprob_backward(pol, cache, d_ratio * ratio / m)
            learner.policy_opt.step(grads)
            v_loss = regression_step(learner.value_net, learner.value_opt, obs[idx], ret[idx])
            q_loss = regression_step(learner.q_net, learner.q_opt, q_in[idx], ret[idx])
            pl += float(np.mean(loss))
            vl += v_loss
            ql += q_loss
            batches += 1
            if not (math.isfinite(pl) and math.isfinite(vl) and math.isfinite(ql)):
                raise TrainingDiverged(f"non-finite loss (policy={pl}, value={vl}, q={ql})")
    logp = diag_gaussian_logprob(forward(pol.mean_net, obs), pol.clamped_log_std(), act)
    log_ratio = logp - old_logp
    ratio = np.exp(log_ratio)
    return {
        "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        "policy_loss": pl / batches,
        "value_loss": vl / batches,
        "q_loss": ql / batches,
    }


@dataclass
class TrainResult:
    rows: list
    timing: list
    learner: Learner
    episode_returns: list
    aborted: Optional[str] = None
    esa_queries: int = 0
    esa_skipped: int = 0
    env_steps: int = 0


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    init, act, shuffle, env = ss.spawn(4)
    return (np.random.default_rng(init), np.random.default_rng(act), np.random.default_rng(shuffle),
            np.random.default_rng(env))


def train(spec: E.EnvSpec, cfg: PpoConfig, esa: Optional[EsaConfig] = None, seed: int = 0,
          callback=None) -> TrainResult:
    """Alternate rollout collection and updates until ``cfg.total_steps`` env steps.

    Every iteration appends one row with the trailing-window episodic return.
    Deterministic in ``seed``; with ``esa`` whose alpha or K is zero the run is
    bit-identical to the plain run.
    """
    init_rng, act_rng, shuffle_rng, env_rng = _streams(seed)
    learner = make_learner(spec.obs_dim, spec.action_dim, cfg, init_rng)
    pol = learner.policy
    act_dim = spec.action_dim
    rows, timing, ep_returns = [], [], []
    env_state, obs = E.reset(spec, int(env_rng.integers(2**63)))
    ep_ret = 0.0
    q_scale = 1.0
    iteration = 0
    steps_done = 0
    esa_state = None
    esa_cfg = None
    total_queries = total_skipped = 0

    def q_value(s, a):
        return forward(learner.q_net, np.concatenate([s, a]))[0]

    while steps_done < cfg.total_steps:
        n_steps = min(cfg.rollout_steps, cfg.total_steps - steps_done)
        buf = RolloutBuffer(n_steps, spec.obs_dim, act_dim)
        if esa is not None:
            esa_cfg = decay_alpha(esa, iteration)
            if esa_state is None:
                esa_state = esa_reset(esa_cfg, spec.action_low, spec.action_high, q_scale)
        abs_v_sum = 0.0
        filt_sum = 0.0
        filt_n = 0
        t0 = _time.perf_counter()
        std = pol.std()
        log_std = pol.clamped_log_std()
        for _ in range(n_steps):
            mean = forward(pol.mean_net, obs)
            a = mean + std * act_rng.standard_normal(act_dim)
            if esa_state is not None:
                esa_state, _ = esa_select(esa_state, obs, a, q_value)
                applied = a + esa_state.v_applied
                abs_v_sum += max(map(abs, esa_state.v_applied.tolist()))
                filt_sum += abs(esa_state.last_filtered)
                filt_n += 1
            else:
                applied = a
            logged = applied if cfg.logp_mode == "applied" else a
            logp = float(diag_gaussian_logprob(mean, log_std, logged))
            value = float(forward(learner.value_net, obs)[0])
            env_state, next_obs, r, done = E.step(env_state, applied)
            buf.add(obs, applied, logp, r * cfg.reward_scale, next_obs, done, value)
            ep_ret += r
            obs = next_obs
            if done:
                ep_returns.append(ep_ret)
                ep_ret = 0.0
                env_state, obs = E.reset(spec, int(env_rng.integers(2**63)))
                if esa_state is not None:
                    total_queries += esa_state.queries
                    total_skipped += esa_state.skipped
                    esa_state = esa_reset(esa_cfg, spec.action_low, spec.action_high, q_scale)
        t_roll = _time.perf_counter() - t0
        steps_done += n_steps
        last_done = bool(buf.done[n_steps - 1])
        value_last = 0.0 if last_done else float(forward(learner.value_net, obs)[0])
        buf.close(value_last, cfg.gamma, cfg.lam)
        t1 = _time.perf_counter()
        try:
            stats = update(learner, buf, cfg, shuffle_rng)
        except TrainingDiverged as exc:
            return TrainResult(rows, timing, learner, ep_returns, aborted=f"iteration {iteration}: {exc}",
                               esa_queries=total_queries, esa_skipped=total_skipped, env_steps=steps_done)
        t_upd = _time.perf_counter() - t1
        q_scale = iqr_scale(buf.ret)
        if esa_state is not None:
            esa_state.q_scale = q_scale
        window = ep_returns[-cfg.trailing_episodes:]
        row = {
            "iteration": iteration,
            "env_steps": steps_done,
            "mean_return": float(np.mean(window)) if window else float("nan"),
            "std_return": float(np.std(window)) if window else float("nan"),
        }
        if esa is not None:
            row["mean_abs_v"] = abs_v_sum / filt_n if filt_n else 0.0
            row["mean_abs_filtered_q"] = filt_sum / filt_n if filt_n else 0.0
        rows.append(row)
        timing.append({"iteration": iteration, "rollout_s": t_roll, "update_s": t_upd,
                       "steps": n_steps, **stats})
        if callback is not None:
            callback(row, stats)
        iteration += 1
    if esa_state is not None:
        total_queries += esa_state.queries
        total_skipped += esa_state.skipped
    return TrainResult(rows, timing, learner, ep_returns, None, total_queries, total_skipped, steps_done)


def steps_to_threshold(rows: list, threshold: float) -> float:
    """Env steps at the first iteration whose trailing mean return exceeds ``threshold`` (inf if never)."""
    for row in rows:
        if row["mean_return"] > threshold:
            return float(row["env_steps"])
    return math.inf


def collection_ratio_check(learner: Learner, buffer: RolloutBuffer) -> np.ndarray:
    """Importance ratios of the stored actions under the current policy."""
    n = len(buffer)
    pol = learner.policy
    logp = diag_gaussian_logprob(forward(pol.mean_net, buffer.obs[:n]), pol.clamped_log_std(), buffer.act[:n])
    return np.exp(logp - buffer.logp[:n])
