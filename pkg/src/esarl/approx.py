"""Small tanh MLPs with hand-written backprop, a diagonal Gaussian policy head,
an Adam optimizer, and a plain-text checkpoint format.

All forward/backward routines accept either a single input vector ``(d,)`` or
a batch ``(B, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
LOG_STD_MIN = math.log(1e-3)
LOG_STD_MAX = math.log(10.0)
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    layer_sizes: tuple
    weights: list  # weights[k] has shape (out_k, in_k)
    biases: list

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and bias per layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if W.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {k}: expected W{shape}, b({shape[0]},), got {W.shape}, {b.shape}")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def arrays(self) -> list:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.layer_sizes, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, theta: np.ndarray) -> None:
        i = 0
        for a in self.arrays():
            a[...] = theta[i:i + a.size].reshape(a.shape)
            i += a.size


def init_mlp(layer_sizes: Sequence[int], rng, out_scale: float = 1.0) -> MlpParams:
    """Orthogonal-style init: scaled Gaussian rows, zero biases, small output layer."""
    rng = np.random.default_rng(rng)
    weights, biases = [], []
    n = len(layer_sizes) - 1
    for k in range(n):
        fan_in, fan_out = layer_sizes[k], layer_sizes[k + 1]
        gain = out_scale if k == n - 1 else math.sqrt(2.0)
        W = rng.standard_normal((fan_out, fan_in)) * gain / math.sqrt(fan_in)
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(layer_sizes), weights, biases)


def zeros_mlp(layer_sizes: Sequence[int]) -> MlpParams:
    return MlpParams(tuple(layer_sizes),
                     [np.zeros((layer_sizes[k + 1], layer_sizes[k])) for k in range(len(layer_sizes) - 1)],
                     [np.zeros(layer_sizes[k + 1]) for k in range(len(layer_sizes) - 1)])


def _check_input(p: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.n_in or x.ndim > 2:
        raise ValueError(f"expected input of size {p.n_in}, got shape {x.shape}")
    return x


def forward(p: MlpParams, x) -> np.ndarray:
    x = _check_input(p, x)
    if x.ndim == 1:
        # single vectors are the per-step rollout case; matrix-vector products are cheapest there
        h = x
        for W, b in zip(p.weights[:-1], p.biases[:-1]):
            h = np.tanh(np.dot(W, h) + b)
        return np.dot(p.weights[-1], h) + p.biases[-1]
    h = x
    last = len(p.weights) - 1
    for k, (W, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ W.T + b
        if k < last:
            h = np.tanh(h)
    return h


def forward_cached(p: MlpParams, x):
    """Forward pass that also returns the layer inputs needed by :func:`backward_cached`."""
    x = _check_input(p, x)
    acts = [x]
    h = x
    last = len(p.weights) - 1
    for k, (W, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ W.T + b
        if k < last:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def backward_cached(p: MlpParams, acts: list, upstream):
    """Reverse pass through a cached forward.

    Returns ``(grads, dx)`` where ``grads`` matches :meth:`MlpParams.arrays`.
    For batched inputs the parameter gradients are summed over the batch.
    """
    g = np.asarray(upstream, dtype=float)
    if g.shape[-1] != p.n_out:
        raise ValueError(f"upstream must have size {p.n_out}, got shape {g.shape}")
    batched = g.ndim == 2
    grads = [None] * (2 * len(p.weights))
    last = len(p.weights) - 1
    for k in range(last, -1, -1):
        if k < last:
            # acts[k+1] is tanh output of layer k
            g = g * (1.0 - acts[k + 1] ** 2)
        a_in = acts[k]
        if batched:
            grads[2 * k] = g.T @ a_in
            grads[2 * k + 1] = g.sum(axis=0)
        else:
            grads[2 * k] = np.outer(g, a_in)
            grads[2 * k + 1] = g.copy()
        g = g @ p.weights[k]
    return grads, g


def backward(p: MlpParams, x, upstream):
    """Gradients of ``upstream . forward(p, x)`` with respect to all parameters and ``x``."""
    _, acts = forward_cached(p, x)
    return backward_cached(p, acts, upstream)


# Gaussian policy head -----------------------------------------------------

@dataclass
class GaussianPolicyHead:
    mean_net: MlpParams
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=float).reshape(self.mean_net.n_out)

    @property
    def act_dim(self) -> int:
        return self.mean_net.n_out

    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    def std(self) -> np.ndarray:
        return np.exp(self.clamped_log_std())

    def mean(self, s) -> np.ndarray:
        return forward(self.mean_net, s)

    def sample(self, s, rng) -> np.ndarray:
        return self.mean(s) + self.std() * rng.standard_normal(self.act_dim)

    def arrays(self) -> list:
        return self.mean_net.arrays() + [self.log_std]

    def copy(self) -> "GaussianPolicyHead":
        return GaussianPolicyHead(self.mean_net.copy(), self.log_std.copy())


def diag_gaussian_logprob(mean, log_std, a) -> np.ndarray:
    z = (np.asarray(a) - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_logprob(head: GaussianPolicyHead, s, a) -> np.ndarray:
    """Log-density of action(s) ``a`` under the policy at state(s) ``s``."""
    return diag_gaussian_logprob(head.mean(s), head.clamped_log_std(), a)


def gaussian_logprob_cached(head: GaussianPolicyHead, s, a):
    """Log-probabilities plus the cache needed by :func:`gaussian_logprob_backward`."""
    mean, acts = forward_cached(head.mean_net, s)
    log_std = head.clamped_log_std()
    inv_var = np.exp(-2.0 * log_std)
    diff = np.asarray(a) - mean
    logp = -0.5 * np.sum(diff * diff * inv_var, axis=-1) - np.sum(log_std) - 0.5 * head.act_dim * LOG_2PI
    return logp, (acts, diff, inv_var)


def gaussian_logprob_backward(head: GaussianPolicyHead, cache, upstream) -> list:
    """Gradients of ``sum(upstream * logp)``, ordered as :meth:`GaussianPolicyHead.arrays`.

    The clamp on ``log_std`` passes no gradient outside its range.
    """
    acts, diff, inv_var = cache
    up = np.asarray(upstream, dtype=float)[..., None]
    d_mean = up * diff * inv_var
    d_log_std = up * (diff * diff * inv_var - 1.0)
    if d_log_std.ndim == 2:
        d_log_std = d_log_std.sum(axis=0)
    inside = (head.log_std >= LOG_STD_MIN) & (head.log_std <= LOG_STD_MAX)
    grads, _ = backward_cached(head.mean_net, acts, d_mean)
    return grads + [d_log_std * inside]


def gaussian_logprob_grad(head: GaussianPolicyHead, s, a, upstream=None):
    """Log-probabilities and parameter gradients of ``sum(upstream * logp)``."""
    logp, cache = gaussian_logprob_cached(head, s, a)
    if upstream is None:
        upstream = np.ones_like(logp)
    return logp, gaussian_logprob_backward(head, cache, upstream)


# Adam --------------------------------------------------------------------

class Adam:
    """Adam over a fixed list of parameter arrays, updated in place."""

    def __init__(self, params: list, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list) -> float:
        """Apply one descent step; returns the pre-clipping gradient norm."""
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if scale != 1.0:
                g = g * scale
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


# Checkpoints ---------------------------------------------------------------

def _fmt(x: float) -> str:
    return float(x).hex()


def save_checkpoint(path, nets: dict) -> None:
    """Write named networks to a versioned text file.

    Values are stored as hexadecimal floats so a load round-trip is bit-exact.
    ``nets`` maps names to :class:`MlpParams` or :class:`GaussianPolicyHead`.
    """
    lines = [f"esarl-checkpoint {CHECKPOINT_VERSION}"]
    for name, net in nets.items():
        if isinstance(net, GaussianPolicyHead):
            mlp, extra = net.mean_net, net.log_std
            kind = "gaussian"
        else:
            mlp, extra = net, None
            kind = "mlp"
        lines.append(f"net {name} {kind} " + " ".join(str(n) for n in mlp.layer_sizes))
        lines.append(" ".join(_fmt(x) for x in mlp.flat()))
        if extra is not None:
            lines.append(" ".join(_fmt(x) for x in extra))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> dict:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("esarl-checkpoint "):
        raise ValueError(f"{path}: not a checkpoint file")
    version = int(lines[0].split()[1])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    nets = {}
    i = 1
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "net":
            raise ValueError(f"{path}: malformed line {i + 1}")
        name, kind, sizes = head[1], head[2], [int(n) for n in head[3:]]
        mlp = zeros_mlp(sizes)
        theta = np.array([float.fromhex(t) for t in lines[i + 1].split()])
        if theta.size != mlp.flat().size:
            raise ValueError(f"{path}: parameter count mismatch for {name}")
        mlp.set_flat(theta)
        i += 2
        if kind == "gaussian":
            log_std = np.array([float.fromhex(t) for t in lines[i].split()])
            nets[name] = GaussianPolicyHead(mlp, log_std)
            i += 1
        else:
            nets[name] = mlp
    return nets
