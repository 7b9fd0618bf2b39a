"""Gaussian MLP policy and value network with hand-written backprop.

Actions are ``tanh`` of a diagonal Gaussian sample ``u``; the log-std is a
state-independent parameter vector. Rollouts store ``u`` so that the
squash correction cancels in PPO ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OBS_DIM",
    "ACT_DIM",
    "LOG_STD_MIN",
    "LOG_STD_MAX",
    "PolicyParams",
    "init_params",
    "mlp_forward",
    "mlp_backward",
    "policy_act",
    "gaussian_log_prob",
    "squash_log_prob",
    "entropy",
]

OBS_DIM = 10
ACT_DIM = 4
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PolicyParams:
    """Weights of the policy and value networks.

    ``pi`` and ``vf`` are lists of ``(W, b)`` layers; ``log_std`` has one
    entry per action dimension. Treat instances as immutable snapshots.
    """

    pi: list
    vf: list
    log_std: np.ndarray
    hidden: tuple = field(default=(64, 64))

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layers in (("pi", self.pi), ("vf", self.vf)):
            for i, (w, b) in enumerate(layers):
                out[f"{prefix}.{i}.W"] = w
                out[f"{prefix}.{i}.b"] = b
        out["log_std"] = self.log_std
        return out

    @classmethod
    def from_arrays(cls, arrays: dict, hidden) -> PolicyParams:
        def layers(prefix):
            out, i = [], 0
            while f"{prefix}.{i}.W" in arrays:
                out.append((np.array(arrays[f"{prefix}.{i}.W"], dtype=float), np.array(arrays[f"{prefix}.{i}.b"], dtype=float)))
                i += 1
            return out

        return cls(layers("pi"), layers("vf"), np.array(arrays["log_std"], dtype=float), tuple(int(h) for h in hidden))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def unflatten(self, vec: np.ndarray) -> PolicyParams:
        arrays, pos = {}, 0
        for name, a in self.arrays().items():
            arrays[name] = vec[pos : pos + a.size].reshape(a.shape).copy()
            pos += a.size
        return PolicyParams.from_arrays(arrays, self.hidden)

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays().values())

    @property
    def obs_dim(self) -> int:
        return self.pi[0][0].shape[0]

    @property
    def act_dim(self) -> int:
        return self.log_std.shape[0]


def _layer(rng, n_in, n_out, gain):
    # orthogonal init, the usual choice for PPO
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    w = q if n_in >= n_out else q.T
    return gain * w[:n_in, :n_out], np.zeros(n_out)


def init_params(
    rng: np.random.Generator,
    obs_dim: int = OBS_DIM,
    act_dim: int = ACT_DIM,
    hidden=(64, 64),
    log_std: float = -0.5,
) -> PolicyParams:
    sizes = [obs_dim, *hidden]
    pi = [_layer(rng, a, b, math.sqrt(2.0)) for a, b in zip(sizes[:-1], sizes[1:])]
    pi.append(_layer(rng, sizes[-1], act_dim, 0.01))
    vf = [_layer(rng, a, b, math.sqrt(2.0)) for a, b in zip(sizes[:-1], sizes[1:])]
    vf.append(_layer(rng, sizes[-1], 1, 1.0))
    return PolicyParams(pi, vf, np.full(act_dim, float(log_std)), tuple(hidden))


def mlp_forward(layers, x: np.ndarray):
    """Tanh hidden layers, linear output. Returns output and the activation cache."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = z if i == len(layers) - 1 else np.tanh(z)
        acts.append(h)
    return h, acts


def mlp_backward(layers, acts, grad_out: np.ndarray):
    """Gradients ``[(dW, db), ...]`` given d(loss)/d(output)."""
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        if i != len(layers) - 1:
            g = g * (1.0 - acts[i + 1] ** 2)
        grads[i] = (acts[i].T @ g, g.sum(axis=0))
        g = g @ w.T
    return grads


def gaussian_log_prob(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (u - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * u.shape[-1] * _LOG_2PI


def _log1m_tanh2(u: np.ndarray) -> np.ndarray:
    # log(1 - tanh(u)^2), stable for large |u|
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squash_log_prob(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Log density of ``a = tanh(u)`` in action space."""
    return gaussian_log_prob(u, mean, log_std) - np.sum(_log1m_tanh2(u), axis=-1)


def entropy(log_std: np.ndarray) -> float:
    """Entropy of the pre-squash Gaussian."""
    return float(np.sum(log_std) + 0.5 * log_std.shape[0] * (1.0 + _LOG_2PI))


def policy_act(params: PolicyParams, observation, deterministic: bool = False, rng: np.random.Generator | None = None):
    """Sample (or take the mean) action for one observation or a batch.

    Returns ``(action, u, log_prob, value)``: ``action = tanh(u)`` and
    ``log_prob`` is the action-space density including the squash term.
    """
    obs = np.asarray(observation, dtype=float)
    single = obs.ndim == 1
    x = obs[None, :] if single else obs
    mean, _ = mlp_forward(params.pi, x)
    value, _ = mlp_forward(params.vf, x)
    if deterministic:
        u = mean
    else:
        if rng is None:
            raise ValueError("stochastic actions need an rng")
        u = mean + np.exp(params.log_std) * rng.standard_normal(mean.shape)
    logp = squash_log_prob(u, mean, params.log_std)
    action = np.tanh(u)
    value = value[:, 0]
    if single:
        return action[0], u[0], float(logp[0]), float(value[0])
    return action, u, logp, value
