"""GAE, the clipped-surrogate loss with its analytic gradient, Adam and the update loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import LOG_STD_MAX, LOG_STD_MIN, PolicyParams, entropy, gaussian_log_prob, mlp_backward, mlp_forward

__all__ = [
    "TrainingDivergence",
    "RolloutBatch",
    "Adam",
    "gae_compute",
    "normalize_advantages",
    "ppo_loss_and_grad",
    "ppo_update",
]


class TrainingDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class RolloutBatch:
    obs: np.ndarray
    u: np.ndarray  # pre-squash actions
    logp_old: np.ndarray  # Gaussian log density of u under the behaviour policy
    advantages: np.ndarray
    returns: np.ndarray
    values_old: np.ndarray

    def __len__(self):
        return self.obs.shape[0]

    def take(self, idx) -> RolloutBatch:
        return RolloutBatch(*(a[idx] for a in (self.obs, self.u, self.logp_old, self.advantages, self.returns, self.values_old)))


def gae_compute(rewards, values, dones, gamma: float, lam: float):
    """Generalised advantage estimation.

    ``values`` has one more entry than ``rewards``: the last is the bootstrap
    value of the state after the final step. ``dones[t]`` cuts the recursion
    after step ``t``.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=float)
    if v.shape[0] != r.shape[0] + 1 or d.shape[0] != r.shape[0]:
        raise ValueError(
            f"length mismatch: {r.shape[0]} rewards, {d.shape[0]} dones, {v.shape[0]} values (need rewards + 1)"
        )
    adv = np.zeros_like(r)
    last = 0.0
    for t in range(r.shape[0] - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * v[t + 1] * live - v[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
    return adv, adv + v[:-1]


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(adv, dtype=float)
    centred = adv - adv.mean()
    std = np.sqrt(np.mean(centred * centred))
    if std < eps:
        return centred
    return centred / std


def ppo_loss_and_grad(params: PolicyParams, batch: RolloutBatch, clip_eps: float, value_coef: float, entropy_coef: float):
    """Loss ``-surrogate + value_coef * MSE - entropy_coef * H`` and its exact gradient.

    Returns ``(loss, grads, info)``; ``grads`` is a :class:`PolicyParams`
    holding d(loss)/d(parameter).
    """
    n = len(batch)
    mean, pi_acts = mlp_forward(params.pi, batch.obs)
    value, vf_acts = mlp_forward(params.vf, batch.obs)
    value = value[:, 0]
    log_std = params.log_std
    logp = gaussian_log_prob(batch.u, mean, log_std)
    ratio = np.exp(logp - batch.logp_old)
    adv = batch.advantages
    surr1 = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr2 = clipped * adv
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
    err = value - batch.returns
    value_loss = float(np.mean(err * err))
    ent = entropy(log_std)
    loss = policy_loss + value_coef * value_loss - entropy_coef * ent

    # the unclipped branch carries gradient when it is the minimum or the clip is inactive
    live = (surr1 <= surr2) | ((ratio >= 1.0 - clip_eps) & (ratio <= 1.0 + clip_eps))
    dlogp = -(adv * ratio * live) / n
    inv_var = np.exp(-2.0 * log_std)
    diff = batch.u - mean
    d_mean = dlogp[:, None] * diff * inv_var
    d_log_std = (dlogp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0) - entropy_coef
    pi_grads = mlp_backward(params.pi, pi_acts, d_mean)
    vf_grads = mlp_backward(params.vf, vf_acts, (value_coef * 2.0 * err / n)[:, None])
    grads = PolicyParams(pi_grads, vf_grads, d_log_std, params.hidden)
    info = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": ent,
        "approx_kl": float(np.mean(batch.logp_old - logp)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
    }
    return loss, grads, info


@dataclass
class Adam:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _clamp_log_std(params: PolicyParams) -> PolicyParams:
    return PolicyParams(params.pi, params.vf, np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX), params.hidden)


def ppo_update(
    params: PolicyParams,
    batch: RolloutBatch,
    clip_eps: float = 0.2,
    epochs: int = 4,
    minibatch_size: int = 64,
    lr: float = 3e-4,
    value_coef: float = 0.5,
    entropy_coef: float = 0.01,
    rng: np.random.Generator | None = None,
    optimizer: Adam | None = None,
    max_grad_norm: float = 0.5,
):
    """Several epochs of minibatch Adam steps on the PPO loss.

    Advantages are normalised over the whole batch first. Returns
    ``(params, optimizer, stats)`` where ``stats`` averages the loss terms
    over all minibatches.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if optimizer is None:
        optimizer = Adam(lr=lr)
    batch = RolloutBatch(batch.obs, batch.u, batch.logp_old, normalize_advantages(batch.advantages), batch.returns, batch.values_old)
    theta = params.flat()
    totals: dict[str, float] = {}
    count = 0
    n = len(batch)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, minibatch_size):
            mb = batch.take(order[start : start + minibatch_size])
            loss, grads, info = ppo_loss_and_grad(params, mb, clip_eps, value_coef, entropy_coef)
            g = grads.flat()
            if not (np.isfinite(loss) and np.isfinite(g).all()):
                raise TrainingDivergence(
                    f"non-finite PPO loss ({loss}); policy_loss={info['policy_loss']}, value_loss={info['value_loss']}, "
                    f"log_std={params.log_std.tolist()}"
                )
            norm = float(np.linalg.norm(g))
            if max_grad_norm and norm > max_grad_norm:
                g = g * (max_grad_norm / norm)
            theta = optimizer.step(theta, g)
            params = _clamp_log_std(params.unflatten(theta))
            theta = params.flat()
            for k, v in info.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    stats = {k: v / max(count, 1) for k, v in totals.items()}
    return params, optimizer, stats
