"""Rollout collection and the PPO training loop."""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import ConfigError, config_hash, seeded_rng
from .env import RewardWeights, SurfaceEnv, TiltPlaneEnv
from .policy import PolicyParams, gaussian_log_prob, init_params, mlp_forward
from .ppo import Adam, RolloutBatch, TrainingDivergence, gae_compute, ppo_update

__all__ = [
    "TrainConfig",
    "train",
    "make_env",
    "env_hash",
    "collect_rollout",
    "format_log",
    "checkpoint_bytes",
    "load_checkpoint_bytes",
    "CHECKPOINT_VERSION",
    "LOG_COLUMNS",
]

CHECKPOINT_VERSION = 1
LOG_COLUMNS = (
    "iteration", "steps", "episodes", "mean_return", "success_rate", "fall_rate",
    "policy_loss", "value_loss", "entropy", "approx_kl", "clip_frac",
)


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 300_000
    n_envs: int = 8
    rollout_len: int = 512
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    reward_scale: float = 0.1
    noise_hold: int = 8
    hidden: tuple = (64, 64)
    init_log_std: float = -1.0
    env: str = "surface"  # or "toy"
    step_limit: int = 600
    weights: RewardWeights = field(default_factory=RewardWeights)
    checkpoint_every: int = 10

    def __post_init__(self):
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        for name in ("n_envs", "rollout_len", "epochs", "minibatch_size", "step_limit", "noise_hold"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ConfigError("gamma and lam must lie in [0, 1]")
        if not (self.clip_eps > 0 and self.lr > 0):
            raise ConfigError("clip_eps and lr must be positive")
        if self.env not in ("surface", "toy"):
            raise ConfigError(f"env must be 'surface' or 'toy', got {self.env!r}")

    def hash(self) -> str:
        return config_hash(self)


def env_hash(cfg: TrainConfig, frame, fabric, sim) -> str:
    """Digest of everything a trained policy depends on: world configs, object, reward and network shape."""
    from ..core import get_object

    return config_hash(frame, fabric, sim, get_object("sphere"), cfg.weights, cfg.step_limit, cfg.env, list(cfg.hidden))


def make_env(cfg: TrainConfig, **overrides):
    if cfg.env == "toy":
        return TiltPlaneEnv(frame=overrides.get("frame"), weights=cfg.weights, step_limit=cfg.step_limit)
    return SurfaceEnv(weights=cfg.weights, step_limit=cfg.step_limit, **overrides)


class _Worker:
    """One environment with its own episode-seed and action-noise streams."""

    def __init__(self, env, seed: int, index: int):
        self.env = env
        self.seeds = seeded_rng(seed, 1 + index)
        self.noise = seeded_rng(seed, 10_001 + index)
        self.eps = None
        self.held = 0
        self.obs, self.ep = self._reset()

    def draw(self, act_dim: int, hold: int) -> np.ndarray:
        # the servos low-pass per-step noise, so exploration is held for several steps
        if self.eps is None or self.held >= hold:
            self.eps = self.noise.standard_normal(act_dim)
            self.held = 0
        self.held += 1
        return self.eps

    def _reset(self):
        obs, ep = self.env.reset(int(self.seeds.integers(2**62)))
        self.eps = None
        return obs.as_array(), ep


def collect_rollout(worker: _Worker, params: PolicyParams, n_steps: int, gamma: float, lam: float, reward_scale: float = 1.0, noise_hold: int = 1):
    """Run ``n_steps`` steps on one worker; returns arrays plus finished-episode records."""
    obs_dim, act_dim = params.obs_dim, params.act_dim
    obs = np.zeros((n_steps, obs_dim))
    us = np.zeros((n_steps, act_dim))
    logps = np.zeros(n_steps)
    values = np.zeros(n_steps + 1)
    rewards = np.zeros(n_steps)
    dones = np.zeros(n_steps)
    episodes = []
    std = np.exp(params.log_std)
    for t in range(n_steps):
        x = worker.obs[None, :]
        mean = mlp_forward(params.pi, x)[0][0]
        v = float(mlp_forward(params.vf, x)[0][0, 0])
        u = mean + std * worker.draw(act_dim, noise_hold)
        obs[t], us[t], values[t] = worker.obs, u, v
        logps[t] = gaussian_log_prob(u[None, :], mean[None, :], params.log_std)[0]
        nobs, r, done, info = worker.env.step(worker.ep, np.tanh(u))
        nobs = nobs.as_array()
        r *= reward_scale
        if info["truncated"]:
            # time limit is not a terminal state: bootstrap through it
            r += gamma * float(mlp_forward(params.vf, nobs[None, :])[0][0, 0])
        rewards[t], dones[t] = r, float(done)
        if done:
            ep = worker.ep
            episodes.append((ep.total_reward, ep.outcome, info["diverged"]))
            worker.obs, worker.ep = worker._reset()
        else:
            worker.obs = nobs
    values[n_steps] = float(mlp_forward(params.vf, worker.obs[None, :])[0][0, 0])
    adv, ret = gae_compute(rewards, values, dones, gamma, lam)
    return (obs, us, logps, adv, ret, values[:-1]), episodes


def train(cfg: TrainConfig | None = None, seed: int = 0, threads: int = 1, env_factory=None, callback=None, params: PolicyParams | None = None):
    """Train a policy; returns ``(params, log_rows)``.

    ``env_factory(index)`` overrides environment construction. ``callback``
    is called as ``callback(iteration, params, row)`` after every
    iteration; the CLI uses it for periodic checkpoints. Results depend only
    on ``seed`` and the configuration, not on ``threads``.
    """
    cfg = cfg or TrainConfig()
    if params is None:
        params = init_params(seeded_rng(seed, 0), hidden=cfg.hidden, log_std=cfg.init_log_std)
    log: list[dict] = []
    if cfg.total_steps == 0:
        return params, log
    factory = env_factory or (lambda i: make_env(cfg))
    workers = [_Worker(factory(i), seed, i) for i in range(cfg.n_envs)]
    update_rng = seeded_rng(seed, 20_001)
    optimizer = Adam(lr=cfg.lr)
    per_iter = cfg.n_envs * cfg.rollout_len
    n_iter = math.ceil(cfg.total_steps / per_iter)
    steps = 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for it in range(1, n_iter + 1):
            snapshot = params

            def run(w):
                return collect_rollout(w, snapshot, cfg.rollout_len, cfg.gamma, cfg.lam, cfg.reward_scale, cfg.noise_hold)

            results = list(pool.map(run, workers)) if pool else [run(w) for w in workers]
            parts = [np.concatenate(cols) for cols in zip(*(r[0] for r in results))]
            episodes = [e for r in results for e in r[1]]
            diverged = sum(1 for e in episodes if e[2])
            if episodes and diverged > 0.5 * len(episodes):
                raise TrainingDivergence(f"iteration {it}: {diverged} of {len(episodes)} episodes diverged numerically")
            batch = RolloutBatch(*parts)
            params, optimizer, stats = ppo_update(
                params, batch, cfg.clip_eps, cfg.epochs, cfg.minibatch_size, cfg.lr,
                cfg.value_coef, cfg.entropy_coef, update_rng, optimizer, cfg.max_grad_norm,
            )
            steps += per_iter
            n_ep = len(episodes)
            row = {
                "iteration": it,
                "steps": steps,
                "episodes": n_ep,
                "mean_return": float(np.mean([e[0] for e in episodes])) if n_ep else float("nan"),
                "success_rate": sum(e[1] == "success" for e in episodes) / n_ep if n_ep else 0.0,
                "fall_rate": sum(e[1] == "fall" for e in episodes) / n_ep if n_ep else 0.0,
                **{k: stats[k] for k in ("policy_loss", "value_loss", "entropy", "approx_kl", "clip_frac")},
            }
            log.append(row)
            if callback is not None:
                callback(it, params, row)
    finally:
        if pool:
            pool.shutdown()
    return params, log


def format_log(rows) -> str:
    """Whitespace-aligned plain-text table, one row per iteration."""
    lines = [" ".join(f"{c:>12}" for c in LOG_COLUMNS)]
    for r in rows:
        cells = []
        for c in LOG_COLUMNS:
            v = r[c]
            cells.append(f"{v:>12d}" if isinstance(v, int) else f"{v:>12.6g}")
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def checkpoint_bytes(params: PolicyParams, cfg_hash: str, extra: dict | None = None) -> bytes:
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config_hash": cfg_hash,
        "hidden": list(params.hidden),
        "obs_dim": params.obs_dim,
        "act_dim": params.act_dim,
        **(extra or {}),
    }
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.array(json.dumps(meta, sort_keys=True)), **params.arrays())
    return buf.getvalue()


def load_checkpoint_bytes(blob: bytes, expected_hash: str | None = None) -> tuple[PolicyParams, dict]:
    """Inverse of :func:`checkpoint_bytes`; raises ConfigError on version or hash mismatch."""
    try:
        with np.load(io.BytesIO(blob), allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(f"not a policy checkpoint: {exc}") from None
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(f"checkpoint format_version {meta.get('format_version')} unsupported (expected {CHECKPOINT_VERSION})")
    if expected_hash is not None and meta.get("config_hash") != expected_hash:
        raise ConfigError(f"checkpoint config hash {meta.get('config_hash')} does not match current config {expected_hash}")
    params = PolicyParams.from_arrays(arrays, meta["hidden"])
    if not params.is_finite():
        raise ConfigError("checkpoint contains non-finite parameters")
    return params, meta


def config_summary(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    return d
