"""Target-reaching environment and a numpy PPO trainer."""

from .env import (
    Episode,
    EpisodeDone,
    Observation,
    RewardWeights,
    SurfaceEnv,
    TiltPlaneEnv,
    compute_reward,
    env_reset,
    env_step,
    greedy_action,
)
from .policy import PolicyParams, init_params, policy_act
from .ppo import Adam, RolloutBatch, TrainingDivergence, gae_compute, normalize_advantages, ppo_loss_and_grad, ppo_update
from .train import TrainConfig, checkpoint_bytes, format_log, load_checkpoint_bytes, train

__all__ = [
    "Adam",
    "Episode",
    "EpisodeDone",
    "Observation",
    "PolicyParams",
    "RewardWeights",
    "RolloutBatch",
    "SurfaceEnv",
    "TiltPlaneEnv",
    "TrainConfig",
    "TrainingDivergence",
    "checkpoint_bytes",
    "compute_reward",
    "env_reset",
    "env_step",
    "format_log",
    "gae_compute",
    "greedy_action",
    "init_params",
    "load_checkpoint_bytes",
    "normalize_advantages",
    "policy_act",
    "ppo_loss_and_grad",
    "ppo_update",
    "train",
]
