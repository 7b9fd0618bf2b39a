"""Target-reaching environment on the simulated surface, plus a rigid tilt-plane toy world.

Both environments share the interface ``reset(seed, target_xy) -> (Observation, Episode)``
and ``step(episode, action) -> (Observation, reward, done, info)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..actuation import greedy_tilt_controller
from ..core import GRAVITY, ConfigError, FabricConfig, FrameConfig, ObjectSpec, Regime, SimConfig, get_object, seeded_rng, simulation_preset
from ..world import SimulationDivergence, WorldModel, build_model, settled_cloth, world_reset, world_step

__all__ = [
    "Observation",
    "RewardWeights",
    "Episode",
    "EpisodeDone",
    "SurfaceEnv",
    "TiltPlaneEnv",
    "compute_reward",
    "env_reset",
    "env_step",
    "greedy_action",
]

START_MARGIN = 0.1
OBS_CLIP = 1.5


class EpisodeDone(RuntimeError):
    pass


@dataclass(frozen=True)
class Observation:
    object_xy: np.ndarray
    object_velocity_xy: np.ndarray
    target_xy: np.ndarray
    actuator_heights: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.object_xy, self.object_velocity_xy, self.target_xy, self.actuator_heights])

    @classmethod
    def build(cls, xy, vxy, target, heights, frame_side: float, stroke: float) -> Observation:
        def norm(p):
            return np.clip(2.0 * np.asarray(p, dtype=float) / frame_side - 1.0, -OBS_CLIP, OBS_CLIP)

        return cls(
            norm(xy),
            np.clip(np.asarray(vxy, dtype=float), -OBS_CLIP, OBS_CLIP),
            norm(target),
            np.clip(np.asarray(heights, dtype=float) / stroke, 0.0, 1.0),
        )


@dataclass(frozen=True)
class RewardWeights:
    w_dist: float = 1.0
    w_vel: float = 0.5
    w_fall: float = 50.0
    w_success: float = 10.0
    success_radius: float = 0.05

    def __post_init__(self):
        for name in ("w_dist", "w_vel", "w_fall", "w_success"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0")
        if not self.success_radius > 0:
            raise ConfigError("success_radius must be > 0")


def compute_reward(weights: RewardWeights, object_xy, velocity_xy, target_xy, fell: bool) -> tuple[float, dict]:
    """Four-term reward. Returns the total and the individual terms."""
    offset = np.asarray(target_xy, dtype=float) - np.asarray(object_xy, dtype=float)
    d = float(math.hypot(offset[0], offset[1]))
    toward = float(np.dot(velocity_xy, offset / d)) if d > 0 else 0.0
    terms = {
        "dist": -weights.w_dist * d,
        "vel": weights.w_vel * toward,
        "success": weights.w_success * float(d < weights.success_radius and not fell),
        "fall": -weights.w_fall * float(fell),
    }
    return sum(terms.values()), terms


@dataclass
class Episode:
    """Mutable per-episode state. One env instance may drive many episodes."""

    state: object
    target: np.ndarray
    steps: int = 0
    done: bool = False
    total_reward: float = 0.0
    outcome: str = ""
    extra: dict = field(default_factory=dict)


def _sample_xy(rng: np.random.Generator, side: float, margin: float) -> np.ndarray:
    return rng.uniform(margin, side - margin, size=2)


def _check_target(target_xy, side: float) -> np.ndarray:
    t = np.asarray(target_xy, dtype=float)
    if t.shape != (2,) or not np.isfinite(t).all() or not (0 <= t[0] <= side and 0 <= t[1] <= side):
        raise ValueError(f"target {target_xy!r} must be a finite point inside the {side} m frame")
    return t


class _EnvBase:
    frame: FrameConfig
    weights: RewardWeights
    step_limit: int

    def _finish(self, ep: Episode, xy, vxy, fell: bool, diverged: bool = False):
        reward, terms = compute_reward(self.weights, xy, vxy, ep.target, fell)
        ep.steps += 1
        dist = float(np.linalg.norm(ep.target - xy))
        success = dist < self.weights.success_radius and not fell
        truncated = not (success or fell) and ep.steps >= self.step_limit
        ep.done = success or fell or truncated
        ep.total_reward += reward
        if ep.done:
            ep.outcome = "success" if success else "fall" if fell else "timeout"
        info = {"distance": dist, "success": success, "fell": fell, "truncated": truncated, "diverged": diverged, "terms": terms}
        return reward, info

    def _start_target(self, seed: int, target_xy):
        rng = seeded_rng(seed, 0)
        start = _sample_xy(rng, self.frame.frame_side, START_MARGIN)
        drawn = _sample_xy(rng, self.frame.frame_side, START_MARGIN)
        target = drawn if target_xy is None else _check_target(target_xy, self.frame.frame_side)
        return start, target

    def action_to_heights(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=float)
        if a.shape != (4,) or not np.isfinite(a).all():
            raise ValueError("action must be four finite numbers")
        return (np.clip(a, -1.0, 1.0) + 1.0) * 0.5 * self.frame.stroke

    def heights_to_action(self, heights) -> np.ndarray:
        return 2.0 * np.asarray(heights, dtype=float) / self.frame.stroke - 1.0


class SurfaceEnv(_EnvBase):
    """Sphere-on-fabric target reaching on the simulated frame.

    The settled fabric at the initial height is computed once per instance
    and reused by every reset.
    """

    def __init__(
        self,
        frame: FrameConfig | None = None,
        fabric: FabricConfig | None = None,
        sim: SimConfig | None = None,
        spec: ObjectSpec | None = None,
        weights: RewardWeights | None = None,
        step_limit: int = 600,
        settle_time: float = 1.0,
    ):
        pf, pc, ps = simulation_preset()
        self.frame = frame or pf
        self.fabric = fabric or pc
        self.sim = sim or ps
        self.spec = spec or get_object("sphere")
        self.weights = weights or RewardWeights()
        if step_limit < 1:
            raise ConfigError("step_limit must be >= 1")
        self.step_limit = int(step_limit)
        self.settle_time = settle_time
        self.initial_height = self.frame.stroke / 2
        self.model: WorldModel = build_model(self.frame, self.fabric, self.sim, self.spec)
        self._cloth = settled_cloth(self.model, self.initial_height)

    def _observe(self, state, target) -> Observation:
        b = state.body
        return Observation.build(b.position[:2], b.linear_velocity[:2], target, state.bank.heights, self.frame.frame_side, self.frame.stroke)

    def reset(self, seed: int, target_xy=None) -> tuple[Observation, Episode]:
        start, target = self._start_target(seed, target_xy)
        state = world_reset(
            self.frame, self.fabric, self.sim, self.spec, start,
            initial_height=self.initial_height, cloth=self._cloth, model=self.model, settle_time=self.settle_time,
        )
        return self._observe(state, target), Episode(state, target)

    def step(self, ep: Episode, action):
        if ep.done:
            raise EpisodeDone("step called on a finished episode; reset first")
        heights = self.action_to_heights(action)
        diverged = False
        try:
            state = world_step(ep.state, heights)
        except SimulationDivergence:
            # counted by the trainer; the episode ends like a fall
            state, diverged = ep.state, True
        ep.state = state
        fell = bool(state.fallen) or diverged
        b = state.body
        reward, info = self._finish(ep, b.position[:2], b.linear_velocity[:2], fell, diverged)
        info["regime"] = Regime.FALLEN.value if diverged else state.regime.value
        return self._observe(state, ep.target), reward, ep.done, info

    def object_xy(self, ep: Episode) -> np.ndarray:
        return np.array(ep.state.body.position[:2])


@dataclass
class _TiltState:
    xy: np.ndarray
    v: np.ndarray
    heights: np.ndarray


class TiltPlaneEnv(_EnvBase):
    """Rigid tilt-plane stand-in: a rolling ball on the plane through the four corner heights.

    Shares observations, actions and rewards with :class:`SurfaceEnv` but
    has no fabric, so it isolates the learning machinery from cloth dynamics.
    """

    def __init__(self, frame: FrameConfig | None = None, weights: RewardWeights | None = None, step_limit: int = 600,
                 rolling_drag: float = 1.0, control_hz: float = 60.0, substeps: int = 4):
        self.frame = frame or simulation_preset()[0]
        self.weights = weights or RewardWeights()
        self.step_limit = int(step_limit)
        self.rolling_drag = rolling_drag
        self.dt = 1.0 / control_hz
        self.substeps = substeps

    def _observe(self, s: _TiltState, target) -> Observation:
        return Observation.build(s.xy, s.v, target, s.heights, self.frame.frame_side, self.frame.stroke)

    def reset(self, seed: int, target_xy=None) -> tuple[Observation, Episode]:
        start, target = self._start_target(seed, target_xy)
        s = _TiltState(start, np.zeros(2), np.full(4, self.frame.stroke / 2))
        return self._observe(s, target), Episode(s, target)

    def step(self, ep: Episode, action):
        if ep.done:
            raise EpisodeDone("step called on a finished episode; reset first")
        s: _TiltState = ep.state
        targets = self.action_to_heights(action)
        L = self.frame.frame_side
        h = s.heights.copy()
        xy, v = s.xy.copy(), s.v.copy()
        h_dt = self.dt / self.substeps
        for _ in range(self.substeps):
            h += np.clip(targets - h, -self.frame.max_speed * h_dt, self.frame.max_speed * h_dt)
            gx = ((h[1] + h[2]) - (h[0] + h[3])) / (2.0 * L)
            gy = ((h[2] + h[3]) - (h[0] + h[1])) / (2.0 * L)
            acc = -(5.0 / 7.0) * GRAVITY * np.array([gx, gy]) - self.rolling_drag * v
            v = v + acc * h_dt
            xy = xy + v * h_dt
        ep.state = _TiltState(xy, v, h)
        fell = not (0.0 <= xy[0] <= L and 0.0 <= xy[1] <= L)
        reward, info = self._finish(ep, xy, v, fell)
        info["regime"] = Regime.FALLEN.value if fell else Regime.ROLLING.value
        return self._observe(ep.state, ep.target), reward, ep.done, info

    def object_xy(self, ep: Episode) -> np.ndarray:
        return np.array(ep.state.xy)


def greedy_action(env, ep: Episode) -> np.ndarray:
    """Greedy tilt baseline expressed as a normalised action."""
    heights = greedy_tilt_controller(env.object_xy(ep), ep.target, env.frame)
    return env.heights_to_action(heights)


_DEFAULT_ENV: SurfaceEnv | None = None


def env_reset(seed: int, target_xy=None, env=None) -> tuple[Observation, Episode]:
    """Reset ``env`` (a shared default :class:`SurfaceEnv` when omitted)."""
    global _DEFAULT_ENV
    if env is None:
        if _DEFAULT_ENV is None:
            _DEFAULT_ENV = SurfaceEnv()
        env = _DEFAULT_ENV
    obs, ep = env.reset(seed, target_xy)
    ep.extra["env"] = env
    return obs, ep


def env_step(episode: Episode, action):
    return episode.extra["env"].step(episode, action)
