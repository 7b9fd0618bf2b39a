"""Deterministic stepped world: fabric, one rigid object and four servos."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._backend import N_STATS, kernels
from .actuation import ActuatorBank
from .cloth import ClothState, SpringSet, build_cloth, check_stability, pin_positions, settle_cloth
from .core import (
    FabricConfig,
    FrameConfig,
    ObjectSpec,
    Regime,
    RegimeThresholds,
    SimConfig,
    TrajectorySample,
)
from .rigid import RigidState, quat_to_matrix

__all__ = [
    "SimulationDivergence",
    "WorldModel",
    "WorldState",
    "MotionSample",
    "build_model",
    "settled_cloth",
    "world_reset",
    "world_step",
    "fall_check",
    "classify_motion",
    "support_depth",
    "surface_height",
]

FALL_DEPTH = 0.05
FALL_MARGIN = 0.1


class SimulationDivergence(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class WorldModel:
    """Static description of a world; shared by every state of an episode."""

    frame: FrameConfig
    fabric: FabricConfig
    sim: SimConfig
    spec: ObjectSpec | None
    springs: SpringSet
    contact_damping: float
    friction_stiffness: float
    friction_damping: float
    drag: float
    pinned: np.ndarray
    corner_xy: np.ndarray

    @property
    def control_dt(self) -> float:
        return self.sim.substeps * self.sim.physics_dt

    @property
    def n_samples(self) -> int:
        return kernels.num_samples(self.fabric.grid_n, self.sim.contact_subdiv)

    @property
    def window_steps(self) -> int:
        return max(2, math.ceil(self.sim.regime.window * self.sim.control_hz - 1e-9))


def build_model(frame: FrameConfig, fabric: FabricConfig, sim: SimConfig, spec: ObjectSpec | None) -> WorldModel:
    _, springs = build_cloth(fabric, frame)
    check_stability(fabric, sim, springs)
    m = fabric.particle_mass
    return WorldModel(
        frame,
        fabric,
        sim,
        spec,
        springs,
        sim.resolved_contact_damping(m),
        sim.resolved_friction_stiffness(),
        sim.resolved_friction_damping(m),
        fabric.air_drag * fabric.fabric_side**2 / fabric.grid_n**2,
        np.array([0, fabric.grid_n - 1, fabric.grid_n**2 - 1, fabric.grid_n * (fabric.grid_n - 1)], dtype=np.int64),
        np.ascontiguousarray(frame.corner_xy, dtype=float),
    )


@dataclass(frozen=True)
class MotionSample:
    """Per-control-step motion record used by the regime classifier.

    ``carry_speed`` is the tangential speed of the body centre relative to
    the fabric material under it; ``slip_speed`` the tangential slip at the
    contact points themselves, rotation included. Both are contact-force
    weighted patch averages and meaningless when ``in_contact`` is false.
    """

    t: float
    velocity: np.ndarray
    angular_velocity: np.ndarray
    carry_speed: float
    slip_speed: float
    in_contact: bool

    @classmethod
    def from_kinematics(cls, t, velocity, angular_velocity, cloth_velocity, contact_offset) -> MotionSample:
        """Build a sample from rigid kinematics against a single contact point."""
        v = np.asarray(velocity, dtype=float)
        w = np.asarray(angular_velocity, dtype=float)
        vc = np.asarray(cloth_velocity, dtype=float)
        r = np.asarray(contact_offset, dtype=float)
        carry = float(np.linalg.norm(v - vc))
        slip = float(np.linalg.norm(v + np.cross(w, r) - vc))
        return cls(t, v, w, carry, slip, True)


@dataclass(frozen=True)
class WorldState:
    model: WorldModel
    time: float
    step: int
    cloth: ClothState
    body: RigidState
    bank: ActuatorBank
    fallen: bool = False
    regime: Regime = Regime.STATIONARY
    regime_since: float = 0.0
    window: tuple[MotionSample, ...] = ()
    peak_pin_force: float = 0.0
    contact_count: int = 0
    anchors: np.ndarray | None = None

    def sample(self) -> TrajectorySample:
        return TrajectorySample(
            t=self.time,
            object_position=tuple(float(v) for v in self.body.position),
            object_orientation=tuple(float(v) for v in self.body.orientation),
            object_velocity=tuple(float(v) for v in self.body.linear_velocity),
            actuator_heights=tuple(float(v) for v in self.bank.heights),
            regime=self.regime,
        )

    @property
    def force_limit_exceeded(self) -> bool:
        return self.peak_pin_force > self.model.frame.force_limit


# ---------------------------------------------------------------------------
# low level stepping


def _run(model: WorldModel, pos, vel, heights, targets, body, anchors, n_sub: int, stats) -> int:
    fabric, sim, frame, spec = model.fabric, model.sim, model.frame, model.spec
    force = np.empty_like(pos)
    return kernels.simulate(
        pos,
        vel,
        force,
        model.springs.a,
        model.springs.b,
        model.springs.rest_length,
        model.springs.stiffness,
        fabric.damping,
        model.drag,
        fabric.particle_mass,
        fabric.grid_n,
        model.pinned,
        model.corner_xy,
        heights,
        targets,
        frame.max_speed,
        frame.stroke,
        True,
        body,
        spec.shape.code,
        np.array(spec.shape.params, dtype=float),
        spec.mass,
        np.array(spec.inertia, dtype=float),
        spec.shape.bounding_radius,
        sim.contact_stiffness,
        model.contact_damping,
        model.friction_stiffness,
        model.friction_damping,
        spec.friction,
        sim.contact_skin,
        anchors,
        sim.contact_subdiv,
        sim.gravity,
        sim.physics_dt,
        n_sub,
        stats,
    )


def cloth_only_steps(cloth: ClothState, springs, fabric, sim, pin_targets, n_steps: int, drag: float) -> None:
    """Advance a bare cloth in place with fixed pins (used by the pre-roll)."""
    heights = np.ascontiguousarray(pin_targets[:, 2], dtype=float)
    corner = np.ascontiguousarray(pin_targets[:, :2], dtype=float)
    idle_body = np.zeros(13)
    idle_body[3] = 1.0
    status = kernels.simulate(
        cloth.positions, cloth.velocities, np.empty_like(cloth.positions),
        springs.a, springs.b, springs.rest_length, springs.stiffness,
        fabric.damping, drag, fabric.particle_mass, fabric.grid_n, cloth.pinned, corner,
        heights, heights.copy(), 1.0, 1.0, False, idle_body,
        0, np.ones(3), 1.0, np.ones(3), 0.0,
        sim.contact_stiffness, 0.0, 0.0, 0.0, 0.0, 0.0, np.zeros((1, 3)), 1, sim.gravity, sim.physics_dt, n_steps, np.zeros(N_STATS),
    )
    if status != 0:
        raise SimulationDivergence(f"cloth pre-roll diverged (status {status})", status)


# ---------------------------------------------------------------------------
# geometry helpers


def support_depth(spec: ObjectSpec, orientation) -> float:
    """Distance from the body centre down to its lowest point."""
    rot = quat_to_matrix(orientation)
    col = rot[2]  # world z expressed in body axes
    shape = spec.shape
    if shape.code == 0:
        return shape.radius
    if shape.code == 1:
        return float(np.sum(np.abs(col) * np.array(shape.half_extents)))
    if shape.code == 2:
        cz = abs(col[2])
        return shape.half_height * cz + shape.radius * math.sqrt(max(0.0, 1.0 - cz * cz))
    return float(np.sqrt(np.sum((col * np.array(shape.semi_axes)) ** 2)))


def surface_height(cloth: ClothState, xy, radius: float) -> float:
    """Highest fabric point within ``radius`` of ``xy`` in the horizontal plane."""
    from ._kernels_py import _lattice

    corners, w, _ = _lattice(cloth.grid_n, 4)
    pts = np.einsum("sk,skd->sd", w, cloth.positions[corners])
    d2 = np.sum((pts[:, :2] - np.asarray(xy)) ** 2, axis=1)
    near = d2 <= radius * radius
    if not near.any():
        return float(pts[np.argmin(d2), 2])
    return float(pts[near, 2].max())


# ---------------------------------------------------------------------------
# classification


def _window_span(samples: Sequence[MotionSample]) -> float:
    if len(samples) < 2:
        return 0.0
    dt = samples[1].t - samples[0].t
    return len(samples) * dt


def classify_motion(samples: Sequence[MotionSample], thresholds: RegimeThresholds) -> Regime:
    """Label a window of motion samples.

    Stationary when the object is still; Pulling when it moves with the
    fabric underneath; Rolling when it moves relative to the fabric but its
    contact points do not; Sliding otherwise.
    """
    if _window_span(samples) < thresholds.window - 1e-9:
        raise ValueError(f"window shorter than {thresholds.window} s")
    v = np.array([s.velocity for s in samples])
    speed = np.linalg.norm(v, axis=1)
    if speed.mean() < thresholds.v_eps:
        return Regime.STATIONARY
    touching = [s for s in samples if s.in_contact]
    if not touching:
        return Regime.SLIDING
    carry = float(np.mean([s.carry_speed for s in touching]))
    if carry < thresholds.s_eps:
        return Regime.PULLING
    slip = float(np.mean([s.slip_speed for s in touching]))
    if slip < thresholds.roll_eps * carry:
        return Regime.ROLLING
    return Regime.SLIDING


def fall_check(state: WorldState) -> bool:
    frame = state.model.frame
    spec = state.body.spec
    x, y, z = state.body.position
    lowest = float(state.cloth.positions[:, 2].min())
    if z < lowest - spec.shape.bounding_radius - FALL_DEPTH:
        return True
    lo, hi = -FALL_MARGIN, frame.frame_side + FALL_MARGIN
    return not (lo <= x <= hi and lo <= y <= hi)


# ---------------------------------------------------------------------------
# reset / step


def settled_cloth(model: WorldModel, height: float) -> ClothState:
    cloth, _ = build_cloth(model.fabric, model.frame)
    cloth.positions[:, 2] += height
    pins = pin_positions(model.frame.corner_xy, np.full(4, height))
    return settle_cloth(cloth, model.springs, model.fabric, model.sim, pins)


def world_reset(
    frame: FrameConfig,
    fabric: FabricConfig,
    sim: SimConfig,
    spec: ObjectSpec,
    object_xy,
    initial_height: float | None = None,
    cloth: ClothState | None = None,
    model: WorldModel | None = None,
    settle_time: float = 5.0,
    drop_height: float = 0.02,
) -> WorldState:
    """Settle the fabric, drop the object above ``object_xy`` and let it come to rest.

    ``cloth`` may carry a previously settled fabric for the same
    configuration and initial height, which skips the pre-roll. Object
    settling stops once it is in contact and slower than 1 mm/s, or after
    ``settle_time`` seconds.
    """
    xy = np.asarray(object_xy, dtype=float)
    if xy.shape != (2,) or not np.isfinite(xy).all():
        raise ValueError("object_xy must be a finite 2-vector")
    if not (0.0 <= xy[0] <= frame.frame_side and 0.0 <= xy[1] <= frame.frame_side):
        raise ValueError(f"object placement {tuple(xy)} outside the {frame.frame_side} m frame")
    if model is None:
        model = build_model(frame, fabric, sim, spec)
    h0 = frame.stroke / 2 if initial_height is None else float(initial_height)
    if not 0.0 <= h0 <= frame.stroke:
        raise ValueError("initial height outside the actuator stroke")
    if cloth is None:
        cloth = settled_cloth(model, h0)
    cloth = cloth.copy()

    q = spec.resting_orientation()
    depth = support_depth(spec, q)
    z = surface_height(cloth, xy, spec.shape.bounding_radius) + depth + sim.contact_skin + drop_height
    body = RigidState(spec, np.array([xy[0], xy[1], z]), q)
    bank = ActuatorBank.level(frame, h0)
    state = WorldState(model, 0.0, 0, cloth, body, bank, anchors=np.zeros((model.n_samples, 3)))

    elapsed = 0.0
    while elapsed < settle_time:
        state = world_step(state, bank.heights)
        elapsed += model.control_dt
        speed = float(np.linalg.norm(state.body.linear_velocity))
        if state.fallen:
            break
        if state.contact_count > 0 and speed < 1e-3 and elapsed >= 0.2:
            break
    return replace(
        state,
        time=0.0,
        step=0,
        regime=Regime.FALLEN if state.fallen else Regime.STATIONARY,
        regime_since=0.0,
        window=(),
        peak_pin_force=0.0,
    )


def world_step(state: WorldState, action) -> WorldState:
    """Advance one control period with servo targets ``action`` (metres)."""
    model = state.model
    action = np.asarray(action, dtype=float)
    if action.shape != (4,) or not np.isfinite(action).all():
        raise ValueError("action must be four finite heights")
    targets = np.clip(action, 0.0, model.frame.stroke)
    pos = state.cloth.positions.copy()
    vel = state.cloth.velocities.copy()
    heights = state.bank.heights.copy()
    body = state.body.as_array()
    anchors = np.zeros((model.n_samples, 3)) if state.anchors is None else state.anchors.copy()
    stats = np.zeros(N_STATS)
    n_sub = model.sim.substeps
    status = _run(model, pos, vel, heights, targets, body, anchors, n_sub, stats)
    if status != 0:
        where = state.step * n_sub + abs(status)
        raise SimulationDivergence(
            f"simulation diverged at physics step {where} (t = {state.time + abs(status) * model.sim.physics_dt:.4f} s)",
            where,
        )
    step = state.step + 1
    t = step * model.control_dt
    cloth = replace(state.cloth, positions=pos, velocities=vel)
    rigid = RigidState.from_array(model.spec, body)
    bank = replace(state.bank, heights=heights, targets=targets)

    weight = stats[0]
    carry = stats[7] / weight if weight > 0 else 0.0
    slip = stats[12] / weight if weight > 0 else 0.0
    motion = MotionSample(t, rigid.linear_velocity, rigid.angular_velocity, float(carry), float(slip), weight > 0)
    window = (state.window + (motion,))[-model.window_steps:]

    new = replace(
        state,
        time=t,
        step=step,
        cloth=cloth,
        body=rigid,
        bank=bank,
        window=window,
        peak_pin_force=max(state.peak_pin_force, float(stats[10])),
        contact_count=int(stats[9]),
        anchors=anchors,
    )
    fallen = state.fallen or fall_check(new)
    regime, since = state.regime, state.regime_since
    if fallen:
        if regime is not Regime.FALLEN:
            regime, since = Regime.FALLEN, t
    elif len(window) >= model.window_steps:
        label = classify_motion(window, model.sim.regime)
        # minimum dwell of one window suppresses label chatter
        if label is not regime and t - since >= model.sim.regime.window - 1e-9:
            regime, since = label, t
    return replace(new, fallen=fallen, regime=regime, regime_since=since)
