"""Mass-spring fabric: grid construction, spring forces, semi-implicit stepping."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from ._backend import kernels
from .core import ConfigError, FabricConfig, FrameConfig, SimConfig

__all__ = [
    "SpringKind",
    "ClothState",
    "SpringSet",
    "DegenerateSpringError",
    "build_cloth",
    "spring_forces",
    "integrate_cloth",
    "cloth_energy",
    "check_stability",
    "stability_index",
    "settle_cloth",
    "pin_positions",
]


class DegenerateSpringError(FloatingPointError):
    pass


class SpringKind(enum.IntEnum):
    STRETCH = 0
    SHEAR = 1
    BEND = 2


@dataclass(frozen=True)
class ClothState:
    positions: np.ndarray
    velocities: np.ndarray
    pinned: np.ndarray
    particle_mass: float
    grid_n: int

    def copy(self) -> ClothState:
        return replace(self, positions=self.positions.copy(), velocities=self.velocities.copy())

    @property
    def n_particles(self) -> int:
        return self.grid_n * self.grid_n


@dataclass(frozen=True)
class SpringSet:
    a: np.ndarray
    b: np.ndarray
    rest_length: np.ndarray
    stiffness: np.ndarray
    kind: np.ndarray

    def __len__(self):
        return len(self.a)

    @property
    def springs(self):
        return [
            (int(a), int(b), float(r), float(k), SpringKind(int(t)))
            for a, b, r, k, t in zip(self.a, self.b, self.rest_length, self.stiffness, self.kind)
        ]

    def count(self, kind: SpringKind) -> int:
        return int(np.count_nonzero(self.kind == kind))


def _grid_pairs(n: int, dr: int, dc: int):
    pairs = []
    for r in range(n):
        for c in range(n):
            r2, c2 = r + dr, c + dc
            if 0 <= r2 < n and 0 <= c2 < n:
                pairs.append((r * n + c, r2 * n + c2))
    return pairs


def build_cloth(fabric: FabricConfig, frame: FrameConfig) -> tuple[ClothState, SpringSet]:
    """Flat fabric grid centred on the frame with its corners pinned.

    Particle ``(row, col)`` has index ``row * n + col``; columns run along x
    and rows along y. The four pins are returned in actuator order.
    """
    n = fabric.grid_n
    s = fabric.spacing
    offset = 0.5 * (frame.frame_side - fabric.fabric_side)
    cols, rows = np.meshgrid(np.arange(n), np.arange(n))
    pos = np.zeros((n * n, 3))
    pos[:, 0] = offset + cols.ravel() * s
    pos[:, 1] = offset + rows.ravel() * s
    pinned = np.array([0, n - 1, n * n - 1, n * (n - 1)], dtype=np.int64)
    pos[pinned, :2] = frame.corner_xy
    pos[pinned, 2] = 0.0

    groups = [
        (SpringKind.STRETCH, [(0, 1), (1, 0)], s, fabric.stretch_stiffness),
        (SpringKind.SHEAR, [(1, 1), (1, -1)], np.sqrt(2.0) * s, fabric.shear_stiffness),
        (SpringKind.BEND, [(0, 2), (2, 0)], 2.0 * s, fabric.bend_stiffness),
    ]
    a, b, rest, stiff, kind = [], [], [], [], []
    for k, offsets, length, stiffness in groups:
        for dr, dc in offsets:
            for i, j in _grid_pairs(n, dr, dc):
                a.append(i)
                b.append(j)
                rest.append(length)
                stiff.append(stiffness)
                kind.append(int(k))
    springs = SpringSet(
        np.array(a, dtype=np.int64),
        np.array(b, dtype=np.int64),
        np.array(rest, dtype=float),
        np.array(stiff, dtype=float),
        np.array(kind, dtype=np.int8),
    )
    state = ClothState(pos, np.zeros_like(pos), pinned, fabric.particle_mass, n)
    return state, springs


def spring_forces(state: ClothState, springs: SpringSet, damping: float) -> np.ndarray:
    out = np.zeros_like(state.positions)
    bad = kernels.spring_forces(
        state.positions, state.velocities, springs.a, springs.b, springs.rest_length, springs.stiffness, float(damping), out
    )
    if bad >= 0:
        raise DegenerateSpringError(
            f"spring {bad} ({int(springs.a[bad])}-{int(springs.b[bad])}) has coincident endpoints"
        )
    return out


def pin_positions(corner_xy: np.ndarray, heights) -> np.ndarray:
    out = np.empty((4, 3))
    out[:, :2] = corner_xy
    out[:, 2] = heights
    return out


def integrate_cloth(
    state: ClothState, forces: np.ndarray, dt: float, pinned_targets: np.ndarray, gravity: float = 9.81
) -> ClothState:
    """One semi-implicit Euler step; ``forces`` excludes gravity."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    forces = np.ascontiguousarray(forces, dtype=float)
    if not np.isfinite(forces).all():
        raise FloatingPointError("non-finite cloth force")
    new = state.copy()
    targets = np.ascontiguousarray(pinned_targets, dtype=float).reshape(4, 3)
    kernels.integrate_cloth(new.positions, new.velocities, forces, state.particle_mass, float(gravity), dt, state.pinned, targets)
    return new


def cloth_energy(state: ClothState, springs: SpringSet, gravity: float = 9.81) -> tuple[float, float, float]:
    """(kinetic, spring potential, gravitational potential) in joules."""
    v = state.velocities
    kinetic = 0.5 * state.particle_mass * float(np.einsum("ij,ij->", v, v))
    d = state.positions[springs.a] - state.positions[springs.b]
    stretch = np.sqrt(np.einsum("ij,ij->i", d, d)) - springs.rest_length
    elastic = 0.5 * float(np.sum(springs.stiffness * stretch * stretch))
    potential = state.particle_mass * gravity * float(state.positions[:, 2].sum())
    return kinetic, elastic, potential


def _max_eigenvalue(springs: SpringSet, rest_pos: np.ndarray, weights: np.ndarray, iters: int = 300) -> float:
    """Largest eigenvalue of the spring operator ``sum w_s u_s u_s^T`` at rest, by power iteration."""
    d = rest_pos[springs.a] - rest_pos[springs.b]
    u = d / np.linalg.norm(d, axis=1)[:, None]
    v = np.random.default_rng(0).standard_normal(rest_pos.shape)
    lam = 0.0
    for _ in range(iters):
        proj = weights * np.einsum("ij,ij->i", v[springs.a] - v[springs.b], u)
        f = proj[:, None] * u
        out = np.zeros_like(v)
        np.add.at(out, springs.a, f)
        np.subtract.at(out, springs.b, f)
        norm = np.linalg.norm(out)
        if norm == 0.0:
            return 0.0
        lam = norm / np.linalg.norm(v)
        v = out / norm
    return lam


STABILITY_LIMIT = 0.9 * 4.0


def stability_index(fabric: FabricConfig, sim: SimConfig, springs: SpringSet | None = None) -> float:
    """Left side of ``dt^2 a + 2 dt b < 4`` for semi-implicit Euler.

    ``a`` and ``b`` are the largest stiffness and damping rates per unit
    particle mass: the lattice operators at rest plus the contact terms.
    """
    n = fabric.grid_n
    cols, rows = np.meshgrid(np.arange(n), np.arange(n))
    rest = np.zeros((n * n, 3))
    rest[:, 0] = cols.ravel() * fabric.spacing
    rest[:, 1] = rows.ravel() * fabric.spacing
    if springs is None:
        _, springs = build_cloth(fabric, FrameConfig(frame_side=fabric.fabric_side))
    m = fabric.particle_mass
    lam_k = _max_eigenvalue(springs, rest, springs.stiffness) * 1.02
    lam_c = _max_eigenvalue(springs, rest, np.full(len(springs), fabric.damping)) * 1.02
    drag = fabric.air_drag * fabric.fabric_side**2 / n**2
    a = (lam_k + sim.contact_stiffness + sim.resolved_friction_stiffness()) / m
    b = (lam_c + drag + sim.resolved_contact_damping(m) + sim.resolved_friction_damping(m)) / m
    h = sim.physics_dt
    return h * h * a + 2.0 * h * b


def check_stability(fabric: FabricConfig, sim: SimConfig, springs: SpringSet | None = None) -> None:
    index = stability_index(fabric, sim, springs)
    if not index < STABILITY_LIMIT:
        raise ConfigError(
            f"physics_dt {sim.physics_dt:.3g} s is unstable for this fabric "
            f"(stability index {index:.3f}, limit {STABILITY_LIMIT}); reduce dt or stiffness"
        )


def settle_cloth(
    state: ClothState,
    springs: SpringSet,
    fabric: FabricConfig,
    sim: SimConfig,
    pin_targets: np.ndarray,
    ke_tol: float = 1e-6,
    max_time: float = 60.0,
    drag_rate: float = 8.0,
) -> ClothState:
    """Damped pre-roll under gravity until kinetic energy drops below ``ke_tol``.

    Extra viscous drag of ``drag_rate`` per second (relative to particle
    mass) stands in for the nominal air drag during the pre-roll.
    """
    from .world import cloth_only_steps

    new = state.copy()
    new.positions[new.pinned] = pin_targets
    drag = drag_rate * state.particle_mass
    steps = max(1, int(round(0.05 / sim.physics_dt)))
    t = 0.0
    kinetic = np.inf
    while t < max_time:
        cloth_only_steps(new, springs, fabric, sim, pin_targets, steps, drag)
        t += steps * sim.physics_dt
        kinetic = cloth_energy(new, springs, sim.gravity)[0]
        if kinetic < ke_tol and t >= 0.5:
            return new
    raise RuntimeError(f"cloth did not settle within {max_time} s (kinetic energy {kinetic:.3g} J)")
