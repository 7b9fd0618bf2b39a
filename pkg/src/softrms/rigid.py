"""Rigid object dynamics and penalty contact against the fabric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import N_STATS, kernels
from .cloth import ClothState
from .core import ObjectSpec

__all__ = [
    "RigidState",
    "signed_distance",
    "contact_forces",
    "integrate_rigid",
    "quat_to_matrix",
    "new_stats",
]


def quat_to_matrix(q) -> np.ndarray:
    return np.asarray(kernels.quat_to_matrix(np.asarray(q, dtype=float)))


def new_stats() -> np.ndarray:
    return np.zeros(N_STATS)


@dataclass(frozen=True)
class RigidState:
    spec: ObjectSpec
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("position", "orientation", "linear_velocity", "angular_velocity"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation, self.linear_velocity, self.angular_velocity])

    @classmethod
    def from_array(cls, spec: ObjectSpec, arr: np.ndarray) -> RigidState:
        return cls(spec, arr[0:3], arr[3:7], arr[7:10], arr[10:13])


def signed_distance(spec: ObjectSpec, state: RigidState, point) -> tuple[float, np.ndarray]:
    """Distance from ``point`` to the body surface (negative inside) and the outward normal."""
    rot = quat_to_matrix(state.orientation)
    local = rot.T @ (np.asarray(point, dtype=float) - state.position)
    d, n = kernels.sdf_body(spec.shape.code, np.array(spec.shape.params, dtype=float), local)
    return float(d[0]), rot @ n[0]


def contact_forces(
    cloth: ClothState,
    body: RigidState,
    k_c: float,
    c_c: float,
    mu: float,
    friction_damping: float = 1.0,
    subdiv: int = 1,
    stats: np.ndarray | None = None,
    skin: float = 0.0,
    friction_stiffness: float = 0.0,
    dt: float = 0.0,
    anchors: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Penalty normal force, damping and regularised Coulomb friction.

    Returns per-particle forces, the body force and the body torque about its
    centre of mass. The body receives the exact negation of every sample
    force. ``subdiv > 1`` samples the bilinear fabric surface between
    particles; pass a ``stats`` array from :func:`new_stats` to collect
    contact-patch diagnostics. ``skin`` offsets the contact onset outward
    from the body surface (fabric thickness).

    With ``friction_stiffness > 0`` each surface sample carries a stick
    displacement in ``anchors`` (updated in place, ``dt`` seconds per call);
    the default is purely viscous friction capped by the Coulomb cone.
    """
    if k_c <= 0:
        raise ValueError("contact stiffness must be positive")
    out = np.zeros_like(cloth.positions)
    body_out = np.zeros(6)
    if stats is None:
        stats = new_stats()
    spec = body.spec
    if anchors is None:
        anchors = np.zeros((kernels.num_samples(cloth.grid_n, int(subdiv)), 3))
    kernels.contact_forces(
        cloth.positions,
        cloth.velocities,
        cloth.grid_n,
        int(subdiv),
        body.as_array(),
        spec.shape.code,
        np.array(spec.shape.params, dtype=float),
        spec.shape.bounding_radius,
        float(k_c),
        float(c_c),
        float(friction_stiffness),
        float(friction_damping),
        float(mu),
        float(skin),
        float(dt),
        anchors,
        out,
        body_out,
        stats,
    )
    return out, body_out[0:3].copy(), body_out[3:6].copy()


def integrate_rigid(body: RigidState, force, torque, dt: float) -> RigidState:
    """Semi-implicit step; gravity must already be included in ``force``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    force = np.asarray(force, dtype=float)
    torque = np.asarray(torque, dtype=float)
    if not (np.isfinite(force).all() and np.isfinite(torque).all() and np.isfinite(body.as_array()).all()):
        raise FloatingPointError("non-finite rigid body input")
    arr = body.as_array()
    kernels.integrate_rigid(arr, body.spec.mass, np.array(body.spec.inertia, dtype=float), force, torque, float(dt))
    return RigidState.from_array(body.spec, arr)
