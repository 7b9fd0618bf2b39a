"""Shared configuration, geometry, object catalog, seeding and record types.

Everything here is an immutable value. Configuration documents are YAML with
four top-level sections (``frame``, ``fabric``, ``sim``, ``objects``); see
``docs/config.md`` for the schema.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import yaml

__all__ = [
    "ConfigError",
    "FrameConfig",
    "FabricConfig",
    "RegimeThresholds",
    "SimConfig",
    "Sphere",
    "Box",
    "Cylinder",
    "Ellipsoid",
    "ObjectSpec",
    "Regime",
    "TrajectorySample",
    "load_config",
    "dump_config",
    "config_hash",
    "object_catalog",
    "get_object",
    "seeded_rng",
    "simulation_preset",
]

GRAVITY = 9.81
# 120 rpm motor driving a 5 cm pulley
MOTOR_SPEED = 2.0 * math.pi * 0.05
# 0.29 Nm stall torque on a 2.5 cm pulley radius
FORCE_LIMIT = 11.6


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration documents."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class FrameConfig:
    frame_side: float = 0.5
    stroke: float = 0.5
    max_speed: float = MOTOR_SPEED
    force_limit: float = FORCE_LIMIT

    def __post_init__(self):
        _require(self.frame_side > 0, "frame_side > 0")
        _require(self.stroke > 0, "stroke > 0")
        _require(self.max_speed > 0, "max_speed > 0")
        _require(self.force_limit > 0, "force_limit > 0")

    @property
    def corner_xy(self) -> np.ndarray:
        """Actuator anchor points, counter-clockwise from the origin."""
        s = self.frame_side
        return np.array([[0.0, 0.0], [s, 0.0], [s, s], [0.0, s]])


@dataclass(frozen=True)
class FabricConfig:
    fabric_side: float = 0.6
    grid_n: int = 13
    areal_density: float = 0.15
    stretch_stiffness: float = 200.0
    shear_stiffness: float = 50.0
    bend_stiffness: float = 5.0
    damping: float = 0.05
    # viscous drag per square metre of fabric, N*s/m^3
    air_drag: float = 1.0

    def __post_init__(self):
        _require(isinstance(self.grid_n, int) and not isinstance(self.grid_n, bool), "grid_n must be an integer")
        _require(self.grid_n >= 2, "grid_n ≥ 2")
        _require(self.fabric_side > 0, "fabric_side > 0")
        _require(self.areal_density > 0, "areal_density > 0")
        for name in ("stretch_stiffness", "shear_stiffness", "bend_stiffness", "damping", "air_drag"):
            _require(getattr(self, name) >= 0, f"{name} ≥ 0")

    @property
    def spacing(self) -> float:
        return self.fabric_side / (self.grid_n - 1)

    @property
    def particle_mass(self) -> float:
        return self.areal_density * self.fabric_side**2 / self.grid_n**2


@dataclass(frozen=True)
class RegimeThresholds:
    v_eps: float = 0.005
    s_eps: float = 0.005
    roll_eps: float = 0.2
    window: float = 0.25

    def __post_init__(self):
        for name in ("v_eps", "s_eps", "roll_eps", "window"):
            _require(getattr(self, name) > 0, f"{name} > 0")


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 1.0 / 2400.0
    control_hz: float = 60.0
    gravity: float = GRAVITY
    contact_stiffness: float = 1000.0
    # None: 1% of critical damping for a cloth particle on the penalty spring
    contact_damping: float | None = None
    # None: half the normal contact stiffness
    friction_stiffness: float | None = None
    # None: 10% of critical damping on the tangential stick spring
    friction_damping: float | None = None
    contact_subdiv: int = 4
    contact_skin: float = 0.004
    seed: int = 0
    regime: RegimeThresholds = field(default_factory=RegimeThresholds)

    def __post_init__(self):
        _require(self.physics_dt > 0, "physics_dt > 0")
        _require(self.control_hz > 0, "control_hz > 0")
        _require(self.contact_stiffness > 0, "contact_stiffness > 0")
        _require(self.contact_damping is None or self.contact_damping >= 0, "contact_damping ≥ 0")
        _require(self.friction_stiffness is None or self.friction_stiffness >= 0, "friction_stiffness ≥ 0")
        _require(self.friction_damping is None or self.friction_damping >= 0, "friction_damping ≥ 0")
        _require(isinstance(self.contact_subdiv, int) and self.contact_subdiv >= 1, "contact_subdiv ≥ 1")
        _require(self.contact_skin >= 0, "contact_skin ≥ 0")
        _require(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        period = 1.0 / self.control_hz
        n = round(period / self.physics_dt)
        _require(
            n >= 1 and math.isclose(n * self.physics_dt, period, rel_tol=1e-9, abs_tol=0.0),
            "control period must be an integer number of physics steps",
        )

    @property
    def substeps(self) -> int:
        return round(1.0 / (self.control_hz * self.physics_dt))

    def resolved_contact_damping(self, particle_mass: float) -> float:
        if self.contact_damping is not None:
            return self.contact_damping
        return 0.01 * 2.0 * math.sqrt(self.contact_stiffness * particle_mass)

    def resolved_friction_stiffness(self) -> float:
        if self.friction_stiffness is not None:
            return self.friction_stiffness
        return 0.5 * self.contact_stiffness

    def resolved_friction_damping(self, particle_mass: float) -> float:
        if self.friction_damping is not None:
            return self.friction_damping
        return 0.1 * 2.0 * math.sqrt(self.resolved_friction_stiffness() * particle_mass)


# Shapes. `code` is the kernel shape id; `params` the three kernel floats.


@dataclass(frozen=True)
class Sphere:
    radius: float
    code = 0

    def __post_init__(self):
        _require(self.radius > 0, "sphere radius > 0")

    @property
    def params(self):
        return (self.radius, 0.0, 0.0)

    @property
    def bounding_radius(self):
        return self.radius

    def inertia(self, mass):
        i = 0.4 * mass * self.radius**2
        return (i, i, i)


@dataclass(frozen=True)
class Box:
    half_extents: tuple[float, float, float]
    code = 1

    def __post_init__(self):
        object.__setattr__(self, "half_extents", tuple(float(h) for h in self.half_extents))
        _require(len(self.half_extents) == 3 and all(h > 0 for h in self.half_extents), "box half-extents > 0")

    @property
    def params(self):
        return self.half_extents

    @property
    def bounding_radius(self):
        return math.sqrt(sum(h * h for h in self.half_extents))

    def inertia(self, mass):
        a, b, c = self.half_extents
        return (mass * (b * b + c * c) / 3.0, mass * (a * a + c * c) / 3.0, mass * (a * a + b * b) / 3.0)


@dataclass(frozen=True)
class Cylinder:
    """Solid cylinder with its axis along body z."""

    radius: float
    half_height: float
    code = 2

    def __post_init__(self):
        _require(self.radius > 0 and self.half_height > 0, "cylinder dimensions > 0")

    @property
    def params(self):
        return (self.radius, self.half_height, 0.0)

    @property
    def bounding_radius(self):
        return math.hypot(self.radius, self.half_height)

    def inertia(self, mass):
        r, h = self.radius, self.half_height
        ixx = mass * (3.0 * r * r + 4.0 * h * h) / 12.0
        return (ixx, ixx, 0.5 * mass * r * r)


@dataclass(frozen=True)
class Ellipsoid:
    semi_axes: tuple[float, float, float]
    code = 3

    def __post_init__(self):
        object.__setattr__(self, "semi_axes", tuple(float(a) for a in self.semi_axes))
        _require(len(self.semi_axes) == 3 and all(a > 0 for a in self.semi_axes), "ellipsoid semi-axes > 0")

    @property
    def params(self):
        return self.semi_axes

    @property
    def bounding_radius(self):
        return max(self.semi_axes)

    def inertia(self, mass):
        a, b, c = self.semi_axes
        return (mass * (b * b + c * c) / 5.0, mass * (a * a + c * c) / 5.0, mass * (a * a + b * b) / 5.0)


Shape = Sphere | Box | Cylinder | Ellipsoid

_SHAPE_TYPES = {"sphere": Sphere, "box": Box, "cylinder": Cylinder, "ellipsoid": Ellipsoid}


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    shape: Shape
    mass: float
    friction: float = 0.5
    inertia_override: tuple[float, float, float] | None = None

    def __post_init__(self):
        _require(self.mass > 0, f"{self.name}: mass > 0")
        _require(self.friction >= 0, f"{self.name}: friction ≥ 0")
        if self.inertia_override is not None:
            object.__setattr__(self, "inertia_override", tuple(float(i) for i in self.inertia_override))
            _require(
                len(self.inertia_override) == 3 and all(i > 0 for i in self.inertia_override),
                f"{self.name}: inertia_override must be three positive moments",
            )

    @property
    def inertia(self) -> tuple[float, float, float]:
        """Principal moments in the body frame."""
        if self.inertia_override is not None:
            return self.inertia_override
        return self.shape.inertia(self.mass)

    def resting_orientation(self) -> np.ndarray:
        """Quaternion (w, x, y, z) placing the body in a stable resting pose.

        Ellipsoids lie on their longest axis; every other shape rests in the
        body frame as defined.
        """
        if isinstance(self.shape, Ellipsoid):
            axes = self.shape.semi_axes
            longest = int(np.argmax(axes))
            if longest == 2:
                s = math.sqrt(0.5)
                return np.array([s, 0.0, s, 0.0])
        return np.array([1.0, 0.0, 0.0, 0.0])


def _deburrer() -> ObjectSpec:
    # thin-walled shell: Izz = m r^2, Ixx = m (r^2/2 + h^2/3)
    r, h, m = 0.02, 0.025, 0.03
    ixx = m * (r * r / 2.0 + h * h / 3.0)
    return ObjectSpec("deburrer", Cylinder(r, h), m, 0.4, (ixx, ixx, m * r * r))


_CATALOG = (
    ObjectSpec("sphere", Sphere(0.0255), 0.0125, 0.5),
    ObjectSpec("cube", Box((0.025, 0.025, 0.025)), 0.066, 0.4),
    ObjectSpec("disk", Cylinder(0.02, 0.002), 0.0038, 0.35),
    ObjectSpec("apple", Sphere(0.03), 0.150, 0.5),
    ObjectSpec("cylinder", Cylinder(0.0235, 0.02), 0.0257, 0.5),
    ObjectSpec("egg", Ellipsoid((0.022, 0.022, 0.031)), 0.0686, 0.3),
    _deburrer(),
)


def object_catalog() -> list[ObjectSpec]:
    return list(_CATALOG)


def get_object(name: str) -> ObjectSpec:
    for spec in _CATALOG:
        if spec.name == name:
            return spec
    known = ", ".join(s.name for s in _CATALOG)
    raise KeyError(f"unknown object {name!r}; known objects: {known}")


def seeded_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, stream_id)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


class Regime(str, enum.Enum):
    ROLLING = "Rolling"
    SLIDING = "Sliding"
    PULLING = "Pulling"
    STATIONARY = "Stationary"
    FALLEN = "Fallen"


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    object_position: tuple[float, float, float]
    object_orientation: tuple[float, float, float, float]
    object_velocity: tuple[float, float, float]
    actuator_heights: tuple[float, float, float, float]
    regime: Regime


def simulation_preset() -> tuple[FrameConfig, FabricConfig, SimConfig]:
    """The 1 m training frame with proportionally scaled fabric."""
    frame = FrameConfig(frame_side=1.0)
    fabric = FabricConfig(fabric_side=1.2, grid_n=13)
    return frame, fabric, SimConfig()


# ---------------------------------------------------------------------------
# configuration documents

_SECTIONS = {"frame": FrameConfig, "fabric": FabricConfig, "sim": SimConfig}


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(mapping: Any, allowed: set[str], path: str) -> dict:
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping")
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(f"{path}.{k}" if path else str(k) for k in unknown))
    return mapping


def _build(cls, mapping: dict, path: str):
    try:
        return cls(**mapping)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_shape(doc: Any, path: str) -> Shape:
    doc = _check_keys(doc, {"type", "radius", "half_extents", "half_height", "semi_axes"}, path)
    kind = doc.get("type")
    if kind not in _SHAPE_TYPES:
        raise ConfigError(f"{path}.type: expected one of {sorted(_SHAPE_TYPES)}")
    args = {k: v for k, v in doc.items() if k != "type"}
    allowed = _field_names(_SHAPE_TYPES[kind])
    _check_keys(args, allowed, path)
    return _build(_SHAPE_TYPES[kind], args, path)


def _parse_object(doc: Any, path: str) -> ObjectSpec:
    doc = _check_keys(doc, _field_names(ObjectSpec), path)
    for key in ("name", "shape", "mass"):
        if key not in doc:
            raise ConfigError(f"{path}.{key}: required key missing")
    args = dict(doc)
    args["shape"] = _parse_shape(doc["shape"], f"{path}.shape")
    return _build(ObjectSpec, args, path)


def load_config(text: str) -> tuple[FrameConfig, FabricConfig, SimConfig, list[ObjectSpec]]:
    """Parse and validate a configuration document.

    Missing sections and keys take their defaults; an absent ``objects``
    list means the built-in catalog. Unknown keys are rejected by path.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"parse error{where}: {getattr(exc, 'problem', exc)}") from None
    doc = _check_keys(doc, set(_SECTIONS) | {"objects"}, "")

    built = {}
    for name, cls in _SECTIONS.items():
        section = dict(_check_keys(doc.get(name), _field_names(cls), name))
        if cls is SimConfig and "regime" in section:
            regime = _check_keys(section["regime"], _field_names(RegimeThresholds), "sim.regime")
            section["regime"] = _build(RegimeThresholds, regime, "sim.regime")
        built[name] = _build(cls, section, name)

    if "objects" in doc and doc["objects"] is not None:
        if not isinstance(doc["objects"], list):
            raise ConfigError("objects: expected a list")
        objects = [_parse_object(o, f"objects[{i}]") for i, o in enumerate(doc["objects"])]
    else:
        objects = object_catalog()
    return built["frame"], built["fabric"], built["sim"], objects


def _shape_doc(shape: Shape) -> dict:
    kind = next(k for k, v in _SHAPE_TYPES.items() if isinstance(shape, v))
    out = {"type": kind}
    for f in dataclasses.fields(shape):
        value = getattr(shape, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def config_document(frame, fabric, sim, objects) -> dict:
    sim_doc = dataclasses.asdict(sim)
    return {
        "frame": dataclasses.asdict(frame),
        "fabric": dataclasses.asdict(fabric),
        "sim": sim_doc,
        "objects": [
            {
                "name": o.name,
                "shape": _shape_doc(o.shape),
                "mass": o.mass,
                "friction": o.friction,
                "inertia_override": None if o.inertia_override is None else list(o.inertia_override),
            }
            for o in objects
        ],
    }


def dump_config(frame, fabric, sim, objects) -> str:
    return yaml.safe_dump(config_document(frame, fabric, sim, objects), sort_keys=True)


def config_hash(*configs) -> str:
    """Short stable digest of any mix of config dataclasses and plain values."""

    def norm(obj):
        if dataclasses.is_dataclass(obj):
            return {"__type__": type(obj).__name__, **{f.name: norm(getattr(obj, f.name)) for f in dataclasses.fields(obj)}}
        if isinstance(obj, (list, tuple)):
            return [norm(o) for o in obj]
        if isinstance(obj, dict):
            return {str(k): norm(v) for k, v in sorted(obj.items())}
        if isinstance(obj, float):
            return repr(obj)
        return obj

    blob = yaml.safe_dump(norm(list(configs)), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def quat_norm_ok(q: Sequence[float], tol: float = 1e-6) -> bool:
    return abs(math.sqrt(sum(c * c for c in q)) - 1.0) <= tol
