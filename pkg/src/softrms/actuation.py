"""Height servos, the scripted protocols and a greedy tilt baseline.

Actuators are indexed counter-clockwise from the origin corner:
``(0, 0), (L, 0), (L, L), (0, L)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._backend import kernels
from .core import FrameConfig

__all__ = [
    "ActuatorBank",
    "servo_step",
    "edge_protocol",
    "diagonal_protocol",
    "circular_protocol",
    "greedy_tilt_controller",
    "PROTOCOLS",
]

EDGE_RATE = 0.01
DIAGONAL_RATE = 0.01
NEIGHBOUR_RATE = 0.005
DEFAULT_FREQUENCY = 0.2
DEFAULT_PHASE_STEP = math.pi / 4


@dataclass(frozen=True)
class ActuatorBank:
    heights: np.ndarray
    targets: np.ndarray
    max_speed: float
    stroke: float

    @classmethod
    def level(cls, frame: FrameConfig, height: float) -> ActuatorBank:
        h = np.full(4, float(height))
        return cls(h, h.copy(), frame.max_speed, frame.stroke)

    def with_targets(self, targets) -> ActuatorBank:
        return replace(self, targets=np.clip(np.asarray(targets, dtype=float), 0.0, self.stroke))


def servo_step(bank: ActuatorBank, dt: float) -> ActuatorBank:
    """Move each height toward its target by at most ``max_speed * dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    heights = np.array(bank.heights, dtype=float)
    targets = np.clip(np.asarray(bank.targets, dtype=float), 0.0, bank.stroke)
    kernels.servo_update(heights, targets, bank.max_speed, bank.stroke, dt)
    return replace(bank, heights=heights, targets=targets)


def edge_protocol(t: float, stroke: float = 0.5) -> np.ndarray:
    """Raise the x = L edge 1 cm per whole second, the x = 0 edge stays at zero."""
    if t < 0:
        raise ValueError("t must be non-negative")
    h = min(EDGE_RATE * math.floor(t), stroke)
    return np.array([0.0, h, h, 0.0])


def diagonal_protocol(t: float, stroke: float = 0.5) -> np.ndarray:
    """Raise the far corner 1 cm/s and its two neighbours 0.5 cm/s, in whole-second steps."""
    if t < 0:
        raise ValueError("t must be non-negative")
    k = math.floor(t)
    far = min(DIAGONAL_RATE * k, stroke)
    side = min(NEIGHBOUR_RATE * k, stroke)
    return np.array([0.0, side, far, side])


def circular_protocol(
    t: float,
    amplitude: float,
    frequency: float = DEFAULT_FREQUENCY,
    phase_step: float = DEFAULT_PHASE_STEP,
    stroke: float = 0.5,
) -> np.ndarray:
    """Offset sinusoids ``A (1 + sin(2 pi f t - i * phase_step))``."""
    if not 0 < amplitude <= stroke / 2 + 1e-12:
        raise ValueError(f"amplitude must be in (0, {stroke / 2}], got {amplitude}")
    if frequency <= 0:
        raise ValueError("frequency must be positive")
    i = np.arange(4)
    h = amplitude * (1.0 + np.sin(2.0 * math.pi * frequency * t - i * phase_step))
    return np.clip(h, 0.0, stroke)


PROTOCOLS = {"edge": edge_protocol, "diagonal": diagonal_protocol}


def greedy_tilt_controller(
    object_xy,
    target_xy,
    frame: FrameConfig,
    gain: float = 0.2,
    base: float = 0.05,
) -> np.ndarray:
    """Lift the corners behind the object so the surface slopes toward the target."""
    obj = np.asarray(object_xy, dtype=float)
    u = np.asarray(target_xy, dtype=float) - obj
    norm = math.hypot(u[0], u[1])
    if norm == 0.0:
        return np.full(4, min(base, frame.stroke))
    u /= norm
    to_corner = frame.corner_xy - obj
    lengths = np.hypot(to_corner[:, 0], to_corner[:, 1])
    lengths[lengths == 0] = 1.0
    alignment = -(to_corner @ u) / lengths
    return np.clip(base + gain * np.maximum(0.0, alignment), 0.0, frame.stroke)
