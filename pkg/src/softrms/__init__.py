"""Simulator of a four-actuator soft-fabric manipulation surface."""

from ._backend import BACKEND
from .core import (
    ConfigError,
    FabricConfig,
    FrameConfig,
    ObjectSpec,
    Regime,
    RegimeThresholds,
    SimConfig,
    TrajectorySample,
    get_object,
    load_config,
    object_catalog,
    seeded_rng,
    simulation_preset,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "FabricConfig",
    "FrameConfig",
    "ObjectSpec",
    "Regime",
    "RegimeThresholds",
    "SimConfig",
    "TrajectorySample",
    "get_object",
    "load_config",
    "object_catalog",
    "seeded_rng",
    "simulation_preset",
]
