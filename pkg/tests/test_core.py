import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softrms.core import (
    ConfigError,
    FabricConfig,
    FrameConfig,
    ObjectSpec,
    SimConfig,
    Sphere,
    config_hash,
    dump_config,
    get_object,
    load_config,
    object_catalog,
    seeded_rng,
    simulation_preset,
)


def test_defaults_load_from_empty_document():
    frame, fabric, sim, objects = load_config("")
    assert frame == FrameConfig()
    assert fabric == FabricConfig()
    assert sim == SimConfig()
    assert [o.name for o in objects] == [o.name for o in object_catalog()]


def test_dump_load_round_trip():
    frame, fabric, sim = FrameConfig(frame_side=0.7), FabricConfig(grid_n=9), SimConfig(contact_skin=0.003)
    text = dump_config(frame, fabric, sim, object_catalog())
    assert load_config(text) == (frame, fabric, sim, object_catalog())


def test_grid_n_one_rejected():
    with pytest.raises(ConfigError, match="grid_n ≥ 2"):
        load_config("fabric: {grid_n: 1}")


def test_unknown_key_reported_with_path():
    with pytest.raises(ConfigError, match="fabric.stiffness"):
        load_config("fabric: {stiffness: 3}")


def test_parse_error_has_location():
    with pytest.raises(ConfigError, match="line"):
        load_config("frame: [1, 2\nfabric: 3")


def test_sim_period_must_be_whole_substeps():
    with pytest.raises(ConfigError):
        SimConfig(physics_dt=1 / 1000.0, control_hz=60.0)
    assert SimConfig().substeps == 40


def test_negative_stiffness_rejected():
    with pytest.raises(ConfigError):
        FabricConfig(stretch_stiffness=-1)


def test_particle_mass_formula():
    assert FabricConfig().particle_mass == pytest.approx(0.15 * 0.36 / 169)
    assert FabricConfig().spacing == pytest.approx(0.05)


def test_catalog_contents():
    names = [o.name for o in object_catalog()]
    assert names == ["sphere", "cube", "disk", "apple", "cylinder", "egg", "deburrer"]
    assert get_object("disk").shape.radius == pytest.approx(0.02)
    with pytest.raises(KeyError, match="known objects"):
        get_object("banana")


def test_sphere_inertia():
    s = ObjectSpec("s", Sphere(0.1), 2.0)
    assert s.inertia == pytest.approx((0.008, 0.008, 0.008))


def test_bad_object_rejected():
    with pytest.raises(ConfigError):
        load_config("objects: [{name: x, shape: {type: sphere, radius: 0.01}, mass: -1}]")
    with pytest.raises(ConfigError, match="objects\\[0\\].shape.type"):
        load_config("objects: [{name: x, shape: {type: torus}, mass: 1}]")


def test_simulation_preset_scales_fabric():
    frame, fabric, _ = simulation_preset()
    assert frame.frame_side == 1.0
    assert fabric.fabric_side / frame.frame_side == pytest.approx(0.6 / 0.5)


def test_seeded_rng_streams():
    a = seeded_rng(7, 0).random(5)
    assert np.array_equal(a, seeded_rng(7, 0).random(5))
    assert not np.array_equal(a, seeded_rng(7, 1).random(5))
    assert not np.array_equal(a, seeded_rng(8, 0).random(5))


def test_config_hash_stable_and_sensitive():
    assert config_hash(FrameConfig()) == config_hash(FrameConfig())
    assert config_hash(FrameConfig()) != config_hash(FrameConfig(stroke=0.4))


@settings(max_examples=40, deadline=None)
@given(
    side=st.floats(0.1, 2.0),
    n=st.integers(2, 30),
    density=st.floats(0.01, 1.0),
    k=st.floats(0.0, 1e4),
)
def test_fabric_round_trip_property(side, n, density, k):
    fabric = FabricConfig(fabric_side=side, grid_n=n, areal_density=density, stretch_stiffness=k)
    text = dump_config(FrameConfig(), fabric, SimConfig(), [])
    assert load_config(text)[1] == fabric
    assert math.isclose(fabric.particle_mass * n * n, density * side * side, rel_tol=1e-12)
