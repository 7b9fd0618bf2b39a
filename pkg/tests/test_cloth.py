
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softrms.cloth import (
    ClothState,
    SpringKind,
    build_cloth,
    check_stability,
    cloth_energy,
    integrate_cloth,
    pin_positions,
    settle_cloth,
    spring_forces,
    stability_index,
)
from softrms.core import ConfigError, FabricConfig, FrameConfig, SimConfig
from softrms.world import cloth_only_steps

from oracles import analytic_sag, settle_chain


def test_build_default_grid():
    cloth, springs = build_cloth(FabricConfig(), FrameConfig())
    assert cloth.positions.shape == (169, 3)
    assert cloth.particle_mass == pytest.approx(3.195e-4, rel=1e-3)
    assert list(cloth.pinned) == [0, 12, 168, 156]
    assert np.allclose(cloth.positions[cloth.pinned, :2], FrameConfig().corner_xy)
    assert springs.count(SpringKind.STRETCH) == 2 * 13 * 12
    assert springs.count(SpringKind.SHEAR) == 2 * 12 * 12
    assert springs.count(SpringKind.BEND) == 2 * 13 * 11
    stretch = springs.rest_length[springs.kind == SpringKind.STRETCH]
    assert np.allclose(stretch, 0.05)


def test_smallest_grid():
    cloth, springs = build_cloth(FabricConfig(grid_n=2), FrameConfig())
    assert cloth.n_particles == 4
    assert set(cloth.pinned) == {0, 1, 2, 3}
    assert (springs.count(SpringKind.STRETCH), springs.count(SpringKind.SHEAR), springs.count(SpringKind.BEND)) == (4, 2, 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), damping=st.floats(0.0, 1.0))
def test_internal_forces_sum_to_zero(seed, damping):
    rng = np.random.default_rng(seed)
    cloth, springs = build_cloth(FabricConfig(grid_n=7), FrameConfig())
    cloth = ClothState(
        cloth.positions + 0.01 * rng.standard_normal(cloth.positions.shape),
        rng.standard_normal(cloth.positions.shape),
        cloth.pinned,
        cloth.particle_mass,
        cloth.grid_n,
    )
    f = spring_forces(cloth, springs, damping)
    total = np.abs(f).sum()
    assert np.abs(f.sum(axis=0)).max() <= 1e-9 * max(total, 1e-300)


def test_catenary_oracle():
    state = settle_chain()
    sag = -state.positions[30, 2]
    assert sag == pytest.approx(analytic_sag(0.5, 0.6), rel=0.05)


def test_energy_non_increasing_without_actuation():
    frame, fabric, sim = FrameConfig(), FabricConfig(), SimConfig()
    cloth, springs = build_cloth(fabric, frame)
    pins = pin_positions(frame.corner_xy, np.zeros(4))
    drag = fabric.air_drag * fabric.fabric_side**2 / fabric.grid_n**2
    prev = sum(cloth_energy(cloth, springs, sim.gravity))
    for _ in range(2000):
        cloth_only_steps(cloth, springs, fabric, sim, pins, 1, drag)
        e = sum(cloth_energy(cloth, springs, sim.gravity))
        assert e <= prev + 1e-6
        prev = e


def test_settled_sag_in_band_and_grid_converged():
    frame = FrameConfig()
    pins = pin_positions(frame.corner_xy, np.zeros(4))
    sags = []
    for n, dt in ((13, 1 / 2400), (25, 1 / 9600)):
        fabric, sim = FabricConfig(grid_n=n), SimConfig(physics_dt=dt)
        cloth, springs = build_cloth(fabric, frame)
        settled = settle_cloth(cloth, springs, fabric, sim, pins)
        sags.append(-settled.positions[:, 2].min())
    assert 0.10 <= sags[0] <= 0.20
    assert abs(sags[1] - sags[0]) / sags[0] < 0.05


def test_pins_follow_targets_with_finite_difference_velocity():
    frame, fabric = FrameConfig(), FabricConfig(grid_n=5)
    cloth, springs = build_cloth(fabric, frame)
    targets = pin_positions(frame.corner_xy, [0.0, 0.01, 0.02, 0.0])
    new = integrate_cloth(cloth, np.zeros_like(cloth.positions), 0.01, targets)
    assert np.allclose(new.positions[new.pinned], targets)
    assert np.allclose(new.velocities[new.pinned][:, 2], [0.0, 1.0, 2.0, 0.0])


def test_stability_check():
    fabric = FabricConfig()
    assert stability_index(fabric, SimConfig()) < 3.6
    with pytest.raises(ConfigError, match="unstable"):
        check_stability(fabric, SimConfig(physics_dt=1 / 600))


def test_integrate_rejects_bad_input():
    cloth, _ = build_cloth(FabricConfig(grid_n=3), FrameConfig())
    pins = pin_positions(FrameConfig().corner_xy, np.zeros(4))
    with pytest.raises(ValueError):
        integrate_cloth(cloth, np.zeros_like(cloth.positions), 0.0, pins)
    bad = np.zeros_like(cloth.positions)
    bad[4, 0] = np.nan
    with pytest.raises(FloatingPointError):
        integrate_cloth(cloth, bad, 1e-3, pins)
