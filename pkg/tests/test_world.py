import numpy as np
import pytest

from softrms.core import Regime, RegimeThresholds, get_object, simulation_preset
from softrms.world import (
    MotionSample,
    SimulationDivergence,
    build_model,
    classify_motion,
    world_reset,
    world_step,
)

TH = RegimeThresholds()


@pytest.fixture(scope="module")
def setup():
    frame, fabric, sim = simulation_preset()
    spec = get_object("sphere")
    model = build_model(frame, fabric, sim, spec)
    state = world_reset(frame, fabric, sim, spec, [0.5, 0.5], model=model)
    return frame, fabric, sim, spec, model, state


def window(v, carry, slip, contact=True, n=15, dt=1 / 60):
    return [MotionSample(k * dt, np.array(v, float), np.zeros(3), carry, slip, contact) for k in range(1, n + 1)]


def test_classifier_synthetic_windows():
    assert classify_motion(window([0, 0, 0], 0, 0), TH) is Regime.STATIONARY
    assert classify_motion(window([0.05, 0, 0], 0.001, 0.001), TH) is Regime.PULLING
    assert classify_motion(window([0.05, 0, 0], 0.05, 0.001), TH) is Regime.ROLLING
    assert classify_motion(window([0.05, 0, 0], 0.05, 0.04), TH) is Regime.SLIDING
    assert classify_motion(window([0.05, 0, 0], 0, 0, contact=False), TH) is Regime.SLIDING
    with pytest.raises(ValueError):
        classify_motion(window([0, 0, 0], 0, 0, n=3), TH)


def test_rolling_kinematics_have_no_slip():
    r = 0.02
    v = np.array([0.1, 0, 0])
    w = np.array([0, v[0] / r, 0])
    s = MotionSample.from_kinematics(0.0, v, w, np.zeros(3), [0, 0, -r])
    assert s.carry_speed == pytest.approx(0.1)
    assert s.slip_speed == pytest.approx(0.0, abs=1e-15)


def test_reset_rests_on_fabric(setup):
    frame, *_, spec, model, state = setup
    assert state.time == 0.0 and state.step == 0
    assert not state.fallen and state.regime is Regime.STATIONARY
    assert state.contact_count > 0
    assert np.linalg.norm(state.body.linear_velocity) < 5e-3
    assert np.allclose(state.bank.heights, frame.stroke / 2)


def test_reset_validates_placement(setup):
    frame, fabric, sim, spec, model, _ = setup
    with pytest.raises(ValueError):
        world_reset(frame, fabric, sim, spec, [2.0, 0.5], model=model)
    with pytest.raises(ValueError):
        world_reset(frame, fabric, sim, spec, [0.5, 0.5], initial_height=5.0, model=model)


def test_step_advances_time_and_servos(setup):
    frame, *_, model, state = setup
    s = world_step(state, [frame.stroke] * 4)
    assert s.step == 1 and s.time == pytest.approx(model.control_dt)
    assert np.allclose(s.bank.heights, frame.stroke / 2 + frame.max_speed * model.control_dt)
    assert state.step == 0  # input untouched
    with pytest.raises(ValueError):
        world_step(state, [0.0, 0.0, np.nan, 0.0])


def test_step_is_deterministic(setup):
    *_, state = setup
    a = b = state
    for _ in range(30):
        a = world_step(a, [0.2, 0.3, 0.25, 0.25])
        b = world_step(b, [0.2, 0.3, 0.25, 0.25])
    assert np.array_equal(a.body.as_array(), b.body.as_array())
    assert np.array_equal(a.cloth.positions, b.cloth.positions)


def test_fall_when_frame_left(setup):
    *_, state = setup
    from dataclasses import replace

    body = replace(state.body, position=np.array([5.0, 0.5, 0.3]))
    s = world_step(replace(state, body=body), state.bank.heights)
    assert s.fallen and s.regime is Regime.FALLEN and s.regime_since == s.time
    s2 = world_step(s, state.bank.heights)
    assert s2.regime is Regime.FALLEN and s2.regime_since == s.time


def test_divergence_raises(setup):
    *_, state = setup
    from dataclasses import replace

    pos = state.cloth.positions.copy()
    pos[5, 2] = np.nan
    bad = replace(state, cloth=replace(state.cloth, positions=pos))
    with pytest.raises(SimulationDivergence) as err:
        world_step(bad, state.bank.heights)
    assert err.value.step >= 1
