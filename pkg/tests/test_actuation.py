import math

import numpy as np
import pytest

from softrms.actuation import (
    ActuatorBank,
    circular_protocol,
    diagonal_protocol,
    edge_protocol,
    greedy_tilt_controller,
    servo_step,
)
from softrms.core import FrameConfig


@pytest.mark.parametrize("k", range(0, 60, 7))
def test_edge_protocol_integer_seconds(k):
    h = edge_protocol(float(k))
    e = min(0.01 * k, 0.5)
    assert np.allclose(h, [0.0, e, e, 0.0])
    # held until the next whole second
    assert np.allclose(edge_protocol(k + 0.999), h)


@pytest.mark.parametrize("k", range(0, 60, 7))
def test_diagonal_protocol_integer_seconds(k):
    assert np.allclose(diagonal_protocol(float(k)), [0.0, 0.005 * k, min(0.01 * k, 0.5), 0.005 * k])


def test_protocols_saturate_at_stroke():
    assert np.allclose(edge_protocol(1000.0, 0.5), [0, 0.5, 0.5, 0])
    assert diagonal_protocol(1000.0, 0.5).max() == 0.5
    with pytest.raises(ValueError):
        edge_protocol(-1.0)


def test_circular_bounds_and_phase():
    amp, f = 0.1, 0.2
    ts = np.linspace(0, 10, 2001)
    hs = np.array([circular_protocol(t, amp, f) for t in ts])
    assert hs.min() >= 0.0 and hs.max() <= 2 * amp + 1e-15
    # actuator i peaks (pi/4)/(2 pi f) seconds after actuator i-1
    lag = (math.pi / 4) / (2 * math.pi * f)
    peaks = [ts[np.argmax(hs[: len(ts) // 2, i])] for i in range(4)]
    assert np.allclose(np.diff(peaks), lag, atol=ts[1] - ts[0])
    assert np.allclose(circular_protocol(0.0, amp, f), amp * (1 + np.sin(-np.arange(4) * math.pi / 4)))


def test_circular_rejects_bad_amplitude():
    with pytest.raises(ValueError):
        circular_protocol(0.0, 0.3, stroke=0.5)
    with pytest.raises(ValueError):
        circular_protocol(0.0, 0.0)


def test_servo_rate_limit():
    frame = FrameConfig()
    bank = ActuatorBank.level(frame, 0.0).with_targets([0.5, 0.0, 0.25, 1e-4])
    dt = 1 / 60
    step = frame.max_speed * dt
    out = servo_step(bank, dt)
    assert out.heights[0] == pytest.approx(step)
    assert out.heights[1] == 0.0
    assert out.heights[3] == pytest.approx(min(1e-4, step))
    for _ in range(int(0.5 / step) + 2):
        out = servo_step(out, dt)
    assert np.allclose(out.heights, [0.5, 0.0, 0.25, 1e-4])


def test_servo_targets_clipped_to_stroke():
    frame = FrameConfig()
    bank = ActuatorBank.level(frame, 0.49).with_targets([2.0, -1.0, 0.3, 0.3])
    assert bank.targets.max() == frame.stroke and bank.targets.min() == 0.0
    with pytest.raises(ValueError):
        servo_step(bank, 0.0)


def test_greedy_lifts_corners_behind_object():
    frame = FrameConfig()
    c = [0.25, 0.25]
    h = greedy_tilt_controller(c, [0.45, 0.25], frame)
    # target at +x: the x = 0 corners (0 and 3) rise
    assert h[0] == pytest.approx(h[3]) and h[1] == pytest.approx(h[2])
    assert h[0] > h[1]
    d = greedy_tilt_controller(c, [0.45, 0.45], frame)
    assert np.argmax(d) == 0 and d[2] == d.min()
    assert np.allclose(greedy_tilt_controller(c, c, frame), 0.05)
    assert greedy_tilt_controller([0.0, 0.0], [0.5, 0.5], frame).max() <= frame.stroke
