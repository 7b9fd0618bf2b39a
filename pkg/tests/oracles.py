"""Independent reference computations shared by the unit and acceptance tests."""

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import brentq

from softrms.actuation import ActuatorBank
from softrms.cloth import ClothState, SpringSet, build_cloth, integrate_cloth, pin_positions, settle_cloth, spring_forces
from softrms.core import FabricConfig, FrameConfig, SimConfig, get_object
from softrms.rigid import RigidState
from softrms.world import WorldState, build_model, support_depth, surface_height, world_step


def analytic_sag(span: float, length: float) -> float:
    """Midpoint sag of the catenary ``y = a cosh(x/a)`` with the given span and arc length."""
    a = brentq(lambda a: a * math.sinh(span / (2 * a)) - length / 2, 1e-2, 100.0)
    return a * (math.cosh(span / (2 * a)) - 1.0)


def settle_chain(span=0.5, length=0.6, n=61, k=2e4, steps=60000, dt=1e-4):
    """Hanging chain built from the cloth spring and integrator kernels."""
    seg = length / (n - 1)
    pos = np.zeros((n, 3))
    pos[:, 0] = np.linspace(0.0, span, n)
    a = np.arange(n - 1)
    springs = SpringSet(a, a + 1, np.full(n - 1, seg), np.full(n - 1, k), np.zeros(n - 1, dtype=np.int8))
    state = ClothState(pos, np.zeros((n, 3)), np.array([0, n - 1, 0, n - 1]), 0.09 * length / n, n)
    pins = np.array([[0, 0, 0], [span, 0, 0], [0, 0, 0], [span, 0, 0]], dtype=float)
    for _ in range(steps):
        f = spring_forces(state, springs, 0.5) - 0.02 * state.velocities
        state = integrate_cloth(state, f, dt, pins)
    return state


def incline_acceleration(angle_deg: float = 15.0, duration: float = 0.3) -> tuple[float, float]:
    """Sphere released on a taut, stiff fabric incline.

    Returns ``(measured, expected)`` centre acceleration along the slope;
    ``measured`` is twice the leading coefficient of a quadratic fit to the
    downslope displacement, skipping the first contact transient.
    """
    th = math.radians(angle_deg)
    frame = FrameConfig(frame_side=0.5)
    # a taut square of fabric with all stiffnesses raised 100x
    fabric = FabricConfig(fabric_side=0.5, grid_n=13, stretch_stiffness=2e4, shear_stiffness=5e3,
                          bend_stiffness=500.0, damping=0.5, air_drag=0.0)
    sim = SimConfig(physics_dt=1 / 48000, contact_stiffness=1e4)
    spec = get_object("sphere")
    model = build_model(frame, fabric, sim, spec)
    rise = frame.frame_side * math.tan(th)
    heights = np.array([0.0, rise, rise, 0.0])
    cloth, _ = build_cloth(fabric, frame)
    cloth.positions[:, 2] = cloth.positions[:, 0] * math.tan(th)
    cloth = settle_cloth(cloth, model.springs, fabric, sim, pin_positions(frame.corner_xy, heights))
    xy = np.array([0.3, 0.25])
    q = spec.resting_orientation()
    z = surface_height(cloth, xy, spec.shape.bounding_radius) + support_depth(spec, q) + sim.contact_skin
    body = RigidState(spec, np.array([xy[0], xy[1], z]), q)
    bank = replace(ActuatorBank.level(frame, 0.0), heights=heights.copy(), targets=heights.copy())
    state = WorldState(model, 0.0, 0, cloth, body, bank, anchors=np.zeros((model.n_samples, 3)))
    down = np.array([-math.cos(th), 0.0, -math.sin(th)])
    p0 = state.body.position.copy()
    ts, ss = [], []
    for _ in range(int(round(duration * sim.control_hz))):
        state = world_step(state, heights)
        ts.append(state.time)
        ss.append(float((state.body.position - p0) @ down))
    coef = np.polyfit(ts[3:], ss[3:], 2)
    return 2.0 * coef[0], 5.0 / 7.0 * sim.gravity * math.sin(th)


def synthetic_batch(params, ratios, seed=0):
    """Rollout batch on random observations whose probability ratios equal ``ratios``."""
    from softrms.learn.policy import gaussian_log_prob, mlp_forward
    from softrms.learn.ppo import RolloutBatch

    rng = np.random.default_rng(seed)
    n = len(ratios)
    obs = rng.normal(size=(n, params.obs_dim))
    mean, _ = mlp_forward(params.pi, obs)
    u = mean + np.exp(params.log_std) * rng.normal(size=mean.shape)
    logp = gaussian_log_prob(u, mean, params.log_std)
    adv = rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 2.0, n)
    return RolloutBatch(obs, u, logp - np.log(ratios), adv, rng.normal(size=n), np.zeros(n))


def gradient_error(params, batch, h=1e-5, **coefs) -> float:
    """Largest relative gap between the analytic loss gradient and central differences."""
    from softrms.learn.ppo import ppo_loss_and_grad

    _, grads = ppo_loss_and_grad(params, batch, **coefs)[:2]
    theta, g = params.flat(), grads.flat()
    num = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        num[i] = (ppo_loss_and_grad(params.unflatten(theta + e), batch, **coefs)[0]
                  - ppo_loss_and_grad(params.unflatten(theta - e), batch, **coefs)[0]) / (2 * h)
    # an absolute floor keeps exactly-zero components from dividing by zero
    return float(np.max(np.abs(g - num) / (np.maximum(np.abs(num), np.abs(g)) + 1e-6)))
