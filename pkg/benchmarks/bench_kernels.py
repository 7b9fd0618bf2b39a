"""Compare the compiled kernels with the numpy fallback.

Times control steps of the full world (cloth, contact and rigid body) and
the isolated spring-force kernel, once per backend:

    python3 benchmarks/bench_kernels.py --steps 60
"""

import argparse
import time

import numpy as np

from softrms import _kernels_py, rigid, world
from softrms.cloth import build_cloth
from softrms.core import FabricConfig, FrameConfig, SimConfig, get_object

try:
    from softrms import _kernels
except ImportError:  # extension not built
    _kernels = None


def per_call(fn, repeats: int) -> float:
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_world(kernels, state, steps: int) -> float:
    world.kernels = rigid.kernels = kernels
    action = np.array([0.0, 0.05, 0.05, 0.0])

    def run():
        s = state
        for _ in range(steps):
            s = world.world_step(s, action)

    return per_call(run, 1) / steps


def bench_springs(kernels, repeats: int) -> float:
    cloth, springs = build_cloth(FabricConfig(), FrameConfig())
    out = np.zeros_like(cloth.positions)
    args = (cloth.positions, cloth.velocities, springs.a, springs.b, springs.rest_length, springs.stiffness, 0.05, out)
    return per_call(lambda: kernels.spring_forces(*args), repeats)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=60, help="control steps per backend for the world benchmark")
    ap.add_argument("--repeats", type=int, default=200, help="calls per backend for the spring benchmark")
    args = ap.parse_args()

    backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels is not None else [])
    frame, fabric, sim = FrameConfig(), FabricConfig(), SimConfig()
    state = world.world_reset(frame, fabric, sim, get_object("sphere"), [0.25, 0.25], initial_height=0.0)
    original = world.kernels

    rows = []
    try:
        for name, k in backends:
            rows.append((name, bench_world(k, state, args.steps), bench_springs(k, args.repeats)))
    finally:
        world.kernels = rigid.kernels = original

    print(f"{'backend':<8} {'control step':>14} {'real-time factor':>17} {'spring forces':>14}")
    for name, step, spring in rows:
        rtf = (1.0 / sim.control_hz) / step
        print(f"{name:<8} {step * 1e3:>11.2f} ms {rtf:>16.2f}x {spring * 1e6:>11.1f} us")
    if len(rows) == 2:
        print(f"speed-up: {rows[0][1] / rows[1][1]:.0f}x per control step, {rows[0][2] / rows[1][2]:.1f}x spring kernel")
    else:
        print("compiled extension not available; only the fallback was timed")


if __name__ == "__main__":
    main()
