"""Success-grid evaluation of a policy or the greedy baseline."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core import seeded_rng
from ..learn.env import SurfaceEnv, greedy_action
from ..learn.policy import PolicyParams, policy_act

__all__ = ["SuccessGrid", "eval_success_grid", "make_controller", "region_mean"]

_GRID_STREAM = 30_000


@dataclass(frozen=True)
class SuccessGrid:
    """Row-major cells: cell ``c = iy * grid_n_sub + ix`` spans ``[ix, ix+1) x [iy, iy+1)`` times the cell size."""

    grid_n_sub: int
    repeats: int
    mean_success: list
    records: list = field(default_factory=list)

    def successes(self) -> list[int]:
        out = [0] * (self.grid_n_sub**2)
        for r in self.records:
            out[r["cell"]] += int(r["success"])
        return out


def make_controller(policy):
    """``policy`` is ``"greedy"``, a :class:`PolicyParams`, or ``callable(env, episode, obs) -> action``."""
    if isinstance(policy, str):
        if policy != "greedy":
            raise ValueError(f"unknown controller {policy!r}")
        return lambda env, ep, obs: greedy_action(env, ep)
    if isinstance(policy, PolicyParams):
        return lambda env, ep, obs: policy_act(policy, obs.as_array(), deterministic=True)[0]
    if callable(policy):
        return policy
    raise TypeError("policy must be 'greedy', PolicyParams or a callable")


def _episode(env, controller, cell: int, repeat: int, seed: int, n: int):
    rng = seeded_rng(seed, _GRID_STREAM + cell * 1000 + repeat)
    side = env.frame.frame_side
    size = side / n
    ix, iy = cell % n, cell // n
    target = np.array([(ix + rng.uniform()) * size, (iy + rng.uniform()) * size])
    ep_seed = int(rng.integers(2**62))
    obs, ep = env.reset(ep_seed, target)
    while not ep.done:
        obs, _, _, info = env.step(ep, controller(env, ep, obs))
    return {
        "cell": cell,
        "repeat": repeat,
        "episode_seed": ep_seed,
        "target": [float(v) for v in target],
        "success": ep.outcome == "success",
        "outcome": ep.outcome,
        "steps": ep.steps,
        "final_distance": float(info["distance"]),
    }


def eval_success_grid(policy, repeats: int = 10, seed: int = 0, grid_n_sub: int = 10, env=None, cells=None, threads: int = 1) -> SuccessGrid:
    """Run ``repeats`` episodes per cell with targets drawn inside the cell.

    ``cells`` restricts evaluation to a subset (others report 0 with no
    records). Episode seeds depend only on ``(seed, cell, repeat)``, so a
    subset evaluation reproduces the corresponding full-grid episodes.
    """
    if repeats < 1 or grid_n_sub < 1:
        raise ValueError("repeats and grid_n_sub must be >= 1")
    env = env or SurfaceEnv()
    controller = make_controller(policy)
    cells = sorted(range(grid_n_sub**2) if cells is None else set(cells))
    jobs = [(c, r) for c in cells for r in range(repeats)]

    def run(job):
        return _episode(env, controller, job[0], job[1], seed, grid_n_sub)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(j) for j in jobs]
    counts = [0] * (grid_n_sub**2)
    for r in records:
        counts[r["cell"]] += int(r["success"])
    mean = [c / repeats for c in counts]
    return SuccessGrid(grid_n_sub, repeats, mean, records)


def region_mean(grid: SuccessGrid, region: str) -> float:
    """Mean success over ``central`` (middle 4x4), ``corner`` (2x2 blocks at each corner) or ``edge`` (outer ring)."""
    n = grid.grid_n_sub
    lo, hi = (n - 4) // 2, (n - 4) // 2 + 4
    if region == "central":
        cells = [iy * n + ix for iy in range(lo, hi) for ix in range(lo, hi)]
    elif region == "corner":
        idx = [0, 1, n - 2, n - 1]
        cells = [iy * n + ix for iy in idx for ix in idx]
    elif region == "edge":
        cells = [iy * n + ix for iy in range(n) for ix in range(n) if ix in (0, n - 1) or iy in (0, n - 1)]
    else:
        raise ValueError(f"unknown region {region!r}")
    return float(np.mean([grid.mean_success[c] for c in cells]))
