"""Scripted experiment runners and the summary statistics derived from their trajectories.

Recorded samples are rounded to nine significant digits, the precision of
the trajectory table, so that a summary recomputed from an exported table
is identical to the one computed at run time.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..actuation import DIAGONAL_RATE, EDGE_RATE, PROTOCOLS, circular_protocol
from ..core import FabricConfig, FrameConfig, ObjectSpec, Regime, SimConfig, config_hash, get_object
from ..world import SimulationDivergence, build_model, world_reset, world_step

__all__ = [
    "TableRow",
    "ExperimentResult",
    "quantiles",
    "summarize",
    "run_dynamics_experiment",
    "run_amplitude_sweep",
    "mean_trajectory",
    "sweep_summary",
]

SATURATION_HOLD = 10.0



def _q9(v: float) -> float:
    return float(f"{float(v):.9g}")


@dataclass(frozen=True)
class TableRow:
    """One trajectory-table row: the exported subset of a simulator sample."""

    t: float
    position: tuple
    orientation: tuple
    heights: tuple
    regime: Regime

    @classmethod
    def from_state(cls, state) -> TableRow:
        b = state.body
        return cls(
            _q9(state.time),
            tuple(_q9(v) for v in b.position),
            tuple(_q9(v) for v in b.orientation),
            tuple(_q9(v) for v in state.bank.heights),
            state.regime,
        )


@dataclass(frozen=True)
class ExperimentResult:
    metadata: dict
    samples: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def check(self) -> None:
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("samples must be strictly increasing in t")
        if summarize(self.samples, self.metadata) != self.summary:
            raise ValueError("summary does not match samples")


def quantiles(values) -> dict:
    """Min, quartiles and max with linear interpolation between closest ranks."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {k: None for k in ("min", "q1", "median", "q3", "max")}
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(x) for x in q)))


def _segments(samples) -> list[dict]:
    out = []
    for s in samples:
        if out and out[-1]["regime"] == s.regime.value:
            out[-1]["end"] = s.t
        else:
            out.append({"regime": s.regime.value, "start": s.t, "end": s.t})
    return out


def summarize(samples, metadata: dict) -> dict:
    """Per-run statistics computed from the samples and the frame size alone."""
    if not samples:
        return {"n_samples": 0, "max_displacement": 0.0, "fall_time": None, "fall_elevation": None,
                "regime_segments": [], "distance_from_center": quantiles([])}
    centre = 0.5 * float(metadata["frame_side"])
    xy = np.array([s.position[:2] for s in samples])
    start = xy[0]
    disp = np.hypot(xy[:, 0] - start[0], xy[:, 1] - start[1])
    dist = np.hypot(xy[:, 0] - centre, xy[:, 1] - centre)
    fall = next((s for s in samples if s.regime is Regime.FALLEN), None)
    keep = dist if fall is None else dist[: samples.index(fall)]
    return {
        "n_samples": len(samples),
        "max_displacement": float(disp.max()),
        "final_position": [float(v) for v in samples[-1].position],
        "fall_time": None if fall is None else float(fall.t),
        "fall_elevation": None if fall is None else float(max(fall.heights)),
        "regime_segments": _segments(samples),
        "distance_from_center": quantiles(keep),
    }


def _configs(frame, fabric, sim):
    return frame or FrameConfig(), fabric or FabricConfig(), sim or SimConfig()


def _resolve(obj, objects) -> ObjectSpec:
    if isinstance(obj, ObjectSpec):
        return obj
    if objects:
        for o in objects:
            if o.name == obj:
                return o
        raise ValueError(f"unknown object {obj!r}; known: {', '.join(o.name for o in objects)}")
    return get_object(obj)


def _simulate(model, spec, frame, fabric, sim, heights_at, t_end: float, meta: dict, stop_on_fall: bool = True):
    centre = np.array([frame.frame_side / 2, frame.frame_side / 2])
    state = world_reset(frame, fabric, sim, spec, centre, initial_height=0.0, model=model)
    rows = [TableRow.from_state(state)]
    n = int(round(t_end * sim.control_hz))
    for k in range(n):
        state = world_step(state, heights_at(state.time))
        rows.append(TableRow.from_state(state))
        if state.fallen and stop_on_fall:
            break
    return ExperimentResult(meta, rows, summarize(rows, meta))


def _base_meta(frame, fabric, sim, spec, seed, **extra):
    return {
        "config_hash": config_hash(frame, fabric, sim, spec),
        "seed": int(seed),
        "object": spec.name,
        "frame_side": frame.frame_side,
        **extra,
    }


def _saturation_time(protocol: str, stroke: float) -> float:
    rate = EDGE_RATE if protocol == "edge" else DIAGONAL_RATE
    return math.ceil(stroke / rate - 1e-9)


def run_dynamics_experiment(
    protocol: str,
    object_name,
    runs: int = 3,
    seed: int = 0,
    frame: FrameConfig | None = None,
    fabric: FabricConfig | None = None,
    sim: SimConfig | None = None,
    objects=None,
) -> list[ExperimentResult]:
    """Edge or diagonal protocol from the centred object with all actuators at zero.

    Each run stops at a fall (which includes leaving the frame) or 10 s
    after the protocol saturates. The protocols are deterministic, so the
    seed is only recorded.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {sorted(PROTOCOLS)}, got {protocol!r}")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    frame, fabric, sim = _configs(frame, fabric, sim)
    spec = _resolve(object_name, objects)
    model = build_model(frame, fabric, sim, spec)
    fn = PROTOCOLS[protocol]
    t_end = _saturation_time(protocol, frame.stroke) + SATURATION_HOLD
    out = []
    for run in range(runs):
        meta = _base_meta(frame, fabric, sim, spec, seed, protocol=protocol, run=run, parameters={"duration_cap": t_end})
        try:
            out.append(_simulate(model, spec, frame, fabric, sim, lambda t: fn(t, frame.stroke), t_end, meta))
        except SimulationDivergence as exc:
            raise SimulationDivergence(f"run {run}: {exc}", exc.step) from exc
    return out


def mean_trajectory(results) -> dict:
    """Mean x and y over runs, truncated to the shortest run."""
    n = min(len(r.samples) for r in results)
    t = [s.t for s in results[0].samples[:n]]
    x = np.mean([[s.position[0] for s in r.samples[:n]] for r in results], axis=0)
    y = np.mean([[s.position[1] for s in r.samples[:n]] for r in results], axis=0)
    return {"t": [float(v) for v in t], "x": [_q9(v) for v in x], "y": [_q9(v) for v in y]}


def default_amplitudes(stroke: float, step: float = 0.05) -> list[float]:
    n = int(math.floor(stroke / 2 / step + 1e-9))
    return [round(step * (k + 1), 10) for k in range(n)]


def run_amplitude_sweep(
    object_name,
    amplitudes=None,
    duration: float = 60.0,
    frequency: float = 0.2,
    phase_step: float = math.pi / 4,
    seed: int = 0,
    frame: FrameConfig | None = None,
    fabric: FabricConfig | None = None,
    sim: SimConfig | None = None,
    objects=None,
    threads: int = 1,
) -> list[ExperimentResult]:
    """One circular-protocol run per amplitude, ordered by amplitude.

    Without ``amplitudes`` the sweep climbs in 5 cm steps and stops after
    the first fall or at stroke/2. An explicit list runs every entry, on
    ``threads`` workers if requested.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    frame, fabric, sim = _configs(frame, fabric, sim)
    spec = _resolve(object_name, objects)
    model = build_model(frame, fabric, sim, spec)

    def one(amp: float) -> ExperimentResult:
        if not 0 < amp <= frame.stroke / 2 + 1e-12:
            raise ValueError(f"amplitude {amp} outside (0, {frame.stroke / 2}]")
        meta = _base_meta(
            frame, fabric, sim, spec, seed, protocol="circular",
            parameters={"amplitude": float(amp), "frequency": float(frequency), "phase_step": float(phase_step), "duration": float(duration)},
            distance_sampling="per control step",
        )
        try:
            return _simulate(
                model, spec, frame, fabric, sim,
                lambda t: circular_protocol(t, amp, frequency, phase_step, frame.stroke), duration, meta,
            )
        except SimulationDivergence as exc:
            raise SimulationDivergence(f"amplitude {amp}: {exc}", exc.step) from exc

    if amplitudes is not None:
        amps = sorted(float(a) for a in amplitudes)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(one, amps))
        return [one(a) for a in amps]
    out = []
    for amp in default_amplitudes(frame.stroke):
        res = one(amp)
        out.append(res)
        if res.summary["fall_time"] is not None:
            break
    return out


def sweep_summary(results) -> dict:
    """Box-plot quantiles per amplitude and the first amplitude that caused a fall."""
    rows = []
    fall_amp = None
    for r in results:
        amp = r.metadata["parameters"]["amplitude"]
        rows.append({"amplitude": amp, "fell": r.summary["fall_time"] is not None, "fall_time": r.summary["fall_time"],
                     "distance_from_center": r.summary["distance_from_center"]})
        if fall_amp is None and r.summary["fall_time"] is not None:
            fall_amp = amp
    return {"amplitudes": rows, "fall_amplitude": fall_amp if fall_amp is not None else "no fall observed"}
