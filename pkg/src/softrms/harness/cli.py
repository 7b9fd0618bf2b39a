"""Command-line entry point; the only place that touches the filesystem.

Exit codes: 0 success, 1 validation or usage error, 2 simulation or
training divergence.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import click
import numpy as np

from ..core import ConfigError, FabricConfig, FrameConfig, SimConfig, load_config, simulation_preset
from ..learn.ppo import TrainingDivergence
from ..learn.train import TrainConfig, checkpoint_bytes, env_hash, format_log, load_checkpoint_bytes, make_env, train
from ..world import SimulationDivergence
from .export import grid_document, parse_trajectory_table, summary_document, trajectory_table, write_text
from .grid import eval_success_grid, region_mean
from .runners import mean_trajectory, run_amplitude_sweep, run_dynamics_experiment, sweep_summary

__all__ = ["cli", "main", "OUT_DIR_ENV"]

OUT_DIR_ENV = "SOFTRMS_OUT_DIR"


class _Ctx:
    def __init__(self, config_path, seed, out_dir):
        self.config_path = config_path
        self.seed = seed
        self.out_dir = Path(out_dir)
        self._loaded = None

    def loaded(self):
        if self._loaded is None and self.config_path:
            try:
                text = Path(self.config_path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config {self.config_path}: {exc.strerror or exc}") from None
            self._loaded = load_config(text)
        return self._loaded

    def hardware(self):
        """Configs for the scripted experiments: the file, else the hardware defaults."""
        got = self.loaded()
        if got is None:
            return FrameConfig(), FabricConfig(), SimConfig(), None
        return got

    def training(self):
        """Configs for learning: the file, else the 1 m simulation preset."""
        got = self.loaded()
        return got[:3] if got is not None else simulation_preset()

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name


def _seed(ctx: _Ctx, local):
    return ctx.seed if local is None else local


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML configuration document.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), envvar=OUT_DIR_ENV, default=".", show_default=True,
              help=f"Output directory (default from ${OUT_DIR_ENV}).")
@click.pass_context
def cli(ctx, config_path, seed, out_dir):
    """Soft-fabric manipulation surface: experiments, training and evaluation."""
    ctx.obj = _Ctx(config_path, seed, out_dir)


@cli.group()
def experiment():
    """Scripted protocol experiments."""


@experiment.command("dynamics")
@click.option("--protocol", type=click.Choice(["edge", "diagonal"]), required=True)
@click.option("--object", "obj", required=True)
@click.option("--runs", type=click.IntRange(min=1), default=3, show_default=True)
@click.pass_obj
def dynamics_cmd(ctx: _Ctx, protocol, obj, runs):
    """Edge or diagonal tilt protocol; writes one table per run and a summary."""
    frame, fabric, sim, objects = ctx.hardware()
    results = run_dynamics_experiment(protocol, obj, runs, ctx.seed, frame, fabric, sim, objects)
    stem = f"dynamics_{protocol}_{obj}"
    for i, r in enumerate(results):
        write_text(ctx.path(f"{stem}_run{i}.csv"), trajectory_table(r))
    meta = {k: v for k, v in results[0].metadata.items() if k != "run"}
    body = {"runs": [r.summary for r in results], "mean_trajectory": mean_trajectory(results)}
    write_text(ctx.path(f"{stem}_summary.yaml"), summary_document("dynamics", meta, body))
    fall = results[0].summary["fall_elevation"]
    click.echo(f"{obj}: {len(results)} runs, fall elevation {fall if fall is not None else 'none'}")


@experiment.command("sweep")
@click.option("--object", "obj", required=True)
@click.option("--frequency", type=float, default=0.2, show_default=True)
@click.option("--phase-step", type=float, default=math.pi / 4, show_default=True)
@click.option("--duration", type=float, default=60.0, show_default=True)
@click.option("--amplitudes", default=None, help="Comma-separated list (m); default climbs 0.05 steps until a fall.")
@click.option("--threads", type=click.IntRange(min=1), default=1)
@click.pass_obj
def sweep_cmd(ctx: _Ctx, obj, frequency, phase_step, duration, amplitudes, threads):
    """Circular protocol amplitude sweep."""
    frame, fabric, sim, objects = ctx.hardware()
    amps = None
    if amplitudes:
        try:
            amps = [float(a) for a in amplitudes.split(",")]
        except ValueError:
            raise click.BadParameter(f"not a comma-separated list of numbers: {amplitudes}", param_hint="--amplitudes") from None
    results = run_amplitude_sweep(obj, amps, duration, frequency, phase_step, ctx.seed, frame, fabric, sim, objects, threads)
    for r in results:
        write_text(ctx.path(f"sweep_{obj}_a{r.metadata['parameters']['amplitude']:.3f}.csv"), trajectory_table(r))
    meta = {k: v for k, v in results[0].metadata.items() if k != "parameters"}
    meta["parameters"] = {k: v for k, v in results[0].metadata["parameters"].items() if k != "amplitude"}
    summary = sweep_summary(results)
    write_text(ctx.path(f"sweep_{obj}_summary.yaml"), summary_document("sweep", meta, summary))
    click.echo(f"{obj}: fall amplitude {summary['fall_amplitude']}")


@cli.command("train")
@click.option("--steps", type=click.IntRange(min=0), default=300_000, show_default=True)
@click.option("--seed", "local_seed", type=int, default=None)
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None, help="Checkpoint path (default OUT_DIR/policy.npz).")
@click.option("--n-envs", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--rollout-len", type=click.IntRange(min=1), default=512, show_default=True)
@click.option("--env", "env_kind", type=click.Choice(["surface", "toy"]), default="surface", show_default=True)
@click.option("--threads", type=click.IntRange(min=1), default=1)
@click.pass_obj
def train_cmd(ctx: _Ctx, steps, local_seed, out, n_envs, rollout_len, env_kind, threads):
    """PPO training; writes the checkpoint and a plain-text training log."""
    seed = _seed(ctx, local_seed)
    frame, fabric, sim = ctx.training()
    cfg = TrainConfig(total_steps=steps, n_envs=n_envs, rollout_len=rollout_len, env=env_kind)
    digest = env_hash(cfg, frame, fabric, sim)
    ckpt = Path(out) if out else ctx.path("policy.npz")
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    log_path = ckpt.with_suffix(".log.txt")
    extra = {"seed": seed, "env": env_kind}

    def save(params, rows):
        ckpt.write_bytes(checkpoint_bytes(params, digest, {**extra, "steps": rows[-1]["steps"] if rows else 0}))
        write_text(log_path, format_log(rows))

    rows: list = []

    def callback(it, params, row):
        rows.append(row)
        click.echo(f"iter {it:4d} steps {row['steps']:7d} return {row['mean_return']:9.3f} success {row['success_rate']:.2f} fall {row['fall_rate']:.2f}")
        if it % cfg.checkpoint_every == 0:
            save(params, rows)

    params, log = train(cfg, seed, threads, env_factory=lambda i: make_env(cfg, frame=frame, fabric=fabric, sim=sim), callback=callback)
    save(params, log)
    click.echo(f"checkpoint {ckpt}")


@cli.command("eval-grid")
@click.option("--policy", "policy", required=True, help="Checkpoint path or 'greedy'.")
@click.option("--repeats", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--grid-n", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--threads", type=click.IntRange(min=1), default=1)
@click.pass_obj
def eval_grid_cmd(ctx: _Ctx, policy, repeats, grid_n, threads):
    """Success rate per sub-region of the frame."""
    frame, fabric, sim = ctx.training()
    cfg = TrainConfig()
    digest = env_hash(cfg, frame, fabric, sim)
    if policy == "greedy":
        controller, name = "greedy", "greedy"
    else:
        try:
            blob = Path(policy).read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read checkpoint {policy}: {exc.strerror or exc}") from None
        controller, _ = load_checkpoint_bytes(blob, expected_hash=digest)
        name = Path(policy).stem
    env = make_env(cfg, frame=frame, fabric=fabric, sim=sim)
    grid = eval_success_grid(controller, repeats, ctx.seed, grid_n, env=env, threads=threads)
    meta = {"config_hash": digest, "seed": ctx.seed, "policy": name, "frame_side": frame.frame_side}
    write_text(ctx.path(f"grid_{name}.yaml"), grid_document(grid, meta))
    msg = f"{name}: mean success {np.mean(grid.mean_success):.3f}"
    if grid_n >= 4:
        msg += f", central {region_mean(grid, 'central'):.3f}, corner {region_mean(grid, 'corner'):.3f}"
    click.echo(msg)


@cli.command("replay")
@click.option("--trajectory", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
def replay_cmd(ctx: _Ctx, trajectory):
    """Recompute a run summary from a trajectory table."""
    try:
        text = Path(trajectory).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {trajectory}: {exc.strerror or exc}") from None
    result = parse_trajectory_table(text)
    doc = summary_document("replay", result.metadata, {"summary": result.summary})
    write_text(ctx.path(Path(trajectory).stem + "_replay.yaml"), doc)
    click.echo(doc, nl=False)


def main(argv=None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    args = sys.argv[1:] if argv is None else list(argv)
    try:
        cli.main(args=args, prog_name="softrms", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except (SimulationDivergence, TrainingDivergence) as exc:
        click.echo(f"error: divergence: {exc}", err=True)
        return 2
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        click.echo(f"error: {msg}", err=True)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
