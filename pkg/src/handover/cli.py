"""Command-line entry points: train, bench, simulate, report."""

from __future__ import annotations

import json
import sys
import time

import click
import numpy as np

from .bench import load_config, run_benchmark, summary_table, write_outputs
from .scene import (
    AugmentationConfig,
    MotionScript,
    NoiseConfig,
    make_archetypes,
    make_training_slice,
    script_from_json,
)
from .sim import run_trial
from .tracker import TrackerConfig, TrainConfig, save_weights, train


@click.group()
def main():
    """Deterministic handover simulation and benchmarking."""


@main.command("train")
@click.option("--epochs", default=10, show_default=True, type=int)
@click.option("--lr", default=3e-4, show_default=True, type=float)
@click.option("--batch", default=4, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--slices", "n_slices", default=2000, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def train_cmd(epochs, lr, batch, seed, n_slices, out):
    """Train the grasp association tracker on synthetic slices."""
    cats = make_archetypes()
    noise = NoiseConfig(seed=seed + 11)
    aug = AugmentationConfig()
    t0 = time.time()
    click.echo(f"generating {n_slices} training slices ...")
    slices = [
        make_training_slice(cats[i % len(cats)], noise, aug, seed=seed * 1_000_000 + i)
        for i in range(n_slices)
    ]
    cfg = TrackerConfig()
    tc = TrainConfig(learning_rate=lr, epochs=epochs, batch_size=batch, seed=seed)
    click.echo(f"training {epochs} epochs ...")
    weights = train(slices, cfg, tc, log_every=1)
    save_weights(out, weights)
    click.echo(f"saved weights to {out} ({time.time() - t0:.0f}s total)")


@main.command("bench")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--mode", type=click.Choice(["learned", "baseline", "oracle"]), default=None)
@click.option("--prediction", type=click.Choice(["on", "off"]), default=None)
@click.option("--seed", type=int, default=None, help="Replace the seed list with [seed..seed+49].")
def bench_cmd(config_path, out_dir, mode, prediction, seed):
    """Run a benchmark protocol and write result files."""
    cfg = load_config(config_path)
    if mode is not None:
        cfg.tracker_mode = mode
        if mode == "learned" and cfg.weights_path is None:
            raise click.UsageError("learned mode needs a weights path in the config")
    if prediction is not None:
        cfg.prediction = prediction == "on"
    if seed is not None:
        cfg.seeds = list(range(seed, seed + 50))
    report = run_benchmark(cfg)
    write_outputs(report, out_dir)
    click.echo(summary_table(report), nl=False)


@main.command("simulate")
@click.option("--script", "script_path", required=True, type=click.Path(exists=True))
@click.option("--ui", is_flag=True, help="Serve the live teleoperation bridge.")
@click.option("--port", default=8790, show_default=True, type=int)
@click.option("--object", "object_id", default="box_dense", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
def simulate_cmd(script_path, ui, port, object_id, seed):
    """Run one scripted trial, or serve it interactively with --ui."""
    with open(script_path) as f:
        script = script_from_json(json.load(f))
    if ui:
        from .bridge import serve_session

        serve_session(object_id=object_id, script=script, port=port, seed=seed)
        return
    from .scene import get_object

    log = run_trial(get_object(object_id), script, NoiseConfig(seed=seed), seed=seed)
    for line in log.events:
        click.echo(line)
    r = log.result
    click.echo(
        f"# success={r.success} approach={r.approach_time:.3f}s ticks={r.ticks}",
        err=True,
    )


@main.command("report")
@click.option("--out", "out_dir", required=True, type=click.Path(exists=True, file_okay=False))
def report_cmd(out_dir):
    """Render figures from a benchmark output directory."""
    from .report import render_report

    for p in render_report(out_dir):
        click.echo(p)


if __name__ == "__main__":
    sys.exit(main())
