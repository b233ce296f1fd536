"""Benchmark protocols: one-motion handover cells (object x motion pattern,
repeat until a success quota) and motion-continuous handover with paired seeds
across tracker modes.  All outputs are seeded and byte-deterministic."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .fsm import FsmConfig, GraspTolerances, RobotLimits
from .predictor import PredictorParams
from .scene import MotionScript, NoiseConfig, get_object, make_archetypes
from .sim import TrialLog, TrialResult, run_trial
from .tracker import TrackerConfig, load_weights

ONE_MOTION_PATTERNS = ("rotation", "translation")
MAX_ROTATION_DEG = 60.0
MAX_TRANSLATION_M = 0.20


@dataclass
class ExperimentConfig:
    protocol: str  # one_motion | motion_continuous
    objects: list[str] = field(default_factory=lambda: [o.id for o in make_archetypes()])
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    tracker_mode: str = "oracle"
    weights_path: str | None = None
    prediction: bool = True
    seeds: list[int] = field(default_factory=lambda: list(range(50)))
    successes_required: int = 3
    max_trials_per_cell: int = 50
    fsm: FsmConfig = field(default_factory=FsmConfig)
    predictor: PredictorParams = field(default_factory=PredictorParams)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    tolerances: GraspTolerances = field(default_factory=GraspTolerances)
    limits: RobotLimits = field(default_factory=RobotLimits)

    def __post_init__(self):
        if self.protocol not in ("one_motion", "motion_continuous"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.successes_required < 1:
            raise ValueError("successes_required >= 1 required")
        if not self.seeds:
            raise ValueError("seeds must be explicit and non-empty")
        if self.tracker_mode == "learned" and self.weights_path is None:
            raise ValueError("learned tracker needs a weights_path")


def config_from_json(data: dict) -> ExperimentConfig:
    """Build a config from the JSON file layout: keys protocol, objects,
    noise, tracker, predictor, fsm, seeds (all optional except protocol)."""
    kw: dict = {"protocol": data["protocol"]}
    if "objects" in data:
        kw["objects"] = list(data["objects"])
    if "noise" in data:
        kw["noise"] = NoiseConfig(**data["noise"])
    tracker = dict(data.get("tracker", {}))
    if "mode" in tracker:
        kw["tracker_mode"] = tracker.pop("mode")
    if "weights" in tracker:
        kw["weights_path"] = tracker.pop("weights")
    if tracker:
        kw["tracker"] = TrackerConfig(**tracker)
    pred = dict(data.get("predictor", {}))
    if "enabled" in pred:
        kw["prediction"] = bool(pred.pop("enabled"))
    if pred:
        kw["predictor"] = PredictorParams(**pred)
    if "fsm" in data:
        kw["fsm"] = FsmConfig(**data["fsm"])
    if "seeds" in data:
        kw["seeds"] = [int(s) for s in data["seeds"]]
    for key in ("successes_required", "max_trials_per_cell"):
        if key in data:
            kw[key] = int(data[key])
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return config_from_json(json.load(f))


@dataclass
class CellSummary:
    object_id: str
    pattern: str  # rotation | translation | continuous
    attempts: int
    successes: int
    approach_mean: float
    approach_std: float
    aborted: bool
    n_flag: str  # "" or "n=1"

    @property
    def success_rate(self) -> float:
        return self.successes / self.attempts if self.attempts else 0.0


def summarize(results: list[TrialResult]) -> dict:
    """Aggregate record over trials: counts, success rate, approach stats over
    the successful trials (sample std, n-1; a single sample is flagged)."""
    if not results:
        raise ValueError("no trials to summarize")
    succ = [r for r in results if r.success]
    times = [r.approach_time for r in succ]
    if len(times) >= 2:
        mean = float(np.mean(times))
        std = float(np.std(times, ddof=1))
        flag = ""
    elif len(times) == 1:
        mean, std, flag = float(times[0]), 0.0, "n=1"
    else:
        mean, std, flag = math.nan, math.nan, "n=0"
    return {
        "attempts": len(results),
        "successes": len(succ),
        "success_rate": len(succ) / len(results),
        "approach_mean": mean,
        "approach_std": std,
        "flag": flag,
    }


def _trial_seed(base: int, *parts: int) -> int:
    return int(np.random.default_rng([base, *parts]).integers(2**31))


def _one_motion_script(pattern: str, rng: np.random.Generator, seed: int) -> MotionScript:
    if pattern == "rotation":
        return MotionScript(
            "one_motion_rotation",
            rotation_deg=float(rng.uniform(0.0, MAX_ROTATION_DEG)),
            seed=seed,
        )
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return MotionScript(
        "one_motion_translation",
        translation_m=float(rng.uniform(0.0, MAX_TRANSLATION_M)),
        translation_dir=np.array([math.cos(phi), math.sin(phi), 0.0]),
        seed=seed,
    )


def _run_cell_trial(cfg: ExperimentConfig, obj, script, seed: int, weights) -> TrialLog:
    return run_trial(
        obj,
        script,
        cfg.noise,
        tracker_mode=cfg.tracker_mode,
        weights=weights,
        tracker_cfg=cfg.tracker,
        fsm_cfg=cfg.fsm,
        tolerances=cfg.tolerances,
        predictor_params=cfg.predictor,
        prediction=cfg.prediction,
        limits=cfg.limits,
        seed=seed,
    )


@dataclass
class BenchReport:
    cells: list[CellSummary]
    trials: list[TrialResult]
    logs: list[TrialLog]
    overall: dict


def _load_weights_if_needed(cfg: ExperimentConfig):
    if cfg.tracker_mode == "learned":
        return load_weights(cfg.weights_path)
    return None


def run_one_motion(cfg: ExperimentConfig) -> BenchReport:
    """Object x pattern grid; each cell repeats trials until the success quota
    is met, aborting after max_trials_per_cell attempts."""
    if cfg.protocol != "one_motion":
        raise ValueError("config protocol must be one_motion")
    weights = _load_weights_if_needed(cfg)
    base = cfg.seeds[0]
    cells: list[CellSummary] = []
    all_trials: list[TrialResult] = []
    logs: list[TrialLog] = []
    for oi, object_id in enumerate(cfg.objects):
        obj = get_object(object_id)
        for pi, pattern in enumerate(ONE_MOTION_PATTERNS):
            results: list[TrialResult] = []
            successes = 0
            trial = 0
            while successes < cfg.successes_required and trial < cfg.max_trials_per_cell:
                seed = _trial_seed(base, oi, pi, trial)
                rng = np.random.default_rng([seed, 0x0E])
                script = _one_motion_script(pattern, rng, seed)
                log = _run_cell_trial(cfg, obj, script, seed, weights)
                logs.append(log)
                results.append(log.result)
                successes += log.result.success
                trial += 1
            agg = summarize(results)
            cells.append(
                CellSummary(
                    object_id,
                    pattern,
                    agg["attempts"],
                    agg["successes"],
                    agg["approach_mean"],
                    agg["approach_std"],
                    aborted=successes < cfg.successes_required,
                    n_flag=agg["flag"],
                )
            )
            all_trials.extend(results)
    return BenchReport(cells, all_trials, logs, summarize(all_trials))


def run_motion_continuous(cfg: ExperimentConfig) -> BenchReport:
    """Per-object continuous-motion success rates.  Scripts are seeded only by
    the trial seed, so runs with equal seeds and different tracker modes see
    identical object trajectories (paired comparison)."""
    if cfg.protocol != "motion_continuous":
        raise ValueError("config protocol must be motion_continuous")
    weights = _load_weights_if_needed(cfg)
    cells: list[CellSummary] = []
    all_trials: list[TrialResult] = []
    logs: list[TrialLog] = []
    for object_id in cfg.objects:
        obj = get_object(object_id)
        results: list[TrialResult] = []
        successes = 0
        for trial, seed in enumerate(cfg.seeds):
            if successes >= cfg.successes_required or trial >= cfg.max_trials_per_cell:
                break
            script = MotionScript("continuous_random", seed=seed)
            log = _run_cell_trial(cfg, obj, script, seed, weights)
            logs.append(log)
            results.append(log.result)
            successes += log.result.success
        agg = summarize(results)
        cells.append(
            CellSummary(
                object_id,
                "continuous",
                agg["attempts"],
                agg["successes"],
                agg["approach_mean"],
                agg["approach_std"],
                aborted=successes < cfg.successes_required,
                n_flag=agg["flag"],
            )
        )
        all_trials.extend(results)
    return BenchReport(cells, all_trials, logs, summarize(all_trials))


def run_benchmark(cfg: ExperimentConfig) -> BenchReport:
    if cfg.protocol == "one_motion":
        return run_one_motion(cfg)
    return run_motion_continuous(cfg)


# ---------------------------------------------------------------------------
# Result files


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return f"{v:.9g}"


SUMMARY_COLUMNS = (
    "object\tpattern\tattempts\tsuccesses\tsuccess_rate\t"
    "approach_mean_s\tapproach_std_s\tflags"
)

TRIAL_COLUMNS = (
    "object\tseed\tsuccess\tapproach_time_s\tsmoothness\tquality_consistency\tticks"
)


def summary_table(report: BenchReport) -> str:
    lines = [SUMMARY_COLUMNS]
    for c in report.cells:
        flags = ",".join(x for x in (c.n_flag, "aborted" if c.aborted else "") if x)
        lines.append(
            "\t".join(
                [
                    c.object_id,
                    c.pattern,
                    str(c.attempts),
                    str(c.successes),
                    _fmt(c.success_rate),
                    _fmt(c.approach_mean),
                    _fmt(c.approach_std),
                    flags,
                ]
            )
        )
    o = report.overall
    lines.append(
        "\t".join(
            [
                "OVERALL",
                "-",
                str(o["attempts"]),
                str(o["successes"]),
                _fmt(o["success_rate"]),
                _fmt(o["approach_mean"]),
                _fmt(o["approach_std"]),
                o["flag"],
            ]
        )
    )
    return "\n".join(lines) + "\n"


def trials_table(report: BenchReport) -> str:
    lines = [TRIAL_COLUMNS]
    for r in report.trials:
        lines.append(
            "\t".join(
                [
                    r.object_id,
                    str(r.seed),
                    str(int(r.success)),
                    _fmt(r.approach_time),
                    _fmt(r.smoothness),
                    _fmt(r.quality_consistency),
                    str(r.ticks),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def report_json(report: BenchReport) -> str:
    payload = {
        "cells": [
            {
                "object": c.object_id,
                "pattern": c.pattern,
                "attempts": c.attempts,
                "successes": c.successes,
                "success_rate": c.success_rate,
                "approach_mean": None if math.isnan(c.approach_mean) else c.approach_mean,
                "approach_std": None if math.isnan(c.approach_std) else c.approach_std,
                "aborted": c.aborted,
                "flag": c.n_flag,
            }
            for c in report.cells
        ],
        "overall": {
            k: (None if isinstance(v, float) and math.isnan(v) else v)
            for k, v in report.overall.items()
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_outputs(report: BenchReport, out_dir, events: bool = True) -> list[str]:
    """Write summary.tsv, trials.tsv, summary.json and per-trial event logs;
    returns the paths written (deterministic order and bytes)."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def emit(name: str, text: str):
        p = os.path.join(out_dir, name)
        with open(p, "w") as f:
            f.write(text)
        paths.append(p)

    emit("summary.tsv", summary_table(report))
    emit("trials.tsv", trials_table(report))
    emit("summary.json", report_json(report))
    if events:
        ev_dir = os.path.join(out_dir, "events")
        os.makedirs(ev_dir, exist_ok=True)
        for i, log in enumerate(report.logs):
            p = os.path.join(ev_dir, f"trial_{i:04d}_{log.result.object_id}_{log.result.seed}.tsv")
            with open(p, "w") as f:
                f.write("\n".join(log.events) + "\n")
            paths.append(p)
    return paths
