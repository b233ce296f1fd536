"""Single-trial closed-loop simulation: a scripted (or externally driven)
object, per-tick candidate detection, and the handover phase machine."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fsm import (
    EVENT_HEADER,
    FsmConfig,
    GraspTolerances,
    HandoverFsm,
    HandoverPhase,
    RobotLimits,
    RobotState,
    format_event,
    home_pose,
    make_tracker,
)
from .predictor import PredictorParams
from .scene import (
    InsufficientAnnotations,
    MotionScript,
    NoiseConfig,
    ObjectModel,
    detect_candidates,
    script_object_pose,
)
from .se3 import Grasp, Pose, object_frame_distance
from .tracker import TrackerConfig


@dataclass
class TrialResult:
    object_id: str
    seed: int
    success: bool
    approach_time: float  # seconds, first Tracking tick -> Grasping trigger
    smoothness: float  # mean per-tick ee jerk magnitude (m/s^3)
    quality_consistency: float  # std of tracked object-frame distance to the anchor
    ticks: int

    def __post_init__(self):
        for v in (self.approach_time, self.smoothness, self.quality_consistency):
            if not np.isfinite(v):
                raise ValueError("trial metrics must be finite")


@dataclass
class TrialLog:
    result: TrialResult
    events: list[str]
    object_poses: list[Pose]
    transitions: list[tuple[HandoverPhase, HandoverPhase]]


def run_trial(
    obj: ObjectModel,
    script: MotionScript,
    noise: NoiseConfig,
    tracker_mode: str = "oracle",
    weights=None,
    tracker_cfg: TrackerConfig | None = None,
    fsm_cfg: FsmConfig | None = None,
    tolerances: GraspTolerances | None = None,
    predictor_params: PredictorParams | None = None,
    prediction: bool = True,
    limits: RobotLimits | None = None,
    seed: int = 0,
    max_time: float = 30.0,
    candidates: int = 48,
) -> TrialLog:
    """Run one handover attempt until the first grasp evaluation or timeout."""
    tracker_cfg = tracker_cfg or TrackerConfig()
    fsm_cfg = fsm_cfg or FsmConfig()
    limits = limits or RobotLimits()
    tracker = make_tracker(tracker_mode, tracker_cfg, weights)
    fsm = HandoverFsm(
        fsm_cfg,
        tracker,
        obj,
        tolerances=tolerances,
        predictor_params=predictor_params,
        prediction=prediction,
    )
    trial_noise = replace(
        noise, seed=int(np.random.default_rng([noise.seed, seed]).integers(2**63))
    )
    dt = fsm_cfg.dt
    robot = RobotState(home_pose(), np.zeros(3), limits=limits)

    events: list[str] = []
    object_poses: list[Pose] = []
    velocities: list[np.ndarray] = []
    tracked_dists: list[float] = []
    anchor: Grasp | None = None
    first_tracking_tick: int | None = None
    trigger_tick: int | None = None
    success = False
    ticks = 0
    prev_pose: Pose | None = None

    n_ticks = int(round(max_time / dt))
    for k in range(n_ticks):
        t = k * dt
        object_pose = script_object_pose(script, t)
        object_poses.append(object_pose)
        object_speed = 0.0
        if prev_pose is not None:
            object_speed = float(
                np.linalg.norm(object_pose.translation - prev_pose.translation) / dt
            )
        prev_pose = object_pose
        try:
            obs = detect_candidates(
                obj, object_pose, trial_noise, candidates, frame_index=k, timestamp=t
            )
        except InsufficientAnnotations:
            # malformed detection tick: treated as an empty frame
            obs = detect_candidates(
                obj, object_pose, NoiseConfig.zero(seed=trial_noise.seed),
                candidates, frame_index=k, timestamp=t,
            )
        before = fsm.phase
        robot, diag = fsm.step(robot, obs, object_speed)
        velocities.append(robot.ee_velocity.copy())
        events.append(format_event(diag, robot))
        if isinstance(diag.selected, Grasp):
            if anchor is None:
                anchor = diag.selected
            tracked_dists.append(
                object_frame_distance(diag.selected, anchor, obs.true_object_pose)
            )
        if first_tracking_tick is None and before is HandoverPhase.TRACKING:
            first_tracking_tick = diag.tick
        if trigger_tick is None and fsm.phase is HandoverPhase.GRASPING:
            trigger_tick = diag.tick
        ticks = k + 1
        if diag.grasp_result is not None:
            success = diag.grasp_result
            break

    if first_tracking_tick is not None and trigger_tick is not None:
        approach = (trigger_tick - first_tracking_tick + 1) * dt
    else:
        approach = ticks * dt  # never triggered: whole trial counts

    v = np.asarray(velocities)
    if len(v) >= 3:
        acc = np.diff(v, axis=0) / dt
        jerk = np.linalg.norm(np.diff(acc, axis=0) / dt, axis=1)
        smoothness = float(jerk.mean())
    else:
        smoothness = 0.0
    if len(tracked_dists) > 1:
        consistency = float(np.std(tracked_dists, ddof=1))
    else:
        consistency = 0.0

    result = TrialResult(
        object_id=obj.id,
        seed=seed,
        success=success,
        approach_time=approach,
        smoothness=smoothness,
        quality_consistency=consistency,
        ticks=ticks,
    )
    return TrialLog(result, [EVENT_HEADER] + events, object_poses, list(fsm.transitions))
