"""Closed-loop handover control: five-phase state machine, online trajectory
generation under velocity/acceleration limits, and simulated grasp evaluation.

The robot is modeled as a free-flying end-effector.  Each control tick consumes
one candidate-set observation, advances the phase machine, and emits a bounded
motion command plus a diagnostics record suitable for tab-separated event logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .predictor import EmptyHistory, GraspHistory, PredictorParams, predict_future
from .scene import Box, DEFAULT_WORKSPACE, FrameObservation, ObjectModel
from .se3 import (
    Grasp,
    Pose,
    axis_angle,
    matrix_to_quat,
    object_frame_distance,
    rotation_geodesic,
)
from .tracker import (
    LOST,
    Lost,
    TrackerConfig,
    _passes_filter,
    baseline_nearest_last,
    infer_track,
    oracle_track,
)


class HandoverPhase(Enum):
    READY = "Ready"
    TRACKING = "Tracking"
    SEARCH = "Search"
    GRASPING = "Grasping"
    PLACING = "Placing"


@dataclass
class FsmConfig:
    reinit_threshold: int = 5
    search_threshold: int = 20
    waiting_threshold: int = 60
    z_offset: float = 0.035
    trigger_dist: float = 0.025
    trigger_angle_deg: float = 10.0
    gripper_close_time: float = 0.5
    control_rate: float = 6.0
    place_time: float = 1.0
    # commit to a close only when the expected landing miss at closure --
    # |applied lead - tracked velocity * close time| -- is small
    close_miss_slack: float = 0.04  # m

    def __post_init__(self):
        if not self.reinit_threshold < self.search_threshold < self.waiting_threshold:
            raise ValueError("need reinit_threshold < search_threshold < waiting_threshold")
        if self.z_offset < 0:
            raise ValueError("z_offset must be >= 0")
        if self.control_rate <= 0:
            raise ValueError("control_rate must be > 0")
        if self.gripper_close_time <= 0:
            raise ValueError("gripper_close_time must be > 0")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate


@dataclass(frozen=True)
class RobotLimits:
    v_max: float = 0.6  # m/s
    a_max: float = 2.0  # m/s^2
    omega_max_deg: float = 120.0  # deg/s

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.omega_max_deg) <= 0:
            raise ValueError("limits must be positive")


GRIPPER_OPEN = "open"
GRIPPER_CLOSING = "closing"
GRIPPER_CLOSED = "closed"


@dataclass
class RobotState:
    ee_pose: Pose
    ee_velocity: np.ndarray
    gripper: str = GRIPPER_OPEN
    gripper_remaining: float = 0.0
    limits: RobotLimits = field(default_factory=RobotLimits)

    def __post_init__(self):
        self.ee_velocity = np.asarray(self.ee_velocity, dtype=float)
        if self.gripper not in (GRIPPER_OPEN, GRIPPER_CLOSING, GRIPPER_CLOSED):
            raise ValueError(f"unknown gripper state {self.gripper!r}")


def home_pose() -> Pose:
    # ready pose: hovering over the workspace center, pointing down
    rot = axis_angle(np.array([1.0, 0.0, 0.0]), math.pi)
    return Pose(rot, np.array([0.0, -0.25, 0.45]))


def search_pose() -> Pose:
    # raised top pose for a wider field of view while the object is lost
    rot = axis_angle(np.array([1.0, 0.0, 0.0]), math.pi)
    return Pose(rot, np.array([0.0, 0.0, 0.55]))


def _rotation_toward(current: np.ndarray, target: np.ndarray, max_step_rad: float) -> np.ndarray:
    """Rotate `current` toward `target` by at most max_step_rad radians."""
    rel = target @ current.T
    q = matrix_to_quat(rel)
    w = min(abs(q[0]), 1.0)
    angle = 2.0 * math.acos(w)
    if angle < 1e-12:
        return target
    axis = q[1:] if q[0] >= 0 else -q[1:]
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return target
    axis = axis / n
    step = min(angle, max_step_rad)
    return axis_angle(axis, step) @ current
    # note: for angle <= max_step_rad this lands exactly on target


def otg_step(robot: RobotState, target: Pose, dt: float) -> RobotState:
    """One bounded-acceleration setpoint toward a (possibly moving) target.

    The translation follows a braking-curve rule along the straight line to the
    target: desired speed min(v_max, sqrt(2 a |d|), |d|/dt), with the velocity
    change clamped to a_max*dt in norm.  Rotation slews at <= omega_max.
    Retargeting every tick is safe; there is no plan state to invalidate.
    """
    lim = robot.limits
    d = target.translation - robot.ee_pose.translation
    dist = float(np.linalg.norm(d))
    if dist < 1e-15:
        v_des = np.zeros(3)
    else:
        # discrete braking curve: largest speed that can still stop at the
        # target when held for one tick and then decelerated at a_max
        a = lim.a_max
        brake = -a * dt / 2.0 + math.sqrt((a * dt / 2.0) ** 2 + 2.0 * a * dist)
        speed = min(lim.v_max, brake, dist / dt)
        v_des = d / dist * speed
    dv = v_des - robot.ee_velocity
    dv_norm = float(np.linalg.norm(dv))
    if dv_norm > lim.a_max * dt:
        dv = dv * (lim.a_max * dt / dv_norm)
    vel = robot.ee_velocity + dv
    pos = robot.ee_pose.translation + vel * dt
    rot = _rotation_toward(
        robot.ee_pose.rotation, target.rotation, math.radians(lim.omega_max_deg) * dt
    )
    return replace(robot, ee_pose=Pose(rot, pos), ee_velocity=vel)


def otg_time_bound(distance: float, limits: RobotLimits) -> float:
    """Closed-form minimum time to cover `distance` from rest under the
    trapezoidal (or triangular) velocity profile the generator converges to."""
    d = abs(distance)
    v, a = limits.v_max, limits.a_max
    if d <= v * v / a:
        return 2.0 * math.sqrt(d / a)
    return v / a + d / v


@dataclass
class GraspTolerances:
    epsilon_t: float = 0.015  # m, closed tolerance
    epsilon_r_deg: float = 15.0
    min_quality: float = 0.5
    slip_limit: float = 0.3  # m/s object speed at closure


def evaluate_grasp_success(
    robot: RobotState,
    obj: ObjectModel,
    object_pose: Pose,
    tolerances: GraspTolerances,
    object_speed: float = 0.0,
) -> bool:
    """True iff the closed gripper sits on some good annotation in the current
    object frame and the object was not moving faster than the slip limit."""
    if robot.gripper != GRIPPER_CLOSED:
        raise ValueError("grasp evaluation requires a closed gripper")
    if object_speed > tolerances.slip_limit:
        return False
    ee = Grasp(robot.ee_pose, 0.04, 1.0)
    for ann in obj.annotations:
        if ann.quality < tolerances.min_quality:
            continue
        anchored = Grasp(
            Pose(object_pose.rotation @ ann.pose.rotation,
                 object_pose.rotation @ ann.pose.translation + object_pose.translation),
            ann.width,
            ann.quality,
        )
        if (
            object_frame_distance(ee, anchored, object_pose) <= tolerances.epsilon_t
            and math.degrees(rotation_geodesic(ee.pose.rotation, anchored.pose.rotation))
            <= tolerances.epsilon_r_deg
        ):
            return True
    return False


# ---------------------------------------------------------------------------
# Tracker adapters for the control loop


class LearnedTracker:
    def __init__(self, cfg: TrackerConfig, weights):
        self.cfg = cfg
        self.weights = weights
        self.history: list[tuple[FrameObservation, Grasp]] = []

    def reset(self):
        self.history = []

    def select(self, obs: FrameObservation) -> Grasp | Lost:
        window = self.history[-(self.cfg.frames - 1):] if self.cfg.frames > 1 else []
        sel = infer_track(window, obs, self.cfg, self.weights)
        if not isinstance(sel, Lost):
            self.history.append((obs, sel))
        return sel


class BaselineTracker:
    """Nearest candidate to the last selection in world translation."""

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.last: Grasp | None = None

    def reset(self):
        self.last = None

    def select(self, obs: FrameObservation) -> Grasp | Lost:
        allowed = [c for c in obs.candidates if _passes_filter(c, self.cfg)]
        if not allowed:
            return LOST
        if self.last is None:
            sel = max(allowed, key=lambda c: (c.score, -c.candidate_index))
        else:
            sel = baseline_nearest_last(obs, self.last)
        self.last = sel
        return sel


class OracleTracker:
    """Simulation upper bound; peeks at the hidden true object pose."""

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.anchor: Grasp | None = None
        self.anchor_pose: Pose | None = None

    def reset(self):
        self.anchor = None
        self.anchor_pose = None

    def select(self, obs: FrameObservation) -> Grasp | Lost:
        allowed = [c for c in obs.candidates if _passes_filter(c, self.cfg)]
        if not allowed:
            return LOST
        if self.anchor is None:
            sel = max(allowed, key=lambda c: (c.score, -c.candidate_index))
            self.anchor = sel
            self.anchor_pose = obs.true_object_pose
            return sel
        return oracle_track(obs, self.anchor, self.anchor_pose, obs.true_object_pose)


def make_tracker(mode: str, cfg: TrackerConfig, weights=None):
    if mode == "learned":
        if weights is None:
            raise ValueError("learned mode needs weights")
        return LearnedTracker(cfg, weights)
    if mode == "baseline":
        return BaselineTracker(cfg)
    if mode == "oracle":
        return OracleTracker(cfg)
    raise ValueError(f"unknown tracker mode {mode!r}")


# ---------------------------------------------------------------------------
# The phase machine


@dataclass
class StepDiagnostics:
    tick: int
    phase: HandoverPhase
    target: Pose
    lost_count: int
    selected: Grasp | Lost | None = None
    predicted: Pose | None = None
    reinitialized: bool = False
    grasp_result: bool | None = None


def format_event(d: StepDiagnostics, robot: RobotState) -> str:
    """One tab-separated log line: tick, phase, ee pose, target pose, lost
    counter, selected candidate index (-1 when nothing was selected)."""
    def pose_cols(p: Pose):
        q = matrix_to_quat(p.rotation)
        return [*p.translation, *q]

    idx = -1
    if isinstance(d.selected, Grasp):
        idx = d.selected.candidate_index
    cols = [str(d.tick), d.phase.value]
    cols += [f"{v:.9g}" for v in pose_cols(robot.ee_pose)]
    cols += [f"{v:.9g}" for v in pose_cols(d.target)]
    cols += [str(d.lost_count), str(idx)]
    return "\t".join(cols)


EVENT_HEADER = "\t".join(
    ["tick", "phase"]
    + [f"ee_{c}" for c in ("tx", "ty", "tz", "qw", "qx", "qy", "qz")]
    + [f"target_{c}" for c in ("tx", "ty", "tz", "qw", "qx", "qy", "qz")]
    + ["lost", "selected"]
)


class HandoverFsm:
    """Single-owner phase machine advanced once per control tick.

    Owns the loss counter, the selected-pose history feeding the tracker, and
    the grasp history feeding the future predictor.  Callers apply the returned
    command to their robot state and log the diagnostics.
    """

    def __init__(
        self,
        cfg: FsmConfig,
        tracker,
        obj: ObjectModel,
        tolerances: GraspTolerances | None = None,
        predictor_params: PredictorParams | None = None,
        prediction: bool = True,
        workspace: Box = DEFAULT_WORKSPACE,
    ):
        self.cfg = cfg
        self.tracker = tracker
        self.obj = obj
        self.tolerances = tolerances or GraspTolerances()
        self.predictor_params = predictor_params or PredictorParams()
        self.prediction = prediction
        self.workspace = workspace
        self.phase = HandoverPhase.READY
        self.lost_count = 0
        self.tick = 0
        self.grasp_history = GraspHistory(max_length=self.predictor_params.max_history)
        self.grasp_target: Pose | None = None
        self.place_remaining = 0.0
        self.transitions: list[tuple[HandoverPhase, HandoverPhase]] = []

    def _reinitialize(self):
        self.tracker.reset()
        self.grasp_history.clear()

    def _goto(self, phase: HandoverPhase):
        if phase is not self.phase:
            self.transitions.append((self.phase, phase))
        self.phase = phase

    def _raised(self, pose: Pose) -> Pose:
        """Predicted pose raised along world z; the approach waypoint."""
        return Pose(pose.rotation, pose.translation + np.array([0.0, 0.0, self.cfg.z_offset]))

    def _tracked_velocity(self) -> np.ndarray:
        entries = self.grasp_history.entries
        if len(entries) < 2:
            return np.zeros(3)
        (ga, ta), (gb, tb) = entries[-2], entries[-1]
        return (gb.pose.translation - ga.pose.translation) / (tb - ta)

    def _triggered(self, ee: Pose, sel: Grasp, predicted: Pose) -> bool:
        raised = self._raised(predicted)
        shift = predicted.translation - sel.pose.translation
        landing_miss = np.linalg.norm(
            shift - self._tracked_velocity() * self.cfg.gripper_close_time
        )
        return (
            np.linalg.norm(ee.translation - raised.translation) <= self.cfg.trigger_dist
            and math.degrees(rotation_geodesic(ee.rotation, raised.rotation))
            <= self.cfg.trigger_angle_deg
            and landing_miss <= self.cfg.close_miss_slack
        )

    def _handle_lost(self, diag: StepDiagnostics) -> Pose:
        """Shared loss bookkeeping for Tracking and Search; returns a target."""
        self.lost_count += 1
        diag.lost_count = self.lost_count
        if self.lost_count > self.cfg.waiting_threshold:
            self._reinitialize()
            diag.reinitialized = True
            self.lost_count = 0
            self._goto(HandoverPhase.READY)
            return home_pose()
        if self.lost_count > self.cfg.search_threshold:
            self._goto(HandoverPhase.SEARCH)
            return search_pose()
        if self.lost_count > self.cfg.reinit_threshold:
            # next frame is treated as a fresh first frame
            self._reinitialize()
            diag.reinitialized = True
        return self.grasp_target or home_pose()

    def step(
        self, robot: RobotState, obs: FrameObservation, object_speed: float = 0.0
    ) -> tuple[RobotState, StepDiagnostics]:
        cfg = self.cfg
        dt = cfg.dt
        diag = StepDiagnostics(self.tick, self.phase, home_pose(), self.lost_count)
        close_done = False

        if self.phase is HandoverPhase.READY:
            target = home_pose()
            if any(_passes_filter(c, self.tracker.cfg) for c in obs.candidates):
                self._reinitialize()
                self.lost_count = 0
                self._goto(HandoverPhase.TRACKING)

        if self.phase is HandoverPhase.TRACKING or self.phase is HandoverPhase.SEARCH:
            sel = self.tracker.select(obs)
            diag.selected = sel
            if isinstance(sel, Lost):
                target = self._handle_lost(diag)
            else:
                if self.phase is HandoverPhase.SEARCH:
                    self._goto(HandoverPhase.TRACKING)
                self.lost_count = 0
                self.grasp_history.append(sel, obs.timestamp)
                predicted = sel.pose
                if self.prediction:
                    try:
                        predicted = predict_future(
                            self.grasp_history,
                            robot.ee_velocity * dt,
                            self.predictor_params,
                        )
                    except EmptyHistory:
                        pass
                diag.predicted = predicted
                self.grasp_target = predicted
                if self._triggered(robot.ee_pose, sel, predicted):
                    self._goto(HandoverPhase.GRASPING)
                    robot = replace(
                        robot,
                        gripper=GRIPPER_CLOSING,
                        gripper_remaining=cfg.gripper_close_time,
                    )
                    target = predicted
                else:
                    target = self._raised(predicted)

        elif self.phase is HandoverPhase.GRASPING:
            # keep servoing while the gripper closes, aiming at the landing
            # point: the predicted lead scaled down by the remaining close time
            sel = self.tracker.select(obs)
            if not isinstance(sel, Lost):
                diag.selected = sel
                self.grasp_history.append(sel, obs.timestamp)
                predicted = sel.pose
                if self.prediction:
                    try:
                        predicted = predict_future(
                            self.grasp_history,
                            robot.ee_velocity * dt,
                            self.predictor_params,
                        )
                    except EmptyHistory:
                        pass
                frac = max(robot.gripper_remaining, 0.0) / cfg.gripper_close_time
                shift = (predicted.translation - sel.pose.translation) * frac
                # rotation: follow genuine object rotation at a plausible human
                # wrist rate, but ignore large jumps — co-located annotations
                # differing only in approach rotation make the tracked label
                # flap under jitter, and chasing that mid-close aligns with none
                rotation = (
                    self.grasp_target.rotation
                    if self.grasp_target is not None
                    else predicted.rotation
                )
                if rotation_geodesic(rotation, sel.pose.rotation) <= math.radians(45.0):
                    rotation = _rotation_toward(
                        rotation, sel.pose.rotation, math.radians(60.0) * dt
                    )
                self.grasp_target = Pose(rotation, sel.pose.translation + shift)
            target = self.grasp_target or home_pose()
            remaining = robot.gripper_remaining - dt
            if remaining > 0:
                robot = replace(robot, gripper_remaining=remaining)
            else:
                # the close finishes during this tick; evaluate after the
                # tick's motion, where the fingers actually meet the object
                robot = replace(robot, gripper=GRIPPER_CLOSED, gripper_remaining=0.0)
                close_done = True

        elif self.phase is HandoverPhase.PLACING:
            # timed stub: carry toward the home pose, then wait again
            target = home_pose()
            self.place_remaining -= dt
            if self.place_remaining <= 0:
                self._goto(HandoverPhase.READY)

        diag.target = target
        command = otg_step(robot, target, dt)
        if close_done:
            ok = evaluate_grasp_success(
                command, self.obj, obs.true_object_pose, self.tolerances, object_speed
            )
            diag.grasp_result = ok
            self._reinitialize()
            self.lost_count = 0
            command = replace(command, gripper=GRIPPER_OPEN)
            if ok:
                self.place_remaining = cfg.place_time
                self._goto(HandoverPhase.PLACING)
            else:
                self._goto(HandoverPhase.READY)
        self.tick += 1
        return command, diag
