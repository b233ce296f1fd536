"""Synthetic handover scenes: objects with annotated grasps, motion scripts,
per-frame grasp candidate generation, and time-slice dataset construction.

The candidate generator is a stand-in for a learned grasp detector: it
subsamples an object's grasp annotations, transforms them to the world frame,
and corrupts them with seeded jitter, dropout, and spurious detections.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .se3 import (
    Grasp,
    Pose,
    axis_angle,
    compose,
    invert,
    object_frame_translation,
    pose_from_json,
    pose_to_json,
    rot_x,
    rot_y,
    rot_z,
    rotation_geodesic,
)

M_DEFAULT = 48
T_DEFAULT = 3
GRIPPER_MAX_WIDTH = 0.085
SPURIOUS_SCORE_MAX = 0.3


class InsufficientViewpoints(Exception):
    pass


class InsufficientAnnotations(Exception):
    pass


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    def contains(self, p: np.ndarray) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def clamp(self, p: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(p, dtype=float), self.lo, self.hi)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)


DEFAULT_WORKSPACE = Box(np.array([-0.5, -0.35, 0.0]), np.array([0.5, 0.35, 0.6]))
# Object motion range for the continuous protocol, centered on the workspace.
MOTION_BOUNDS_X = (-0.3, 0.3)
MOTION_BOUNDS_Y = (-0.15, 0.15)
MOTION_YAW_DEG = 60.0
OBJECT_HOLD_HEIGHT = 0.22


@dataclass(frozen=True)
class Annotation:
    """Grasp annotation in the object frame with an intrinsic quality."""

    pose: Pose
    width: float
    quality: float


@dataclass
class ObjectModel:
    id: str
    extent: np.ndarray
    annotations: list[Annotation]

    def __post_init__(self):
        self.extent = np.asarray(self.extent, dtype=float)
        if not self.annotations:
            raise ValueError("object needs at least one grasp annotation")
        half = 1.5 * self.extent / 2.0
        for ann in self.annotations:
            if np.any(np.abs(ann.pose.translation) > half + 1e-12):
                raise ValueError(f"{self.id}: annotation outside 1.5x extent box")
        if max(a.quality for a in self.annotations) < 0.5:
            raise ValueError(f"{self.id}: no annotation with quality >= 0.5")


@dataclass
class NoiseConfig:
    pose_jitter_sigma: float = 0.002
    rot_jitter_sigma_deg: float = 5.0
    score_jitter_sigma: float = 0.05
    dropout_prob: float = 0.05
    spurious_prob: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.dropout_prob <= 1 and 0 <= self.spurious_prob <= 1):
            raise ValueError("probabilities must be in [0, 1]")
        if min(self.pose_jitter_sigma, self.rot_jitter_sigma_deg, self.score_jitter_sigma) < 0:
            raise ValueError("sigmas must be >= 0")

    @staticmethod
    def zero(seed: int = 0) -> "NoiseConfig":
        return NoiseConfig(0.0, 0.0, 0.0, 0.0, 0.0, seed)


@dataclass
class AugmentationConfig:
    rot_xy_bound_deg: float = 22.5
    rot_z_bound_deg: float = 30.0
    trans_xy_bound: float = 0.2
    trans_z_bound: float = 0.25

    def __post_init__(self):
        if min(self.rot_xy_bound_deg, self.rot_z_bound_deg, self.trans_xy_bound, self.trans_z_bound) < 0:
            raise ValueError("augmentation bounds must be >= 0")


@dataclass
class FrameObservation:
    frame_index: int
    timestamp: float
    candidates: list[Grasp]
    true_object_pose: Pose  # simulation ground truth, hidden from learned tracking
    annotation_ids: np.ndarray  # -1 for spurious detections

    def __post_init__(self):
        self.annotation_ids = np.asarray(self.annotation_ids, dtype=int)
        assert len(self.candidates) == len(self.annotation_ids)


@dataclass
class TimeSlice:
    frames: list[FrameObservation]
    labels: list[Grasp]
    camera_poses: list[Pose]

    def __post_init__(self):
        if self.labels:
            assert len(self.frames) == len(self.labels) == len(self.camera_poses)


@dataclass
class MotionScript:
    kind: str  # static | one_motion_rotation | one_motion_translation | continuous_random
    rotation_deg: float = 0.0
    translation_m: float = 0.0
    translation_dir: np.ndarray | None = None
    bounds_x: tuple[float, float] = MOTION_BOUNDS_X
    bounds_y: tuple[float, float] = MOTION_BOUNDS_Y
    yaw_bound_deg: float = MOTION_YAW_DEG
    speed_limit: float = 0.25
    angular_speed_limit_deg: float = 45.0
    dwell_range: tuple[float, float] = (0.8, 1.6)
    trigger_time: float = 0.5
    duration: float = 1.0
    start_translation: np.ndarray | None = None
    start_yaw_deg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        kinds = {"static", "one_motion_rotation", "one_motion_translation", "continuous_random"}
        if self.kind not in kinds:
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.kind == "one_motion_rotation" and not 0 <= self.rotation_deg <= 60:
            raise ValueError("one-motion rotation magnitude must be in [0, 60] deg")
        if self.kind == "one_motion_translation" and not 0 <= self.translation_m <= 0.20:
            raise ValueError("one-motion translation magnitude must be in [0, 0.20] m")
        if self.start_translation is None:
            self.start_translation = np.array([0.0, 0.0, OBJECT_HOLD_HEIGHT])
        else:
            self.start_translation = np.asarray(self.start_translation, dtype=float)
        if self.translation_dir is not None:
            d = np.asarray(self.translation_dir, dtype=float)
            self.translation_dir = d / max(np.linalg.norm(d), 1e-12)

    def start_pose(self) -> Pose:
        return Pose(rot_z(math.radians(self.start_yaw_deg)), self.start_translation)


def _cubic_ease(u: float) -> float:
    u = min(max(u, 0.0), 1.0)
    return 3 * u * u - 2 * u * u * u


def _continuous_waypoints(script: MotionScript, horizon: float = 180.0):
    """Seeded waypoint list [(time, xyz, yaw_deg)] with per-segment durations
    long enough that the cubic-eased peak speed stays within the limits."""
    rng = np.random.default_rng([script.seed, 0xC0])
    t0 = script.start_translation
    pts = [(0.0, t0.copy(), script.start_yaw_deg)]
    time = 0.0
    while time < horizon:
        target = np.array(
            [
                rng.uniform(*script.bounds_x),
                rng.uniform(*script.bounds_y),
                t0[2],
            ]
        )
        yaw = rng.uniform(-script.yaw_bound_deg, script.yaw_bound_deg)
        prev_t, prev_p, prev_yaw = pts[-1]
        dist = float(np.linalg.norm(target - prev_p))
        dyaw = abs(yaw - prev_yaw)
        # cubic ease peak rate is 1.5 * delta / duration
        dur = max(
            0.8,
            1.5 * dist / (0.95 * script.speed_limit) if script.speed_limit > 0 else 0.8,
            1.5 * dyaw / (0.95 * script.angular_speed_limit_deg)
            if script.angular_speed_limit_deg > 0
            else 0.8,
        )
        time = prev_t + dur
        pts.append((time, target, yaw))
        # a handing-over human pauses at each presentation point
        dwell = rng.uniform(script.dwell_range[0], script.dwell_range[1])
        if dwell > 0:
            time += dwell
            pts.append((time, target.copy(), yaw))
    return pts


def script_object_pose(script: MotionScript, time: float) -> Pose:
    """Object pose at a given time; pure and deterministic given the script."""
    if time < 0:
        raise ValueError("time must be >= 0")
    start = script.start_pose()
    if script.kind == "static":
        return start
    if script.kind in ("one_motion_rotation", "one_motion_translation"):
        u = (time - script.trigger_time) / script.duration
        s = _cubic_ease(u)
        if script.kind == "one_motion_rotation":
            return Pose(rot_z(math.radians(s * script.rotation_deg)) @ start.rotation, start.translation)
        direction = script.translation_dir
        if direction is None:
            rng = np.random.default_rng([script.seed, 0xD1])
            phi = rng.uniform(0, 2 * math.pi)
            direction = np.array([math.cos(phi), math.sin(phi), 0.0])
        return Pose(start.rotation, start.translation + s * script.translation_m * direction)
    # continuous_random
    pts = _continuous_waypoints(script, horizon=max(time + 1.0, 180.0))
    for (ta, pa, ya), (tb, pb, yb) in zip(pts, pts[1:]):
        if time <= tb:
            s = _cubic_ease((time - ta) / (tb - ta))
            p = pa + s * (pb - pa)
            yaw = ya + s * (yb - ya)
            return Pose(rot_z(math.radians(yaw)), p)
    tb, pb, yb = pts[-1]
    return Pose(rot_z(math.radians(yb)), pb)


def detect_candidates(
    obj: ObjectModel,
    object_pose: Pose,
    noise: NoiseConfig,
    m: int,
    frame_index: int = 0,
    timestamp: float = 0.0,
    workspace: Box = DEFAULT_WORKSPACE,
) -> FrameObservation:
    """Simulated grasp detection: seeded annotation subsample in world frame
    with pose/score jitter, dropout, and spurious fill-ins. Deterministic
    given (noise.seed, frame_index)."""
    n_ann = len(obj.annotations)
    if n_ann < math.ceil(m / 2):
        raise InsufficientAnnotations(
            f"{obj.id}: {n_ann} annotations < ceil({m}/2)"
        )
    rng = np.random.default_rng([noise.seed & 0xFFFFFFFFFFFFFFFF, frame_index])
    k = min(m, n_ann)
    chosen = sorted(rng.choice(n_ann, size=k, replace=False).tolist())
    slots: list[int] = chosen + [-1] * (m - k)

    candidates: list[Grasp] = []
    ids: list[int] = []
    for i, ann_idx in enumerate(slots):
        drop = rng.random() < noise.dropout_prob
        spur = rng.random() < noise.spurious_prob
        jitter_t = rng.normal(0.0, noise.pose_jitter_sigma, size=3)
        jitter_axis = rng.normal(size=3)
        jitter_angle = math.radians(rng.normal(0.0, noise.rot_jitter_sigma_deg))
        jitter_s = rng.normal(0.0, noise.score_jitter_sigma)
        spur_t = workspace.sample(rng)
        spur_yaw = rng.uniform(0, 2 * math.pi)
        spur_tilt = rng.uniform(0, math.pi / 6)
        spur_w = rng.uniform(0.0, GRIPPER_MAX_WIDTH)
        spur_score = rng.uniform(0.0, SPURIOUS_SCORE_MAX)

        if ann_idx < 0 or drop or spur:
            rot = rot_z(spur_yaw) @ rot_x(spur_tilt) @ TOP_DOWN_ROT
            candidates.append(Grasp(Pose(rot, spur_t), spur_w, spur_score, candidate_index=i))
            ids.append(-1)
            continue
        ann = obj.annotations[ann_idx]
        world = compose(object_pose, ann.pose)
        if noise.pose_jitter_sigma > 0 or noise.rot_jitter_sigma_deg > 0:
            rot = axis_angle(jitter_axis, jitter_angle) @ world.rotation
            world = Pose(rot, world.translation + jitter_t)
        score = float(np.clip(ann.quality + jitter_s, 0.0, 1.0))
        candidates.append(Grasp(world, ann.width, score, candidate_index=i))
        ids.append(ann_idx)
    return FrameObservation(frame_index, timestamp, candidates, object_pose, np.array(ids))


# Grasp frames use z as the approach axis; a top-down grasp approaches along -z.
TOP_DOWN_ROT = rot_x(math.pi)


def sample_time_slice(
    anchor_camera: Pose,
    camera_pool: list[Pose],
    t: int,
    radius: float = 0.1,
    rng: np.random.Generator | None = None,
) -> list[Pose]:
    """Anchor plus t-1 distinct poses whose translations fall within radius."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if rng is None:
        rng = np.random.default_rng(0)
    eligible = []
    for p in camera_pool:
        d = np.linalg.norm(p.translation - anchor_camera.translation)
        if p is anchor_camera or d == 0.0:
            continue
        if d < radius:
            eligible.append(p)
    if len(eligible) < t - 1:
        raise InsufficientViewpoints(f"{len(eligible)} eligible viewpoints < {t - 1}")
    if t == 1:
        return [anchor_camera]
    idx = rng.choice(len(eligible), size=t - 1, replace=False)
    return [anchor_camera] + [eligible[i] for i in idx]


def hemisphere_camera_pool(
    n: int = 255,
    radius: float = 0.45,
    center=(0.0, 0.0, 0.0),
    seed: int = 7,
    cap_deg: float = 90.0,
) -> list[Pose]:
    """Seeded viewpoints on a spherical cap (up to a full upper hemisphere)
    looking at the center; cap_deg bounds the polar angle from vertical."""
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    cos_cap = math.cos(math.radians(cap_deg))
    poses = []
    while len(poses) < n:
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        v[2] = abs(v[2])
        if v[2] < cos_cap:
            continue
        t = center + radius * v
        z = center - t
        z /= np.linalg.norm(z)
        x = np.cross(np.array([0.0, 0.0, 1.0]), z)
        if np.linalg.norm(x) < 1e-6:
            x = np.array([1.0, 0.0, 0.0])
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        poses.append(Pose(np.column_stack([x, y, z]), t))
    return poses


_DEFAULT_POOL: list[Pose] | None = None


def default_camera_pool() -> list[Pose]:
    global _DEFAULT_POOL
    if _DEFAULT_POOL is None:
        _DEFAULT_POOL = hemisphere_camera_pool(cap_deg=60.0)
    return _DEFAULT_POOL


def _object_frame_offset(g: Grasp, object_pose: Pose) -> np.ndarray:
    return object_frame_translation(g.pose, object_pose)


def cross_frame_object_distance(
    g_a: Grasp, pose_a: Pose, g_b: Grasp, pose_b: Pose
) -> float:
    """Distance between two grasps' object-frame translations, each expressed
    in its own frame's object pose. Invariant under rigid world transforms."""
    return float(
        np.linalg.norm(_object_frame_offset(g_a, pose_a) - _object_frame_offset(g_b, pose_b))
    )


def _object_frame_rotation(g: Grasp, object_pose: Pose) -> np.ndarray:
    return object_pose.rotation.T @ g.pose.rotation


def nearest_in_object_frame(
    candidates: list[Grasp],
    frame_pose: Pose,
    anchor: Grasp,
    anchor_pose: Pose,
) -> Grasp:
    """Candidate minimizing object-frame distance to the anchor; ties broken by
    smaller rotation geodesic, then smaller candidate index."""
    anchor_rot = _object_frame_rotation(anchor, anchor_pose)

    def key(c: Grasp):
        d = cross_frame_object_distance(c, frame_pose, anchor, anchor_pose)
        rot = rotation_geodesic(_object_frame_rotation(c, frame_pose), anchor_rot)
        return (round(d, 12), round(rot, 12), c.candidate_index)

    return min(candidates, key=key)


def label_ground_truth(slice_: TimeSlice) -> TimeSlice:
    """Pick the highest-score frame-0 candidate as the anchor, then per frame
    the candidate nearest to it in the object frame."""
    f0 = slice_.frames[0]
    if not f0.candidates:
        raise ValueError("frame 0 has no candidates")
    anchor = max(f0.candidates, key=lambda c: (c.score, -c.candidate_index))
    labels = [anchor]
    for fr in slice_.frames[1:]:
        labels.append(
            nearest_in_object_frame(fr.candidates, fr.true_object_pose, anchor, f0.true_object_pose)
        )
    return TimeSlice(slice_.frames, labels, slice_.camera_poses)


def transform_frame(fr: FrameObservation, world_transform: Pose) -> FrameObservation:
    """Apply one rigid world-frame transform to every candidate and the true
    object pose of a frame."""
    return FrameObservation(
        fr.frame_index,
        fr.timestamp,
        [replace(c, pose=compose(world_transform, c.pose)) for c in fr.candidates],
        compose(world_transform, fr.true_object_pose),
        fr.annotation_ids,
    )


def augment_slice(slice_: TimeSlice, cfg: AugmentationConfig, seed: int) -> TimeSlice:
    """Apply one independently-sampled rigid transform per frame, expressed in
    that frame's camera coordinate system, to candidates, labels, and the true
    object pose."""
    new_frames = []
    new_labels = []
    for j, fr in enumerate(slice_.frames):
        rng = np.random.default_rng([seed, j])
        a = math.radians(rng.uniform(-cfg.rot_xy_bound_deg, cfg.rot_xy_bound_deg))
        b = math.radians(rng.uniform(-cfg.rot_xy_bound_deg, cfg.rot_xy_bound_deg))
        g = math.radians(rng.uniform(-cfg.rot_z_bound_deg, cfg.rot_z_bound_deg))
        dx = rng.uniform(-cfg.trans_xy_bound, cfg.trans_xy_bound)
        dy = rng.uniform(-cfg.trans_xy_bound, cfg.trans_xy_bound)
        dz = rng.uniform(-cfg.trans_z_bound, cfg.trans_z_bound)
        aug_cam = Pose(rot_x(a) @ rot_y(b) @ rot_z(g), np.array([dx, dy, dz]))
        cam = slice_.camera_poses[j] if slice_.camera_poses else Pose.identity()
        world_aug = compose(compose(cam, aug_cam), invert(cam))

        new_fr = transform_frame(fr, world_aug)
        new_frames.append(new_fr)
        if slice_.labels:
            new_labels.append(new_fr.candidates[slice_.labels[j].candidate_index])
    return TimeSlice(new_frames, new_labels, slice_.camera_poses)


def build_time_slice(
    obj: ObjectModel,
    object_pose: Pose,
    noise: NoiseConfig,
    m: int = M_DEFAULT,
    t: int = T_DEFAULT,
    camera_pool: list[Pose] | None = None,
    slice_seed: int = 0,
) -> TimeSlice:
    """Sample cameras, detect candidates per frame, and label ground truth."""
    rng = np.random.default_rng([slice_seed, 0xA5])
    if camera_pool is None:
        camera_pool = default_camera_pool()
    cams = None
    for _ in range(32):
        anchor = camera_pool[int(rng.integers(len(camera_pool)))]
        try:
            cams = sample_time_slice(anchor, camera_pool, t, rng=rng)
            break
        except InsufficientViewpoints:
            continue
    if cams is None:
        raise InsufficientViewpoints("no anchor with enough nearby viewpoints")
    frame_noise = replace(noise, seed=int(np.random.default_rng([noise.seed, slice_seed]).integers(2**63)))
    frames = [
        detect_candidates(obj, object_pose, frame_noise, m, frame_index=j, timestamp=j / 6.0)
        for j in range(t)
    ]
    return label_ground_truth(TimeSlice(frames, [], cams))


def make_training_slice(
    obj: ObjectModel,
    noise: NoiseConfig,
    aug: AugmentationConfig,
    m: int = M_DEFAULT,
    t: int = T_DEFAULT,
    seed: int = 0,
    camera_pool: list[Pose] | None = None,
) -> TimeSlice:
    """One augmented, labeled training sample."""
    pose = Pose(rot_z(0.0), np.array([0.0, 0.0, OBJECT_HOLD_HEIGHT]))
    sl = build_time_slice(obj, pose, noise, m=m, t=t, camera_pool=camera_pool, slice_seed=seed)
    return augment_slice(sl, aug, seed=seed)


# ---------------------------------------------------------------------------
# Synthetic object archetypes


def _make_object(
    name: str,
    extent,
    n_annotations: int,
    spread: float,
    symmetry: int,
    seed: int,
) -> ObjectModel:
    rng = np.random.default_rng(seed)
    extent = np.asarray(extent, dtype=float)
    anns = []
    for i in range(n_annotations):
        frac = (i % max(symmetry, 1)) / max(symmetry, 1)
        u = rng.uniform(-spread, spread, size=2)
        tz = extent[2] / 2.0 * rng.uniform(0.4, 1.0)
        t = np.array([u[0] * extent[0] / 2, u[1] * extent[1] / 2, tz])
        yaw = 2 * math.pi * frac + rng.uniform(-0.2, 0.2)
        tilt = rng.uniform(0.0, math.radians(20.0))
        rot = rot_z(yaw) @ rot_x(tilt) @ TOP_DOWN_ROT
        width = float(np.clip(min(extent[0], extent[1]) * rng.uniform(0.5, 1.0), 0.01, GRIPPER_MAX_WIDTH))
        quality = float(rng.uniform(0.3, 0.95))
        anns.append(Annotation(Pose(rot, t), width, quality))
    # guarantee one confidently graspable annotation
    if max(a.quality for a in anns) < 0.5:
        anns[0] = Annotation(anns[0].pose, anns[0].width, 0.8)
    return ObjectModel(name, extent, anns)


def make_archetypes() -> list[ObjectModel]:
    """Twelve synthetic objects spanning annotation density, spread, symmetry."""
    specs = [
        ("box_dense", (0.08, 0.06, 0.10), 48, 0.8, 4),
        ("bottle_tall", (0.06, 0.06, 0.22), 36, 0.5, 8),
        ("banana_curved", (0.16, 0.04, 0.04), 28, 0.9, 2),
        ("mug_handle", (0.09, 0.07, 0.09), 32, 0.7, 1),
        ("pen_thin", (0.14, 0.015, 0.015), 24, 1.0, 2),
        ("spoon_small", (0.15, 0.03, 0.02), 24, 0.9, 2),
        ("comb_sparse", (0.12, 0.03, 0.01), 24, 0.6, 1),
        ("stapler_mid", (0.11, 0.04, 0.05), 30, 0.7, 2),
        ("tape_ring", (0.07, 0.07, 0.03), 36, 0.6, 6),
        ("basket_wide", (0.20, 0.14, 0.10), 44, 0.9, 4),
        ("spatula_flat", (0.18, 0.06, 0.02), 26, 0.8, 2),
        ("scissors_x", (0.13, 0.05, 0.012), 28, 0.8, 2),
    ]
    return [
        _make_object(name, extent, n, spread, sym, seed=1000 + i)
        for i, (name, extent, n, spread, sym) in enumerate(specs)
    ]


def get_object(object_id: str, catalog: list[ObjectModel] | None = None) -> ObjectModel:
    catalog = catalog if catalog is not None else make_archetypes()
    for obj in catalog:
        if obj.id == object_id:
            return obj
    raise KeyError(object_id)


# ---------------------------------------------------------------------------
# Serialization


def grasp_to_json(g: Grasp) -> dict:
    return {
        "pose": pose_to_json(g.pose),
        "width": float(g.width),
        "score": float(g.score),
        "candidate_index": int(g.candidate_index),
    }


def grasp_from_json(obj: dict) -> Grasp:
    return Grasp(
        pose_from_json(obj["pose"]),
        float(obj["width"]),
        float(obj["score"]),
        int(obj.get("candidate_index", 0)),
    )


def object_to_json(obj: ObjectModel) -> dict:
    return {
        "id": obj.id,
        "extent": [float(v) for v in obj.extent],
        "annotations": [
            {"pose": pose_to_json(a.pose), "width": float(a.width), "quality": float(a.quality)}
            for a in obj.annotations
        ],
    }


def object_from_json(data: dict) -> ObjectModel:
    return ObjectModel(
        data["id"],
        np.asarray(data["extent"], dtype=float),
        [
            Annotation(pose_from_json(a["pose"]), float(a["width"]), float(a["quality"]))
            for a in data["annotations"]
        ],
    )


def script_to_json(s: MotionScript) -> dict:
    return {
        "kind": s.kind,
        "rotation_deg": s.rotation_deg,
        "translation_m": s.translation_m,
        "translation_dir": None if s.translation_dir is None else [float(v) for v in s.translation_dir],
        "bounds_x": list(s.bounds_x),
        "bounds_y": list(s.bounds_y),
        "yaw_bound_deg": s.yaw_bound_deg,
        "speed_limit": s.speed_limit,
        "angular_speed_limit_deg": s.angular_speed_limit_deg,
        "dwell_range": list(s.dwell_range),
        "trigger_time": s.trigger_time,
        "duration": s.duration,
        "start_translation": [float(v) for v in s.start_translation],
        "start_yaw_deg": s.start_yaw_deg,
        "seed": s.seed,
    }


def script_from_json(data: dict) -> MotionScript:
    kwargs = dict(data)
    if kwargs.get("translation_dir") is not None:
        kwargs["translation_dir"] = np.asarray(kwargs["translation_dir"], dtype=float)
    if kwargs.get("start_translation") is not None:
        kwargs["start_translation"] = np.asarray(kwargs["start_translation"], dtype=float)
    for key in ("bounds_x", "bounds_y", "dwell_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return MotionScript(**kwargs)


def save_scene_file(path, objects: list[ObjectModel], scripts: list[MotionScript]):
    payload = {
        "objects": [object_to_json(o) for o in objects],
        "scripts": [script_to_json(s) for s in scripts],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_scene_file(path) -> tuple[list[ObjectModel], list[MotionScript]]:
    with open(path) as fh:
        data = json.load(fh)
    objects = [object_from_json(o) for o in data.get("objects", [])]
    scripts = [script_from_json(s) for s in data.get("scripts", [])]
    return objects, scripts


def slice_to_json(sl: TimeSlice) -> dict:
    return {
        "frames": [
            {
                "frame_index": fr.frame_index,
                "timestamp": fr.timestamp,
                "true_object_pose": pose_to_json(fr.true_object_pose),
                "annotation_ids": fr.annotation_ids.tolist(),
                "candidates": [grasp_to_json(c) for c in fr.candidates],
            }
            for fr in sl.frames
        ],
        "labels": [grasp_to_json(g) for g in sl.labels],
        "camera_poses": [pose_to_json(p) for p in sl.camera_poses],
    }


def slice_from_json(data: dict) -> TimeSlice:
    frames = [
        FrameObservation(
            int(fr["frame_index"]),
            float(fr["timestamp"]),
            [grasp_from_json(c) for c in fr["candidates"]],
            pose_from_json(fr["true_object_pose"]),
            np.asarray(fr["annotation_ids"], dtype=int),
        )
        for fr in data["frames"]
    ]
    return TimeSlice(
        frames,
        [grasp_from_json(g) for g in data["labels"]],
        [pose_from_json(p) for p in data["camera_poses"]],
    )


def save_slice(path, sl: TimeSlice):
    with open(path, "w") as fh:
        json.dump(slice_to_json(sl), fh, sort_keys=True)


def load_slice(path) -> TimeSlice:
    with open(path) as fh:
        return slice_from_json(json.load(fh))
