"""Rigid-body poses and the object-frame grasp distance.

All rotations are 3x3 orthonormal matrices (det +1), translations are in
meters. Poses compose left-to-right like matrices: ``compose(a, b)`` applies
``b`` first, then ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


def _orthonormality_drift(rot: np.ndarray) -> float:
    return float(np.abs(rot @ rot.T - np.eye(3)).max())


def reorthonormalize(rot: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix onto SO(3) via polar decomposition."""
    u, _, vt = np.linalg.svd(rot)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if _orthonormality_drift(rot) > ORTHO_TOL or abs(np.linalg.det(rot) - 1.0) > 1e-6:
            rot = reorthonormalize(rot)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points (..., 3) from this pose's frame to the parent frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )


@dataclass(frozen=True)
class Grasp:
    """7-DoF grasp pose: rotation, translation, gripper width, plus a score."""

    pose: Pose
    width: float
    score: float
    candidate_index: int = 0

    def __post_init__(self):
        if self.width < 0:
            raise ValueError(f"grasp width must be >= 0, got {self.width}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"grasp score must be in [0, 1], got {self.score}")


def compose(a: Pose, b: Pose) -> Pose:
    """a after b: the pose obtained by applying b, then a."""
    rot = a.rotation @ b.rotation
    if _orthonormality_drift(rot) > ORTHO_TOL:
        rot = reorthonormalize(rot)
    return Pose(rot, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -rt @ p.translation)


def rot_x(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-15 or angle_rad == 0.0:
        return np.eye(3)
    k = axis / n
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle_rad) * kx + (1 - np.cos(angle_rad)) * (kx @ kx)


def object_frame_translation(pose_world: Pose, object_pose: Pose) -> np.ndarray:
    """Translation of a world-frame pose expressed in the object frame."""
    return object_pose.rotation.T @ (pose_world.translation - object_pose.translation)


def object_frame_distance(g_a: Grasp, g_b: Grasp, object_pose: Pose) -> float:
    """Euclidean distance between two world-frame grasps in the object frame.

    Rotation difference is deliberately not folded in; see rotation_geodesic.
    """
    ta = object_frame_translation(g_a.pose, object_pose)
    tb = object_frame_translation(g_b.pose, object_pose)
    return float(np.linalg.norm(ta - tb))


def rotation_geodesic(r_a: np.ndarray, r_b: np.ndarray) -> float:
    """Geodesic angle in [0, pi] between two rotation matrices."""
    rel = r_a.T @ r_b
    cos = (np.trace(rel) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    m = np.asarray(rot, dtype=float)
    tr = np.trace(m)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def pose_to_json(p: Pose) -> dict:
    """Wire form used by all result files: `t` (3 floats) and `q` (w,x,y,z)."""
    return {
        "t": [float(v) for v in p.translation],
        "q": [float(v) for v in matrix_to_quat(p.rotation)],
    }


def pose_from_json(obj: dict) -> Pose:
    return Pose(quat_to_matrix(np.asarray(obj["q"])), np.asarray(obj["t"], dtype=float))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return quat_to_matrix(q / np.linalg.norm(q))
