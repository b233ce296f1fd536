"""Future grasp position prediction from the tracked-pose history.

The tracked poses form an ordered list; consecutive translation differences
are filtered for stability, the motion direction per axis is decided by
voting with a small perturbation band, and the resulting momentum is scaled
asymmetrically depending on whether the object moves with or against the
robot before being added to the last tracked position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .se3 import Grasp, Pose


class EmptyHistory(Exception):
    pass


@dataclass
class PredictorParams:
    stability_threshold: float = 0.03  # meters, per-axis bound on stable deltas
    perturbation_threshold: float = 0.005  # meters, dual-membership band
    lambda_opposite: float = 1.0
    lambda_parallel: float = 3.0
    max_history: int = 15

    def __post_init__(self):
        if self.perturbation_threshold >= self.stability_threshold:
            raise ValueError("perturbation threshold must be < stability threshold")
        if self.lambda_opposite <= 0 or self.lambda_parallel <= 0:
            raise ValueError("momentum coefficients must be > 0")


@dataclass
class GraspHistory:
    max_length: int = 15
    entries: list[tuple[Grasp, float]] = field(default_factory=list)

    def append(self, grasp: Grasp, timestamp: float):
        if self.entries and timestamp <= self.entries[-1][1]:
            raise ValueError("timestamps must be strictly increasing")
        self.entries.append((grasp, timestamp))
        if len(self.entries) > self.max_length:
            del self.entries[0]

    def clear(self):
        self.entries.clear()

    def __len__(self):
        return len(self.entries)

    def deltas(self) -> np.ndarray:
        """Consecutive translation differences, shape (len-1, 3)."""
        if len(self.entries) < 2:
            return np.zeros((0, 3))
        ts = np.stack([g.pose.translation for g, _ in self.entries])
        return np.diff(ts, axis=0)


def stable_suffix(deltas: np.ndarray, stability_threshold: float) -> np.ndarray:
    """Longest contiguous suffix where every axis satisfies |delta| < threshold."""
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 3)
    start = len(deltas)
    for i in range(len(deltas) - 1, -1, -1):
        if np.all(np.abs(deltas[i]) < stability_threshold):
            start = i
        else:
            break
    return deltas[start:]


def vote_momentum(stable_deltas: np.ndarray, perturbation_threshold: float) -> np.ndarray:
    """Per-axis direction voting: the side with more members wins, ties going
    to the positive side; values inside the perturbation band count for both."""
    stable_deltas = np.asarray(stable_deltas, dtype=float).reshape(-1, 3)
    if len(stable_deltas) == 0:
        return np.zeros(3)
    out = np.zeros(3)
    for axis in range(3):
        vals = stable_deltas[:, axis]
        pos = vals[vals > -perturbation_threshold]
        neg = vals[vals < perturbation_threshold]
        out[axis] = pos.mean() if len(pos) >= len(neg) else neg.mean()
    return out


def predict_future(
    history: GraspHistory, robot_motion: np.ndarray, params: PredictorParams
) -> Pose:
    """Last tracked pose shifted by the direction-voted momentum, scaled by the
    parallel or opposite coefficient; rotation is copied unchanged."""
    if len(history) == 0:
        raise EmptyHistory("cannot predict from an empty grasp history")
    momentum = vote_momentum(
        stable_suffix(history.deltas(), params.stability_threshold),
        params.perturbation_threshold,
    )
    robot_motion = np.asarray(robot_motion, dtype=float).reshape(3)
    nm = np.linalg.norm(momentum)
    nr = np.linalg.norm(robot_motion)
    if nm == 0.0 or nr == 0.0:
        cos = 1.0  # zero vectors treated as aligned
    else:
        cos = float(momentum @ robot_motion / (nm * nr))
    lam = params.lambda_opposite if cos < 0 else params.lambda_parallel
    last_pose = history.entries[-1][0].pose
    return Pose(last_pose.rotation, last_pose.translation + lam * momentum)
