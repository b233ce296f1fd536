import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handover.predictor import (
    EmptyHistory,
    GraspHistory,
    PredictorParams,
    predict_future,
    stable_suffix,
    vote_momentum,
)
from handover.se3 import Grasp, Pose


def history_from(translations, dt=1.0):
    h = GraspHistory()
    for i, t in enumerate(translations):
        h.append(Grasp(Pose(np.eye(3), np.asarray(t, dtype=float)), 0.04, 0.9), i * dt + dt)
    return h


class TestStableSuffix:
    def test_all_zero(self):
        d = np.zeros((5, 3))
        assert len(stable_suffix(d, 0.03)) == 5

    def test_hand_scan(self):
        d = np.array([[0.05, 0, 0], [0.01, 0, 0], [0.02, 0, 0]])
        out = stable_suffix(d, 0.03)
        assert np.array_equal(out, d[1:])

    def test_last_entry_violation_empty(self):
        d = np.array([[0.01, 0, 0], [0.05, 0, 0]])
        assert len(stable_suffix(d, 0.03)) == 0

    def test_negative_magnitudes_rejected(self):
        # a signed bound would accept this; the magnitude bound must not
        d = np.array([[-0.1, 0, 0]])
        assert len(stable_suffix(d, 0.03)) == 0


class TestVoteMomentum:
    def test_unanimous(self):
        d = np.array([[0.01, 0, 0]] * 3)
        assert vote_momentum(d, 0.005)[0] == pytest.approx(0.01)

    def test_hand_count_negative_majority(self):
        d = np.array([[0.01, 0, 0], [-0.02, 0, 0], [-0.03, 0, 0]])
        assert vote_momentum(d, 0.005)[0] == pytest.approx(-0.025)

    def test_dual_membership_tie_goes_positive(self):
        # both values inside (-delta_p, delta_p): members of both sets, tie -> mean of positives
        d = np.array([[0.004, 0, 0], [-0.004, 0, 0]])
        assert vote_momentum(d, 0.005)[0] == pytest.approx(0.0)

    def test_empty_gives_zero(self):
        assert np.array_equal(vote_momentum(np.zeros((0, 3)), 0.005), np.zeros(3))

    def test_zero_band_all_positive_is_plain_mean(self):
        d = np.array([[0.01, 0.02, 0.005], [0.03, 0.01, 0.015]])
        assert np.allclose(vote_momentum(d, 0.0), d.mean(axis=0))


class TestPredictFuture:
    params = PredictorParams()

    def test_static_history(self):
        h = history_from([[0.1, 0.2, 0.3]] * 4)
        p = predict_future(h, [1, 0, 0], self.params)
        assert np.allclose(p.translation, [0.1, 0.2, 0.3])

    def test_parallel_branch_hand_trace(self):
        h = history_from([[0, 0, 0], [0.01, 0, 0], [0.02, 0, 0], [0.03, 0, 0]])
        p = predict_future(h, [1, 0, 0], self.params)
        assert np.allclose(p.translation, [0.06, 0, 0])

    def test_opposite_branch_hand_trace(self):
        h = history_from([[0, 0, 0], [0.01, 0, 0], [0.02, 0, 0], [0.03, 0, 0]])
        p = predict_future(h, [-1, 0, 0], self.params)
        assert np.allclose(p.translation, [0.04, 0, 0])

    def test_empty_history_raises(self):
        with pytest.raises(EmptyHistory):
            predict_future(GraspHistory(), [1, 0, 0], self.params)

    def test_rotation_copied(self):
        rot = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
        h = GraspHistory()
        h.append(Grasp(Pose(rot, [0, 0, 0]), 0.04, 0.9), 1.0)
        p = predict_future(h, [1, 0, 0], self.params)
        assert np.allclose(p.rotation, rot)

    @given(st.integers(0, 300))
    @settings(max_examples=40, deadline=None)
    def test_translation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-0.2, 0.2, size=(5, 3))
        shift = rng.uniform(-1, 1, 3)
        robot = rng.uniform(-1, 1, 3)
        p0 = predict_future(history_from(pts), robot, self.params)
        p1 = predict_future(history_from(pts + shift), robot, self.params)
        assert np.allclose(p1.translation, p0.translation + shift, atol=1e-12)

    @given(st.integers(0, 300))
    @settings(max_examples=40, deadline=None)
    def test_shift_magnitude_bound(self, seed):
        rng = np.random.default_rng(seed)
        pts = np.cumsum(rng.uniform(-0.05, 0.05, size=(8, 3)), axis=0)
        h = history_from(pts)
        p = predict_future(h, rng.uniform(-1, 1, 3), self.params)
        shift = np.linalg.norm(p.translation - h.entries[-1][0].pose.translation)
        bound = self.params.lambda_parallel * self.params.stability_threshold * np.sqrt(3)
        assert shift <= bound + 1e-12

    def test_history_cap_drops_oldest(self):
        h = GraspHistory(max_length=3)
        for i in range(6):
            h.append(Grasp(Pose(np.eye(3), [0.01 * i, 0, 0]), 0.04, 0.9), i + 1.0)
        assert len(h) == 3
        assert h.entries[0][0].pose.translation[0] == pytest.approx(0.03)

    def test_timestamps_strictly_increasing(self):
        h = history_from([[0, 0, 0]])
        with pytest.raises(ValueError):
            h.append(Grasp(Pose(np.eye(3), [0, 0, 0]), 0.04, 0.9), 0.5)
