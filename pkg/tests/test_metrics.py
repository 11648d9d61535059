import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cifuse.metrics import (
    TrackRecord,
    assign_truth_target,
    count_accuracy,
    mncm,
    mse,
    sum_mse,
)
from cifuse.network import GroundTruth, TargetTruth


def make_truth(states_per_target, dt=1.0, births=None):
    """GroundTruth from explicit per-target state arrays starting at step 0."""
    targets = []
    n_steps = max(len(s) for s in states_per_target)
    for idx, states in enumerate(states_per_target):
        states = np.asarray(states, dtype=float)
        birth = 0.0 if births is None else births[idx]
        first = int(round(birth / dt))
        targets.append(
            TargetTruth(idx, birth, (first + len(states)) * dt, first, states)
        )
    times = np.arange(n_steps) * dt
    return GroundTruth(dt, times, tuple(targets))


def record(means, covs=None, times=None, **kwargs):
    means = np.asarray(means, dtype=float)
    k, n = means.shape
    if covs is None:
        covs = np.broadcast_to(np.eye(n), (k, n, n))
    if times is None:
        times = np.arange(k, dtype=float)
    defaults = dict(source="node:1", algorithm="rbpf")
    defaults.update(kwargs)
    return TrackRecord(times=times, means=means, covs=np.asarray(covs, dtype=float), **defaults)


class TestTrackRecord:
    def test_rejects_nonincreasing_times(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            record(np.zeros((3, 2)), times=np.array([0.0, 1.0, 1.0]))

    def test_rejects_misaligned_covs(self):
        with pytest.raises(ValueError):
            TrackRecord("s", "a", [0.0, 1.0], np.zeros((2, 2)), np.zeros((1, 2, 2)))


class TestMse:
    def test_perfect_estimates(self):
        states = np.tile([1.0, 2.0, 0.1, 0.0], (5, 1))
        truth = make_truth([states])
        rec = record(states)
        assert mse(rec, truth) == 0.0

    def test_constant_offset_squares(self):
        states = np.zeros((4, 4))
        truth = make_truth([states])
        means = states.copy()
        means[:, 0] += 0.3
        assert mse(record(means), truth) == pytest.approx(0.09, rel=1e-12)

    def test_scripted_three_step_hand_value(self):
        truth_states = np.array(
            [[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]]
        )
        est = np.array([[0.5, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [2.0, 0.0, 1.0, 1.0]])
        # Squared errors per step: 0.25, 1.0, 2.0 -> mean 13/12.
        truth = make_truth([truth_states])
        assert mse(record(est), truth) == pytest.approx(13.0 / 12.0, rel=1e-12)

    def test_position_only_variant(self):
        truth_states = np.zeros((3, 4))
        est = np.zeros((3, 4))
        est[:, 2] = 5.0  # velocity error only
        truth = make_truth([truth_states])
        assert mse(record(est), truth, position_only=True) == 0.0
        assert mse(record(est), truth) == pytest.approx(25.0)

    def test_empty_overlap_is_hard_error(self):
        truth = make_truth([np.zeros((2, 4))])
        rec = record(np.zeros((2, 4)), times=np.array([100.0, 101.0]))
        with pytest.raises(ValueError):
            mse(rec, truth, target_index=0)

    def test_assignment_picks_nearest_truth(self):
        a = np.tile([0.0, 0.0, 0.0, 0.0], (4, 1))
        b = np.tile([10.0, 10.0, 0.0, 0.0], (4, 1))
        truth = make_truth([a, b])
        rec = record(b + 0.01)
        assert assign_truth_target(rec, truth) == 1

    def test_sum_mse_adds_assigned_tracks(self):
        a = np.tile([0.0, 0.0, 0.0, 0.0], (4, 1))
        b = np.tile([10.0, 10.0, 0.0, 0.0], (4, 1))
        truth = make_truth([a, b])
        rec_a = record(a + 0.1)
        rec_b = record(b + 0.2)
        total = sum_mse([rec_a, rec_b], truth)
        assert total == pytest.approx(4 * 0.01 + 4 * 0.04, rel=1e-9)

    def test_permutation_invariance_against_static_truth(self, rng):
        states = np.tile([1.0, -1.0, 0.0, 0.0], (6, 1))
        truth = make_truth([states])
        means = rng.normal(size=(6, 4))
        base = mse(record(means), truth)
        perm = rng.permutation(6)
        assert mse(record(means[perm]), truth) == pytest.approx(base, rel=1e-12)


class TestMncm:
    def test_identity_covariances(self):
        rec = record(np.zeros((3, 4)))
        assert mncm(rec) == pytest.approx(1.0)

    def test_alternating_norms_average(self):
        covs = np.stack([np.eye(2), 3.0 * np.eye(2)] * 2)
        rec = record(np.zeros((4, 2)), covs=covs)
        assert mncm(rec) == pytest.approx(2.0)

    def test_single_step_spectral_norm(self):
        rec = record(np.zeros((1, 2)), covs=np.diag([1.0, 4.0])[None])
        assert mncm(rec) == pytest.approx(4.0)

    def test_norm_of_mean_mode(self):
        covs = np.stack([np.diag([1.0, 0.0]) + 1e-12 * np.eye(2), np.diag([0.0, 1.0]) + 1e-12 * np.eye(2)])
        rec = record(np.zeros((2, 2)), covs=covs)
        assert mncm(rec, mode="norm-of-mean") == pytest.approx(0.5, abs=1e-9)
        assert mncm(rec) == pytest.approx(1.0, abs=1e-9)

    @given(st.floats(1.0, 100.0))
    def test_monotone_under_inflation(self, c):
        covs = np.stack([np.diag([1.0, 2.0]), np.diag([0.5, 3.0])])
        rec = record(np.zeros((2, 2)), covs=covs)
        inflated = record(np.zeros((2, 2)), covs=c * covs)
        assert mncm(inflated) == pytest.approx(c * mncm(rec), rel=1e-9)

    def test_permutation_invariance(self, rng):
        covs = np.stack([random_cov(rng) for _ in range(5)])
        rec = record(np.zeros((5, 3)), covs=covs)
        perm = rng.permutation(5)
        shuffled = record(np.zeros((5, 3)), covs=covs[perm])
        assert mncm(shuffled) == pytest.approx(mncm(rec), rel=1e-12)


def random_cov(rng):
    a = rng.normal(size=(3, 3))
    return a @ a.T + 0.5 * np.eye(3)


class TestCountAccuracy:
    def test_perfect_stream(self):
        assert count_accuracy([1, 2, 3], [1, 2, 3]) == (1.0, 1.0)

    def test_always_over_by_one(self):
        exact, within = count_accuracy([2, 3, 4], [1, 2, 3])
        assert exact == 0.0 and within == 1.0

    def test_scripted_mixed_stream(self):
        est = [1, 1, 3, 4, 0]
        ref = [1, 2, 2, 4, 2]
        exact, within = count_accuracy(est, ref)
        assert exact == pytest.approx(2 / 5)
        assert within == pytest.approx(4 / 5)

    def test_misaligned_streams_error(self):
        with pytest.raises(ValueError):
            count_accuracy([1, 2], [1, 2, 3])
