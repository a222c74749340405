import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from artifact_forge.errors import DataError, SegmentTooShort, TooFewFrames
from artifact_forge.trajectory import (
    CameraTrajectory, FilterConfig, Intrinsics, filter_trajectory, kinematics, longest_run, mad,
    mad_filter, rotvec,
)
from conftest import smooth_trajectory, uniform_motion
from oracles import brute_filter, brute_mad_flags, brute_metrics

K = Intrinsics(40.0, 40.0, 15.5, 15.5, 32, 32)


def _traj(centers, rots=None):
    centers = np.asarray(centers, dtype=np.float64)
    if rots is None:
        rots = np.broadcast_to(np.eye(3), (len(centers), 3, 3))
    return CameraTrajectory(rots, centers, K)


def test_straight_line_constant_speed():
    rep = kinematics(_traj([(t, 0, 0) for t in range(10)]))
    np.testing.assert_array_equal(rep.jerk_norm, 0.0)
    np.testing.assert_array_equal(rep.angular_accel, 0.0)
    np.testing.assert_array_equal(rep.direction_cos, 1.0)
    assert rep.mean_step == 1.0
    assert (len(rep.velocity), len(rep.acceleration), len(rep.jerk)) == (9, 8, 7)
    assert (len(rep.angular_velocity), len(rep.angular_accel), len(rep.direction_cos)) == (9, 8, 8)


def test_constant_rate_rotation_about_z():
    theta = 0.1
    rots = Rotation.from_rotvec([(0, 0, theta * t) for t in range(8)]).as_matrix()
    rep = kinematics(_traj(np.zeros((8, 3)), rots))
    np.testing.assert_allclose(rep.angular_velocity, np.tile([0, 0, theta], (7, 1)), atol=1e-12)
    np.testing.assert_allclose(rep.angular_accel, 0.0, atol=1e-12)
    # a fixed centre has no defined direction cosine
    assert np.all(np.isnan(rep.direction_cos))


def test_velocity_reversal_is_flagged():
    centers = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (1, 0, 0), (0, 0, 0), (-1, 0, 0)]
    rep = kinematics(_traj(centers))
    assert rep.direction_cos[1] == -1.0
    res = filter_trajectory(_traj(centers), FilterConfig(min_segment_length=1, use_jerk=False))
    assert res.rejected_by["direction"][1]
    assert not res.valid[1]


def test_too_few_frames():
    with pytest.raises(TooFewFrames):
        kinematics(_traj(np.zeros((3, 3))))


@pytest.mark.parametrize("angle", [0.0, 1e-10, 1e-4, 0.5, 2.0, np.pi - 1e-9, np.pi])
def test_rotvec_matches_scipy(angle):
    rng = np.random.default_rng(int(angle * 1000))
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    m = Rotation.from_rotvec(axis * angle).as_matrix()
    got = rotvec(m)
    want = Rotation.from_matrix(m).as_rotvec()
    if angle > np.pi - 1e-6:
        # the axis sign is ambiguous at pi
        assert np.allclose(got, want, atol=1e-6) or np.allclose(got, -want, atol=1e-6)
    else:
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_mad_constant_and_spike():
    assert not mad_filter([2.5] * 7).any()
    np.testing.assert_array_equal(mad_filter([1, 1, 1, 1, 100], 4.0), [False] * 4 + [True])
    assert mad([1, 2, 3, 4, 100]) == (3.0, 1.0)
    with pytest.raises(DataError):
        mad_filter([])


def test_mad_gaussian_rejection_rate():
    x = np.random.default_rng(0).standard_normal(10_000)
    assert mad_filter(x, 5.0).mean() < 0.01


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40), st.floats(0.5, 8))
def test_mad_filter_matches_brute_force(values, lam):
    assert mad_filter(values, lam).tolist() == brute_mad_flags(values, lam)


def test_longest_run_ties_and_edges():
    assert longest_run([True, True, False, True, True]) == (0, 2)
    assert longest_run([False, True, True, True]) == (1, 4)
    assert longest_run([False, False]) == (0, 0)
    assert longest_run([]) == (0, 0)


def test_uniform_motion_keeps_full_range():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(20, 100))
        res = filter_trajectory(uniform_motion(rng, n))
        assert res.segment == (0, n) and res.valid.all()


def test_constant_velocity_full_segment():
    rots = Rotation.from_rotvec([(0, 0.02 * t, 0) for t in range(30)]).as_matrix()
    res = filter_trajectory(_traj([(0.3 * t, 0.1 * t, 0) for t in range(30)], rots))
    assert res.segment == (0, 30)


def _line_with_spike(n, spikes, mag=3.0):
    c = np.array([(0.2 * t, 0.0, 0.0) for t in range(n)])
    c[:, 1] = 0.01 * np.sin(0.3 * np.arange(n))
    for i in spikes:
        c[i, 2] += mag
    return _traj(c)


def test_single_spike_excluded_and_matches_brute_force():
    traj = _line_with_spike(30, [10])
    res = filter_trajectory(traj, FilterConfig(min_segment_length=1))
    valid, seg = brute_filter(traj.rotations, traj.centers)
    assert res.valid.tolist() == valid
    assert res.segment == seg
    a, b = res.segment
    assert not (a <= 10 < b)
    # jerk support of a spike at i is {i-3 .. i}
    assert set(np.flatnonzero(res.rejected_by["jerk"])) <= {7, 8, 9, 10}


def test_two_spikes_leave_middle_run():
    traj = _line_with_spike(40, [5, 25])
    res = filter_trajectory(traj, FilterConfig(min_segment_length=1))
    valid, seg = brute_filter(traj.rotations, traj.centers)
    assert res.segment == seg
    a, b = res.segment
    assert 5 < a and b <= 25 - 3


def test_segment_too_short_carries_result():
    traj = _line_with_spike(20, [10])
    with pytest.raises(SegmentTooShort) as info:
        filter_trajectory(traj, FilterConfig(min_segment_length=15))
    assert info.value.result.segment[1] - info.value.result.segment[0] < 15


def test_randomized_against_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(25):
        n = int(rng.integers(20, 60))
        traj, _ = smooth_trajectory(rng, n, n_spikes=int(rng.integers(0, 3)), rot_spikes=int(rng.integers(0, 2)))
        res = filter_trajectory(traj, FilterConfig(min_segment_length=1))
        valid, seg = brute_filter(traj.rotations, traj.centers)
        assert res.valid.tolist() == valid
        assert res.segment == seg
        jerk, ang, _ = brute_metrics(traj.rotations, traj.centers)
        rep = kinematics(traj)
        np.testing.assert_allclose(rep.jerk_norm, jerk, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(rep.angular_accel, ang, rtol=1e-7, atol=1e-12)


def test_scale_and_rigid_invariance():
    rng = np.random.default_rng(7)
    traj, _ = smooth_trajectory(rng, 50, n_spikes=2, rot_spikes=1)
    base = filter_trajectory(traj, FilterConfig(min_segment_length=1))
    for s in (0.001, 0.5, 3.7, 1000.0):
        scaled = CameraTrajectory(traj.rotations, traj.centers * s, K)
        res = filter_trajectory(scaled, FilterConfig(min_segment_length=1))
        assert np.array_equal(res.valid, base.valid) and res.segment == base.segment
    q = Rotation.from_rotvec([0.3, -1.1, 0.4]).as_matrix()
    moved = CameraTrajectory(traj.rotations @ q.T, traj.centers @ q.T + [5.0, -2.0, 1.0], K)
    res = filter_trajectory(moved, FilterConfig(min_segment_length=1))
    assert np.array_equal(res.valid, base.valid) and res.segment == base.segment
    np.testing.assert_allclose(kinematics(moved).jerk_norm, base.report.jerk_norm, rtol=1e-9, atol=1e-12)


def test_direction_mad_option_and_disabled_metrics():
    traj = _line_with_spike(30, [10])
    off = FilterConfig(use_jerk=False, use_angular=False, use_direction=False, min_segment_length=1)
    assert filter_trajectory(traj, off).valid.all()
    on = FilterConfig(use_direction_mad=True, min_segment_length=1)
    assert "direction_mad" in filter_trajectory(traj, on).rejected_by
    with pytest.raises(ValueError):
        FilterConfig(lam=0)


def test_json_round_trip(tmp_path):
    traj, _ = smooth_trajectory(np.random.default_rng(1), 12)
    p = tmp_path / "t.json"
    traj.save(p)
    back = CameraTrajectory.load(p)
    np.testing.assert_array_equal(back.centers, traj.centers)
    np.testing.assert_array_equal(back.rotations, traj.rotations)
    assert back.intrinsics == traj.intrinsics
    json.dumps(filter_trajectory(traj, FilterConfig(min_segment_length=1)).to_json())
    with pytest.raises(DataError):
        CameraTrajectory.from_json({"frames": []})
    with pytest.raises(DataError):
        CameraTrajectory(np.full((1, 3, 3), 2.0), np.zeros((1, 3)), K)
