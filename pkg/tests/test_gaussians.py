import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact_forge.errors import MalformedPly, NonFiniteValue, UnsupportedShDegree
from artifact_forge.gaussians import (
    GaussianCloud, PinholeCamera, activate, load_ply, ply_property_names, save_ply,
)
from artifact_forge.degrade import compress_scales
from artifact_forge.toy import random_cloud
from oracles import gs_names, ply_bytes


def _row(pos, dc=(0.1, 0.2, 0.3), opacity=0.5, scale=(-1.0, -1.5, -2.0), rot=(1.0, 0.0, 0.0, 0.0), rest=()):
    return (*pos, 0.0, 0.0, 0.0, *dc, *rest, opacity, *scale, *rot)


def test_hand_built_fixture_reads_back_exactly(tmp_path):
    rows = [_row((0, 0, 0)), _row((1, 0, 0), opacity=-2.0), _row((0, 1, 0), rot=(0.0, 0.0, 1.0, 0.0))]
    path = tmp_path / "three.ply"
    path.write_bytes(ply_bytes(rows, gs_names()))
    cloud = load_ply(path)
    assert cloud.n == 3 and cloud.sh_degree == 0
    np.testing.assert_array_equal(cloud.positions, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(cloud.opacity_logits, np.float32([0.5, -2.0, 0.5]))
    np.testing.assert_array_equal(cloud.log_scales[0], np.float32([-1.0, -1.5, -2.0]))
    np.testing.assert_array_equal(cloud.rotations[2], [0, 0, 1, 0])
    np.testing.assert_array_equal(cloud.sh_coeffs[1, :, 0], np.float32([0.1, 0.2, 0.3]))


def test_rest_coefficients_are_channel_major(tmp_path):
    # degree 1: 9 rest values, channel 0 owns f_rest_0..2
    rest = tuple(float(i) for i in range(9))
    path = tmp_path / "deg1.ply"
    path.write_bytes(ply_bytes([_row((0, 0, 1), rest=rest)], gs_names(9)))
    cloud = load_ply(path)
    assert cloud.sh_degree == 1
    np.testing.assert_array_equal(cloud.sh_coeffs[0, 0, 1:], [0, 1, 2])
    np.testing.assert_array_equal(cloud.sh_coeffs[0, 2, 1:], [6, 7, 8])


def test_missing_opacity_is_malformed(tmp_path):
    names = [n for n in gs_names() if n != "opacity"]
    row = [v for n, v in zip(gs_names(), _row((0, 0, 0))) if n != "opacity"]
    path = tmp_path / "bad.ply"
    path.write_bytes(ply_bytes([row], names))
    with pytest.raises(MalformedPly):
        load_ply(path)


def test_ascii_and_truncated_files_are_rejected(tmp_path):
    p = tmp_path / "ascii.ply"
    p.write_bytes(ply_bytes([], gs_names(), fmt="ascii 1.0"))
    with pytest.raises(MalformedPly):
        load_ply(p)
    good = ply_bytes([_row((0, 0, 0))], gs_names())
    p.write_bytes(good[:-5])
    with pytest.raises(MalformedPly):
        load_ply(p)
    p.write_bytes(b"not a ply\n")
    with pytest.raises(MalformedPly):
        load_ply(p)


def test_non_finite_and_bad_degree(tmp_path):
    p = tmp_path / "nan.ply"
    p.write_bytes(ply_bytes([_row((float("nan"), 0, 0))], gs_names()))
    with pytest.raises(NonFiniteValue):
        load_ply(p)
    p.write_bytes(ply_bytes([_row((0, 0, 0), rest=(0.0,) * 6)], gs_names(6)))
    with pytest.raises(UnsupportedShDegree):
        load_ply(p)


def test_quaternions_normalized_on_load(tmp_path):
    p = tmp_path / "q.ply"
    p.write_bytes(ply_bytes([_row((0, 0, 0), rot=(2.0, 0.0, 0.0, 0.0)), _row((1, 1, 1), rot=(1.0, 1.0, 1.0, 1.0))],
                            gs_names()))
    cloud = load_ply(p)
    assert np.allclose(np.linalg.norm(cloud.rotations, axis=1), 1.0, atol=1e-5)
    assert cloud.normalized() is cloud  # idempotent


def test_empty_cloud_round_trip(tmp_path):
    p = tmp_path / "empty.ply"
    save_ply(GaussianCloud.empty(), p)
    assert b"element vertex 0" in p.read_bytes()
    back = load_ply(p)
    assert back.n == 0 and back == GaussianCloud.empty()


def test_header_property_order(tmp_path):
    p = tmp_path / "c.ply"
    save_ply(random_cloud(2, seed=0, sh_degree=3), p)
    head = p.read_bytes().split(b"end_header")[0].decode()
    props = [ln.split()[-1] for ln in head.splitlines() if ln.startswith("property")]
    assert props == ply_property_names(3) and len(props) == 62


def test_thousand_splat_round_trip_bit_exact(tmp_path):
    cloud = random_cloud(1000, seed=11, sh_degree=3)
    p = tmp_path / "big.ply"
    save_ply(cloud, p)
    assert load_ply(p) == cloud


def test_degraded_round_trip(tmp_path):
    cloud = compress_scales(random_cloud(20, seed=2))
    p = tmp_path / "d.ply"
    save_ply(cloud, p)
    assert load_ply(p) == cloud


finite32 = st.floats(-50, 50, width=32, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 3), st.data())
def test_round_trip_property(tmp_path_factory, n, deg, data):
    b = (deg + 1) ** 2
    arr = lambda *shape: np.array(data.draw(st.lists(finite32, min_size=int(np.prod(shape)),
                                                     max_size=int(np.prod(shape)))), dtype=np.float32).reshape(shape)
    q = np.random.default_rng(n).standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    cloud = GaussianCloud(arr(n, 3), arr(n, 3), q, arr(n), arr(n, 3, b)).normalized()
    p = tmp_path_factory.mktemp("rt") / "c.ply"
    save_ply(cloud, p)
    assert load_ply(p) == cloud


def test_activation_values():
    cloud = GaussianCloud([[0, 0, 0]] * 3, [[0, 0, 0], [-0.5] * 3, [1, 1, 1]], [[1, 0, 0, 0]] * 3,
                          [0.0, 2.0, -2.0], np.zeros((3, 3, 1)))
    act = activate(cloud)
    assert act.opacities[0] == 0.5
    assert act.scales[0, 0] == 1.0
    assert abs(act.scales[1, 0] - 0.6065306597126334) < 1e-12
    assert abs(act.opacities[1] - 1 / (1 + math.exp(-2))) < 1e-15


@given(st.floats(-30, 30), st.floats(1e-3, 5))
def test_opacity_activation_monotone(x, dx):
    c = GaussianCloud([[0, 0, 0]] * 2, np.zeros((2, 3)), [[1, 0, 0, 0]] * 2, [x, x + dx], np.zeros((2, 3, 1)))
    o = activate(c).opacities
    if np.float32(x) != np.float32(x + dx):
        assert o[1] > o[0]


def test_cloud_is_immutable_and_validates_shapes():
    cloud = random_cloud(3)
    with pytest.raises(ValueError):
        cloud.positions[0, 0] = 1.0
    with pytest.raises(ValueError):
        GaussianCloud(np.zeros((2, 3)), np.zeros((3, 3)), np.zeros((2, 4)), np.zeros(2), np.zeros((2, 3, 1)))
    with pytest.raises(UnsupportedShDegree):
        GaussianCloud(np.zeros((1, 3)), np.zeros((1, 3)), [[1, 0, 0, 0]], [0], np.zeros((1, 3, 5)))


def test_camera_invariants():
    with pytest.raises(ValueError):
        PinholeCamera(np.diag([1.0, 1.0, -1.0]), np.zeros(3), 10, 10, 1, 1, 4, 4)
    with pytest.raises(ValueError):
        PinholeCamera(np.eye(3), np.zeros(3), 0, 10, 1, 1, 4, 4)
    cam = PinholeCamera.look_at((0, 0, -3), (0, 0, 0), fx=10, width=9, height=9)
    np.testing.assert_allclose(cam.forward, [0, 0, 1])
    assert (cam.cx, cam.cy) == (4.0, 4.0)
