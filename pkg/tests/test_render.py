import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dreamrace.env import Gate, Track, load_track
from dreamrace.errors import ConfigurationError, NumericError
from dreamrace.quad import (
    QuadState,
    quat_conj,
    quat_from_axis_angle,
    quat_from_euler,
    quat_mul,
)
from dreamrace.render import (
    DECOY_COLOR,
    GRID_COLOR,
    GROUND_COLOR,
    TARGET_COLOR,
    CameraModel,
    camera_axis_world,
    camera_rotation,
    gaze_angle,
    is_gate_pixel,
    read_ppm,
    read_raw,
    render,
    to_uint8,
    write_ppm,
    write_raw,
)

CAM = CameraModel()


def one_gate_track(center, yaw=0.0, decorative=False):
    gates = [Gate(center, yaw_degrees=yaw, decorative=decorative)]
    if decorative:
        gates.append(Gate([40.0, 40.0, 2.0]))
    return Track("probe", gates, [-50, -50, 0], [50, 50, 20], [0, 0, 1])


def is_background(img):
    ground = np.all(img == GROUND_COLOR, axis=-1) | np.all(img == GRID_COLOR, axis=-1)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    sky = (r < g) & (g < b)
    return ground | sky


def project(points_cam, f):
    return np.stack([-f * points_cam[:, 1] / points_cam[:, 0], -f * points_cam[:, 2] / points_cam[:, 0]], axis=1)


class TestGateAhead:
    track = one_gate_track([2.0, 0.0, 1.5])
    state = QuadState.hover_at([0.0, 0.0, 1.5])

    def test_center_is_aperture(self):
        img = render(self.state, self.track)
        h, w = CAM.height // 2, CAM.width // 2
        for i, j in [(h - 1, w - 1), (h - 1, w), (h, w - 1), (h, w)]:
            assert not is_gate_pixel(img)[i, j]
        assert is_background(img)[h, w]

    def test_coverage_matches_projected_corners(self):
        img = render(self.state, self.track)
        mask = is_gate_pixel(img)
        f = CAM.focal
        gate = self.track.gates[0]
        front_rects, hulls = [], []
        signs = np.array([[a, b, c] for a in (-1, 1) for b in (-1, 1) for c in (-1, 1)], float)
        for c, hs in gate.frame_boxes():
            corners = gate.to_world(c + signs * hs) - self.state.p  # camera frame equals world here
            uv = project(corners, f)
            hulls.append((uv.min(0), uv.max(0)))
            front = uv[corners[:, 0] == corners[:, 0].min()]
            front_rects.append((front.min(0), front.max(0)))
        offs = (np.arange(11) + 0.5) / 11 - 0.5
        for i in range(CAM.height):
            for j in range(CAM.width):
                cx, cy = j + 0.5 - CAM.width / 2, i + 0.5 - CAM.height / 2
                samples = np.array([[cx + a, cy + b] for a in offs for b in offs])
                inside_front = any(np.any(np.all((s >= lo) & (s <= hi), axis=1)) for lo, hi in front_rects for s in [samples])
                near_hull = any(cx + 0.5 > lo[0] and cx - 0.5 < hi[0] and cy + 0.5 > lo[1] and cy - 0.5 < hi[1] for lo, hi in hulls)
                if inside_front:
                    assert mask[i, j], (i, j)
                if not near_hull:
                    assert not mask[i, j], (i, j)
        assert mask.sum() >= 8
        rows, cols = np.nonzero(mask)
        assert abs(rows.mean() - 7.5) < 1e-9 and abs(cols.mean() - 7.5) < 1e-9


def test_gates_behind_camera_leave_only_background():
    track = load_track("figure8_decoy")
    s = QuadState.hover_at([8.5, 0.0, 1.5])  # facing +x, every gate behind
    img = render(s, track)
    assert np.all(is_background(img))
    assert not is_gate_pixel(img).any() and not is_gate_pixel(img, decoy=True).any()


@pytest.mark.parametrize("track_name", ["single_gate", "figure8_decoy"])
def test_roll_180_flips_both_axes(track_name):
    track = load_track(track_name)
    base = quat_from_euler(0.0, 0.1, 0.3)
    s = QuadState([-1.0, -0.5, 1.4], base, [0, 0, 0])
    rolled = QuadState(s.p, quat_mul(base, [0.0, 1.0, 0.0, 0.0]), s.v)
    a = render(s, track, CameraModel(24, 24))
    b = render(rolled, track, CameraModel(24, 24))
    np.testing.assert_array_equal(b, a[::-1, ::-1])
    assert is_gate_pixel(a).any()


class TestCameraAxis:
    def test_identity(self):
        np.testing.assert_array_equal(camera_axis_world(QuadState.hover_at([0, 0, 1])), [1.0, 0.0, 0.0])

    def test_yaw_ninety(self):
        s = QuadState.hover_at([0, 0, 1], yaw=math.pi / 2)
        np.testing.assert_allclose(camera_axis_world(s), [0.0, 1.0, 0.0], atol=1e-15)

    def test_random_attitudes_against_quaternion_sandwich(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            m = quat_from_axis_angle(rng.normal(size=3), rng.uniform(-0.5, 0.5))
            cam = CameraModel(mount_rotation=tuple(m))
            axis = camera_axis_world(QuadState([0, 0, 0], q, [0, 0, 0]), cam)
            qm = quat_mul(q, m)
            oracle = quat_mul(quat_mul(qm, [0.0, 1.0, 0.0, 0.0]), quat_conj(qm))[1:]
            assert abs(np.linalg.norm(axis) - 1.0) < 1e-12
            np.testing.assert_allclose(axis, oracle, atol=1e-12)


class TestGaze:
    def test_look_at_perpendicular_opposite(self):
        gates = {0.0: Gate([5.0, 0.0, 1.0]), math.pi / 2: Gate([2.0, 3.0, 1.0]), math.pi: Gate([-5.0, 0.0, 1.0])}
        for t in np.linspace(0.0, 1.5, 16):
            s = QuadState([t, 0.0, 1.0], [1, 0, 0, 0], [2.0, 0.0, 0.0])
            for expected, gate in gates.items():
                if expected == math.pi / 2:
                    gate = Gate([t, 3.0, 1.0])
                assert gaze_angle(s, gate) == expected

    def test_range(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            q = rng.normal(size=4)
            s = QuadState(rng.normal(size=3), q / np.linalg.norm(q), [0, 0, 0])
            assert 0.0 <= gaze_angle(s, Gate(rng.normal(size=3) * 4)) <= math.pi

    def test_coincident(self):
        with pytest.raises(NumericError):
            gaze_angle(QuadState.hover_at([1, 2, 3]), Gate([1, 2, 3]))


def test_decoys_use_distinct_color():
    track = load_track("figure8_decoy")
    s = QuadState.hover_at([0.0, 1.5, 1.5], yaw=math.pi / 2)  # facing the +y decoy
    img = render(s, track)
    assert is_gate_pixel(img, decoy=True).any()
    assert not np.array_equal(DECOY_COLOR, TARGET_COLOR)
    assert all(not g.decorative for g in track.targets)


def test_pure_and_deterministic():
    track = load_track("circle")
    s = QuadState([4.0, -2.0, 1.6], quat_from_euler(0.2, -0.1, 1.0), [1, 2, 3])
    a = render(s, track)
    b = render(s.copy(), track)
    assert a.tobytes() == b.tobytes()


def test_published_resolution():
    img = render(QuadState.hover_at([0, 0, 1.5]), load_track("single_gate"), CameraModel(64, 64))
    assert img.shape == (64, 64, 3)
    assert is_gate_pixel(img).sum() > 50


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1),
    st.tuples(st.floats(-8, 8), st.floats(-8, 8), st.floats(-1, 6)),
)
def test_pixels_valid_for_any_state(q, p):
    q = np.array(q) / np.linalg.norm(q)
    img = render(QuadState(p, q, [0, 0, 0]), load_track("figure8_decoy"))
    assert np.all(np.isfinite(img))
    assert img.min() >= 0.0 and img.max() <= 1.0
    np.testing.assert_array_equal(to_uint8(img) / 255.0, img)


@settings(max_examples=300, deadline=None)
@given(
    dist=st.floats(0.5, 6.0),
    u=st.floats(-0.999, 0.999),
    v=st.floats(-0.999, 0.999),
    gate_yaw=st.floats(-180, 180),
    roll=st.floats(-0.6, 0.6),
    pitch=st.floats(-0.6, 0.6),
    yaw=st.floats(-3.1, 3.1),
)
def test_visible_gate_always_has_a_pixel(dist, u, v, gate_yaw, roll, pitch, yaw):
    q = quat_from_euler(roll, pitch, yaw)
    p = np.array([0.0, 0.0, 3.0])
    f = CAM.focal
    # pixel-plane point (u, v) in units of the half image, back-projected to a ray
    ray = np.array([f, -u * CAM.width / 2, -v * CAM.height / 2])
    ray /= np.linalg.norm(ray)
    s = QuadState(p, q, [0, 0, 0])
    center = p + camera_rotation(s, CAM) @ (dist * ray)
    track = one_gate_track(center, yaw=gate_yaw)
    img = render(s, track)
    assert is_gate_pixel(img).any()


class TestCameraModel:
    def test_resolution_floor(self):
        with pytest.raises(ConfigurationError):
            CameraModel(4, 16)

    def test_fov_range(self):
        with pytest.raises(ConfigurationError):
            CameraModel(horizontal_fov=175.0)


class TestDumps:
    def test_ppm_round_trip(self, tmp_path):
        img = render(QuadState.hover_at([0, 0, 1.5]), load_track("single_gate"))
        write_ppm(tmp_path / "a.ppm", img)
        np.testing.assert_array_equal(read_ppm(tmp_path / "a.ppm"), to_uint8(img))

    def test_raw_layout(self, tmp_path):
        img = np.random.default_rng(0).random((9, 12, 3))
        write_raw(tmp_path / "a.raw", img)
        raw = (tmp_path / "a.raw").read_bytes()
        assert struct.unpack("<II", raw[:8]) == (9, 12)
        assert len(raw) == 8 + 9 * 12 * 3 * 4
        first = struct.unpack("<fff", raw[8:20])
        np.testing.assert_allclose(first, img[0, 0], rtol=1e-7)
        np.testing.assert_allclose(read_raw(tmp_path / "a.raw"), img.astype(np.float32), rtol=0)
