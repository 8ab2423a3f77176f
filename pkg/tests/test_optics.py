import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquastereo.errors import IndexOutOfPhysicalRange, PointBehindCamera
from aquastereo.geometry import PortPlane
from aquastereo.optics import (
    Camera,
    CameraIntrinsics,
    CameraPose,
    EnvironmentSample,
    IndexCoefficients,
    StereoRig,
    apply_environment,
    project_pinhole,
    unproject_pinhole,
    water_refractive_index,
)
from aquastereo.rigs import rot_x, rot_y

INTR = CameraIntrinsics(500, 500, 320, 320, width=640, height=640)
STRONG = CameraIntrinsics(500, 500, 319.5, 239.5, -0.2, 0.05, 640, 480)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(-1, 500, 10, 10)
    with pytest.raises(ValueError):
        CameraIntrinsics(500, 500, 640, 10, width=640, height=480)
    with pytest.raises(ValueError):
        CameraIntrinsics(500, 500, 10, 10, width=0)
    # r(1 + k1 r^2) folds back before the image corner
    with pytest.raises(ValueError, match="not invertible"):
        CameraIntrinsics(300, 300, 319.5, 239.5, k1=-0.6, width=640, height=480)


def test_pose_rejects_non_rotations():
    with pytest.raises(ValueError):
        CameraPose(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        CameraPose(np.eye(3) * 1.01)
    pose = CameraPose.from_center(rot_y(20), [1.0, 2.0, 3.0])
    assert np.allclose(pose.center, [1, 2, 3])
    assert np.allclose(pose.axis, rot_y(20)[2])


def test_project_examples():
    pose = CameraPose()
    assert np.allclose(project_pinhole(INTR, pose, [0, 0, 7.3]), [320, 320])
    assert np.allclose(project_pinhole(INTR, pose, [0.1, 0, 1]), [370, 320])
    with pytest.raises(PointBehindCamera):
        project_pinhole(INTR, pose, [0.1, 0.2, 0.0])


def test_unproject_principal_point_is_axis():
    pose = CameraPose.from_center(rot_x(5) @ rot_y(-12), [0.3, 0, 0])
    ray = unproject_pinhole(STRONG, pose, (STRONG.cx, STRONG.cy))
    assert np.allclose(ray.direction, pose.axis, atol=1e-15)
    assert np.allclose(ray.origin, pose.center)


def _roundtrip(intr, pose, u, v):
    ray = unproject_pinhole(intr, pose, (u, v))
    return np.hypot(*(project_pinhole(intr, pose, ray.origin + 2.5 * ray.direction) - (u, v)))


@pytest.mark.parametrize("u,v", [(0, 0), (639, 0), (0, 479), (639, 479)])
def test_strong_distortion_corner_roundtrip(u, v):
    assert _roundtrip(STRONG, CameraPose(), u, v) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 639), st.floats(0, 479), st.floats(-0.1, 0.05), st.floats(0.0, 0.02))
def test_roundtrip_property(u, v, k1, k2):
    intr = CameraIntrinsics(450, 460, 319.5, 239.5, k1, k2, 640, 480)
    assert _roundtrip(intr, CameraPose.from_center(rot_y(7), [0.2, 0, 0]), u, v) < 1e-9


def test_unproject_out_of_bounds():
    with pytest.raises(ValueError):
        unproject_pinhole(INTR, CameraPose(), (-0.5, 3))


# -- water index ---------------------------------------------------------------


def test_index_reference_value():
    n = water_refractive_index(EnvironmentSample(20, 0, 0, 589))
    assert n == pytest.approx(1.333, abs=1e-3)
    # tabulated pure water at 20 C, sodium D line
    assert n == pytest.approx(1.33299, abs=5e-5)


def test_constant_model():
    c = IndexCoefficients.constant(1.333)
    for env in (EnvironmentSample(0, 0, 0, 400), EnvironmentSample(30, 40, 900, 700)):
        assert water_refractive_index(env, c) == 1.333


def test_index_gate_and_ranges():
    with pytest.raises(IndexOutOfPhysicalRange):
        water_refractive_index(EnvironmentSample(), IndexCoefficients.constant(1.6))
    with pytest.raises(ValueError):
        EnvironmentSample(temperature=-10)
    with pytest.raises(ValueError):
        EnvironmentSample(wavelength=800)


def test_index_monotonicity():
    h = 1e-3
    for t in np.linspace(0, 30, 7):
        for s in np.linspace(0, 40, 9):
            for d in (0.0, 250.0, 500.0):
                n0 = water_refractive_index(EnvironmentSample(t, s, d, 550))
                assert 1.32 < n0 < 1.37
                assert water_refractive_index(EnvironmentSample(t, s + h, d, 550)) > n0
                if t >= 10:
                    assert water_refractive_index(EnvironmentSample(t + h, s, d, 550)) < n0


# -- rig -----------------------------------------------------------------------


def test_rig_rejects_water_side_camera(water_rig):
    cam = Camera(INTR, CameraPose.from_center(np.eye(3), [0, 0, 0.2]))
    with pytest.raises(ValueError, match="air side"):
        StereoRig(cam, water_rig.right, water_rig.port)
    away = Camera(INTR, CameraPose.from_center(rot_y(180), [0, 0, 0]))
    with pytest.raises(ValueError, match="look"):
        StereoRig(away, water_rig.right, water_rig.port)


def test_rig_camera_lookup(water_rig):
    assert water_rig.camera("L") is water_rig.left
    assert water_rig.camera("right") is water_rig.right
    assert water_rig.other("L") == "right"
    with pytest.raises(ValueError):
        water_rig.camera("middle")


def test_apply_environment_properties(water_rig):
    env = EnvironmentSample(12.0, 34.0, 40.0, 530.0)
    before = water_rig.media
    once = apply_environment(water_rig, env)
    assert water_rig.media == before
    assert apply_environment(once, env) == once
    assert once.media.n_water == water_refractive_index(env)
    assert once.port == water_rig.port and once.left.intrinsics == water_rig.left.intrinsics
    const = water_rig.replace(index_coefficients=IndexCoefficients.constant(1.333))
    assert apply_environment(const, env).media.n_water == 1.333
    fixed = water_rig.with_media(n_water=water_refractive_index(env))
    assert apply_environment(fixed, env) == fixed


def test_rig_equality_is_fieldwise(water_rig):
    other = water_rig.replace(port=PortPlane(water_rig.port.normal.copy(), 0.05, 0.01))
    assert other == water_rig
    assert water_rig.with_media(n_water=1.34) != water_rig
