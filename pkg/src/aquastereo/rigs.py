"""Reference rigs used by the simulator defaults, the CLI and the test-suite."""

import numpy as np

from .geometry import MediaIndices, PortPlane
from .optics import Camera, CameraIntrinsics, CameraPose, IndexCoefficients, StereoRig

WATER = MediaIndices(1.0, 1.49, 1.33)
VACUUM = MediaIndices(1.0, 1.0, 1.0)


def rot_x(deg):
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg):
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def tilted_normal(tilt_deg):
    """Port normal tilted about the x axis (the baseline direction)."""
    return rot_x(-tilt_deg) @ np.array([0.0, 0.0, 1.0])


def standard_rig(
    width=320,
    height=240,
    focal=400.0,
    baseline=0.2,
    toe_in_deg=7.8,
    tilt_deg=10.0,
    port_distance=0.05,
    thickness=0.01,
    media=WATER,
    k1=0.0,
    k2=0.0,
) -> StereoRig:
    """Convergent rig behind a tilted flat port.

    The right camera sits ``baseline`` metres along +x and is turned inwards by
    ``toe_in_deg`` so both views overlap near 2 m in water. Both centers are
    ``port_distance`` from the inner glass surface.
    """
    scale = width / 320.0
    intr = CameraIntrinsics(
        focal * scale, focal * scale, (width - 1) / 2.0, (height - 1) / 2.0, k1, k2, width, height
    )
    left = Camera(intr, CameraPose())
    right = Camera(intr, CameraPose.from_center(rot_y(toe_in_deg), [baseline, 0.0, 0.0]))
    port = PortPlane(tilted_normal(tilt_deg), port_distance, thickness)
    return StereoRig(left, right, port, media, IndexCoefficients.default())


def rectified_rig(width=320, height=240, focal=400.0, baseline=0.1, media=VACUUM,
                  port_distance=0.05, thickness=0.01) -> StereoRig:
    """Parallel identical cameras, pure-x baseline, untilted port, no distortion."""
    intr = CameraIntrinsics(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, 0.0, 0.0,
                            width, height)
    left = Camera(intr, CameraPose())
    right = Camera(intr, CameraPose.from_center(np.eye(3), [baseline, 0.0, 0.0]))
    port = PortPlane(np.array([0.0, 0.0, 1.0]), port_distance, thickness)
    return StereoRig(left, right, port, media, IndexCoefficients.default())
