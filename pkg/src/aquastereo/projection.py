"""Refractive projection through the flat port.

``back_project`` follows a pixel's ray into the water. ``forward_project`` goes
the other way: it finds the least-optical-path route from the camera center to
a water point (Fermat's principle) and images its first segment with the
pinhole model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import (
    ConvergenceFailure,
    DepthNotReachable,
    DistortionInversionFailed,
    NoForwardIntersection,
    PointBehindCamera,
    TotalInternalReflection,
)
from .geometry import Ray, trace_port_batch
from .optics import StereoRig, project_directions, unproject_pixels

# forward_project batch status codes
OK = 0
NOT_CONVERGED = 1
BEHIND_CAMERA = 2
NOT_WATER_SIDE = 3


@dataclass(frozen=True, eq=False)
class WaterRay:
    ray: Ray
    source_camera: str
    source_pixel: tuple


class Projection(NamedTuple):
    pixel: np.ndarray
    in_image: bool


def _camera_name(rig, camera):
    return "left" if rig.camera(camera) is rig.left else "right"


def back_project_batch(rig: StereoRig, camera, pixels):
    """Water rays for ``pixels`` (N, 2). Returns ``(origins, directions, ok)``."""
    cam = rig.camera(camera)
    dirs, ok_u = unproject_pixels(cam.intrinsics, cam.pose, pixels)
    origins = np.broadcast_to(cam.pose.center, dirs.shape)
    o, d, ok_t = trace_port_batch(origins, dirs, rig.port, rig.media)
    return o, d, ok_u & ok_t


def back_project(rig: StereoRig, camera, pixel) -> WaterRay:
    cam = rig.camera(camera)
    u, v = (float(c) for c in pixel)
    if not cam.intrinsics.in_bounds(u, v):
        raise ValueError(f"pixel ({u}, {v}) outside the image")
    dirs, ok = unproject_pixels(cam.intrinsics, cam.pose, np.array([[u, v]]))
    if not ok[0]:
        raise DistortionInversionFailed("distortion inversion did not converge")
    d = dirs[0]
    n = rig.port.normal
    if d @ n <= 0.0:
        raise NoForwardIntersection("camera ray points away from the port")
    o, dw, ok_t = trace_port_batch(cam.pose.center[None], d[None], rig.port, rig.media)
    if not ok_t[0]:
        raise TotalInternalReflection("pixel ray is totally reflected inside the port")
    return WaterRay(Ray(o[0], dw[0], rig.media.n_water), _camera_name(rig, camera), (u, v))


def depth_along_axis(rig: StereoRig, camera, points):
    """Coordinate of ``points`` along the camera's optical axis, from its center."""
    cam = rig.camera(camera)
    return (np.asarray(points, dtype=np.float64) - cam.pose.center) @ cam.pose.axis


def points_at_depth_batch(rig: StereoRig, camera, origins, directions, depths):
    """Points on water rays whose axial depth equals ``depths``. Returns ``(points, ok)``."""
    cam = rig.camera(camera)
    axis = cam.pose.axis
    along = directions @ axis
    start = (origins - cam.pose.center) @ axis
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (np.asarray(depths, dtype=np.float64) - start) / along
    ok = (along > 0.0) & (t >= 0.0)
    pts = origins + t[..., None] * directions
    return np.where(ok[..., None], pts, np.nan), ok


def point_at_depth(rig: StereoRig, camera, pixel, depth_z):
    wr = back_project(rig, camera, pixel)
    pts, ok = points_at_depth_batch(
        rig, camera, wr.ray.origin[None], wr.ray.direction[None], np.array([float(depth_z)])
    )
    if not ok[0]:
        raise DepthNotReachable(f"water ray of pixel {tuple(pixel)} never reaches depth {depth_z}")
    return pts[0]


def fermat_path_batch(rig: StereoRig, camera, points):
    """Refraction points on the inner and outer glass surfaces for each water point.

    Returns ``(p1, p2, status)`` with the kernel status codes.
    """
    cam = rig.camera(camera)
    port, media = rig.port, rig.media
    return kernels.fermat_paths(
        cam.pose.center, port.normal, port.inner_offset, port.thickness,
        media.n_air, media.n_glass, media.n_water, points,
    )[:3]


def fermat_path(rig: StereoRig, camera, point_world):
    x = np.asarray(point_world, dtype=np.float64)
    p1, p2, status = fermat_path_batch(rig, camera, x[None])
    _raise_for_status(int(status[0]))
    return p1[0], p2[0]


def optical_path_length(rig: StereoRig, camera, p1, p2, point_world):
    c = rig.camera(camera).pose.center
    m = rig.media
    return (
        m.n_air * np.linalg.norm(p1 - c, axis=-1)
        + m.n_glass * np.linalg.norm(p2 - p1, axis=-1)
        + m.n_water * np.linalg.norm(point_world - p2, axis=-1)
    )


def forward_project_batch(rig: StereoRig, camera, points):
    """Vectorised refractive projection.

    Returns ``(uv, in_image, status)``; uv is NaN where status != OK.
    """
    cam = rig.camera(camera)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    p1, _, status = fermat_path_batch(rig, camera, pts)
    status = status.astype(np.int8)
    uv, ok = project_directions(cam.intrinsics, cam.pose, p1 - cam.pose.center)
    status[(status == OK) & ~ok] = BEHIND_CAMERA
    good = status == OK
    uv = np.where(good[:, None], uv, np.nan)
    with np.errstate(invalid="ignore"):
        in_image = good & cam.intrinsics.in_bounds(uv[:, 0], uv[:, 1])
    return uv, in_image, status


def _raise_for_status(code, index=None):
    if code == OK:
        return
    if code == NOT_CONVERGED:
        raise ConvergenceFailure("Fermat path did not converge in 100 Newton steps", index)
    if code == BEHIND_CAMERA:
        raise PointBehindCamera("refracted path leaves the camera backwards")
    raise ValueError("point is not on the water side of the port")


def forward_project(rig: StereoRig, camera, point_world) -> Projection:
    """Pixel at which ``point_world`` (in water) is imaged; flags out-of-image results."""
    uv, in_image, status = forward_project_batch(rig, camera, np.asarray(point_world)[None])
    _raise_for_status(int(status[0]))
    return Projection(uv[0], bool(in_image[0]))
