"""Pinhole cameras, the stereo rig and the environment-driven water index."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import DistortionInversionFailed, IndexOutOfPhysicalRange, PointBehindCamera
from .geometry import MediaIndices, PortPlane, Ray

MAX_UNDISTORT_STEPS = 50
UNDISTORT_TOL = 1e-12
MIN_CAMERA_DEPTH = 1e-9
CAMERAS = ("left", "right")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy", "k1", "k2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("width", "height"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        self._check_distortion_monotone()

    def distortion_factor(self, r2):
        return 1.0 + self.k1 * r2 + self.k2 * r2 * r2

    def _check_distortion_monotone(self):
        if self.k1 == 0.0 and self.k2 == 0.0:
            return
        corners_u = np.array([0.0, self.width - 1.0])
        corners_v = np.array([0.0, self.height - 1.0])
        xd = (corners_u - self.cx) / self.fx
        yd = (corners_v - self.cy) / self.fy
        rd_max = float(np.sqrt(np.max(xd**2)[()] + np.max(yd**2)[()]))
        # walk r upward until the distorted radius covers the image border
        r = np.linspace(0.0, 4.0 * rd_max + 1.0, 20001)
        f = r * self.distortion_factor(r * r)
        slope = 1.0 + 3.0 * self.k1 * r**2 + 5.0 * self.k2 * r**4
        reach = np.nonzero(f >= rd_max)[0]
        end = reach[0] + 1 if reach.size else r.size
        if reach.size == 0 or np.any(slope[:end] <= 0.0) or np.any(np.diff(f[:end]) <= 0.0):
            raise ValueError(
                f"radial distortion (k1={self.k1}, k2={self.k2}) is not invertible "
                "over the image"
            )

    def in_bounds(self, u, v):
        return (u >= 0.0) & (u <= self.width - 1.0) & (v >= 0.0) & (v <= self.height - 1.0)


def _check_rotation(r):
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), rtol=0.0, atol=1e-10):
        raise ValueError("rotation must be orthonormal")
    if abs(np.linalg.det(r) - 1.0) > 1e-10:
        raise ValueError("rotation must have determinant +1")
    return r


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera transform: ``x_cam = rotation @ x_world + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_center(cls, rotation, center):
        rotation = _check_rotation(rotation)
        return cls(rotation, -rotation @ np.asarray(center, dtype=np.float64))

    @property
    def center(self):
        return -self.rotation.T @ self.translation

    @property
    def axis(self):
        """Optical axis (camera +z) expressed in the world frame."""
        return self.rotation[2].copy()

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )


@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics
    pose: CameraPose


# Quan & Fry (1995) seawater index in (T [C], S [PSU], wavelength [nm]) plus a
# linear pressure term of 1.6e-6 per metre of depth (~1.6e-5 per bar).
QUAN_FRY = {
    "n0": 1.31405,
    "n1": 1.779e-4,
    "n2": -1.05e-6,
    "n3": 1.6e-8,
    "n4": -2.02e-6,
    "n5": 15.868,
    "n6": 0.01155,
    "n7": -0.00423,
    "n8": -4382.0,
    "n9": 1.1455e6,
    "depth": 1.6e-6,
}


@dataclass(frozen=True)
class IndexCoefficients:
    """Coefficient table for the water refractive-index polynomial.

    ``n = n0 + (n1 + n2 T + n3 T^2) S + n4 T^2 + (n5 + n6 S + n7 T) / L
    + n8 / L^2 + n9 / L^3 + depth * D`` with L in nanometres, D in metres.
    """

    n0: float = 0.0
    n1: float = 0.0
    n2: float = 0.0
    n3: float = 0.0
    n4: float = 0.0
    n5: float = 0.0
    n6: float = 0.0
    n7: float = 0.0
    n8: float = 0.0
    n9: float = 0.0
    depth: float = 0.0

    @classmethod
    def default(cls):
        return cls(**QUAN_FRY)

    @classmethod
    def constant(cls, value):
        return cls(n0=value)

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class EnvironmentSample:
    temperature: float = 20.0
    salinity: float = 35.0
    depth: float = 0.0
    wavelength: float = 550.0

    _RANGES = {
        "temperature": (-2.0, 40.0),
        "salinity": (0.0, 45.0),
        "depth": (0.0, 11000.0),
        "wavelength": (400.0, 700.0),
    }

    def __post_init__(self):
        for name, (lo, hi) in self._RANGES.items():
            value = float(getattr(self, name))
            if not lo <= value <= hi:
                raise ValueError(f"{name}={value} outside physical range [{lo}, {hi}]")
            object.__setattr__(self, name, value)


def water_refractive_index(env: EnvironmentSample, coeffs: IndexCoefficients | None = None):
    c = IndexCoefficients.default() if coeffs is None else coeffs
    t, s, lam, z = env.temperature, env.salinity, env.wavelength, env.depth
    n = (
        c.n0
        + (c.n1 + c.n2 * t + c.n3 * t * t) * s
        + c.n4 * t * t
        + (c.n5 + c.n6 * s + c.n7 * t) / lam
        + c.n8 / lam**2
        + c.n9 / lam**3
        + c.depth * z
    )
    if not 1.30 < n < 1.40:
        raise IndexOutOfPhysicalRange(f"water index {n} outside (1.30, 1.40); check coefficients")
    return n


@dataclass(frozen=True, eq=False)
class StereoRig:
    left: Camera
    right: Camera
    port: PortPlane
    media: MediaIndices = field(default_factory=MediaIndices)
    index_coefficients: IndexCoefficients = field(default_factory=IndexCoefficients.default)

    def __post_init__(self):
        n = self.port.normal
        for name in CAMERAS:
            cam = getattr(self, name)
            if float(n @ cam.pose.center) >= self.port.inner_offset - 1e-6:
                raise ValueError(f"{name} camera center is not on the air side of the port")
            if float(n @ cam.pose.axis) <= 0.0:
                raise ValueError(f"{name} camera does not look through the port")

    def camera(self, which) -> Camera:
        if which in ("left", "L", "l"):
            return self.left
        if which in ("right", "R", "r"):
            return self.right
        raise ValueError(f"unknown camera {which!r}")

    def other(self, which) -> str:
        return "right" if self.camera(which) is self.left else "left"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_media(self, **indices):
        return self.replace(media=dataclasses.replace(self.media, **indices))

    def __eq__(self, other):
        if not isinstance(other, StereoRig):
            return NotImplemented
        return (
            self.left.intrinsics == other.left.intrinsics
            and self.left.pose == other.left.pose
            and self.right.intrinsics == other.right.intrinsics
            and self.right.pose == other.right.pose
            and self.port == other.port
            and self.media == other.media
            and self.index_coefficients == other.index_coefficients
        )


def apply_environment(rig: StereoRig, env: EnvironmentSample) -> StereoRig:
    """New rig snapshot whose water index follows ``env``."""
    n = water_refractive_index(env, rig.index_coefficients)
    if n == rig.media.n_water:
        return rig
    return rig.with_media(n_water=n)


# -- pinhole model -------------------------------------------------------------


def project_points(intr: CameraIntrinsics, pose: CameraPose, points):
    """Vectorised pinhole projection. Returns ``(uv, ok)``; ok is False behind the camera."""
    x = np.asarray(points, dtype=np.float64) @ pose.rotation.T + pose.translation
    z = x[..., 2]
    ok = z > MIN_CAMERA_DEPTH
    zs = np.where(ok, z, 1.0)
    return _distort_to_pixels(intr, x[..., 0] / zs, x[..., 1] / zs), ok


def project_directions(intr: CameraIntrinsics, pose: CameraPose, directions):
    """Pixel of world-frame directions leaving the camera center."""
    x = np.asarray(directions, dtype=np.float64) @ pose.rotation.T
    z = x[..., 2]
    ok = z > MIN_CAMERA_DEPTH * np.sqrt(np.sum(x * x, axis=-1))
    zs = np.where(ok, z, 1.0)
    return _distort_to_pixels(intr, x[..., 0] / zs, x[..., 1] / zs), ok


def _distort_to_pixels(intr, xn, yn):
    f = intr.distortion_factor(xn * xn + yn * yn)
    return np.stack([intr.cx + intr.fx * xn * f, intr.cy + intr.fy * yn * f], axis=-1)


def project_pinhole(intr: CameraIntrinsics, pose: CameraPose, point_world):
    uv, ok = project_points(intr, pose, np.asarray(point_world, dtype=np.float64)[None])
    if not ok[0]:
        raise PointBehindCamera("point is not in front of the camera")
    return uv[0]


def undistort_normalized(intr: CameraIntrinsics, xd, yd):
    """Invert radial distortion by fixed-point iteration. Returns ``(xu, yu, ok)``."""
    xd = np.asarray(xd, dtype=np.float64)
    yd = np.asarray(yd, dtype=np.float64)
    xu, yu = xd.copy(), yd.copy()
    if intr.k1 == 0.0 and intr.k2 == 0.0:
        return xu, yu, np.ones(xd.shape, dtype=bool)
    done = np.zeros(xd.shape, dtype=bool)
    for _ in range(MAX_UNDISTORT_STEPS + 1):
        f = intr.distortion_factor(xu * xu + yu * yu)
        res = np.maximum(np.abs(xu * f - xd), np.abs(yu * f - yd))
        done = res < UNDISTORT_TOL
        if np.all(done):
            break
        xu = np.where(done, xu, xd / f)
        yu = np.where(done, yu, yd / f)
    return xu, yu, done


def unproject_pixels(intr: CameraIntrinsics, pose: CameraPose, pixels):
    """Unit world-frame ray directions for ``pixels`` (N, 2). Returns ``(dirs, ok)``."""
    p = np.asarray(pixels, dtype=np.float64)
    xd = (p[..., 0] - intr.cx) / intr.fx
    yd = (p[..., 1] - intr.cy) / intr.fy
    xu, yu, ok = undistort_normalized(intr, xd, yd)
    cam = np.stack([xu, yu, np.ones_like(xu)], axis=-1)
    cam /= np.linalg.norm(cam, axis=-1, keepdims=True)
    return cam @ pose.rotation, ok


def unproject_pinhole(intr: CameraIntrinsics, pose: CameraPose, pixel) -> Ray:
    u, v = (float(c) for c in pixel)
    if not intr.in_bounds(u, v):
        raise ValueError(f"pixel ({u}, {v}) outside the {intr.width}x{intr.height} image")
    d, ok = unproject_pixels(intr, pose, np.array([[u, v]]))
    if not ok[0]:
        raise DistortionInversionFailed(
            f"distortion inversion did not converge in {MAX_UNDISTORT_STEPS} steps"
        )
    return Ray(pose.center, d[0], 1.0)
