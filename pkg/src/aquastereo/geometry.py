"""Exact vector geometry for a flat refractive port.

All routines work on float64 direction vectors; angles are never formed.
The scalar functions raise on failure, the ``*_batch`` variants operate on
``(N, 3)`` arrays and return a boolean validity mask instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateRays,
    NoForwardIntersection,
    TotalInternalReflection,
)

PARALLEL_EPS = 1e-14


def _vec3(x, name="vector"):
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def _unit(x, name="direction"):
    a = _vec3(x, name)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise ValueError(f"{name} must be non-zero")
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"{name} must be a unit vector (|{name}| = {norm})")
    return a / norm


def _dot(a, b):
    # explicit sum keeps the evaluation order fixed (symmetry guarantees)
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


@dataclass(frozen=True, eq=False)
class Ray:
    """Half-line in the world frame travelling through a homogeneous medium."""

    origin: np.ndarray
    direction: np.ndarray
    medium_index: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin, "origin"))
        object.__setattr__(self, "direction", _unit(self.direction))
        if not self.medium_index >= 1.0:
            raise ValueError(f"medium_index must be >= 1, got {self.medium_index}")
        object.__setattr__(self, "medium_index", float(self.medium_index))

    def at(self, t):
        return self.origin + t * self.direction

    def __eq__(self, other):
        if not isinstance(other, Ray):
            return NotImplemented
        return (
            np.array_equal(self.origin, other.origin)
            and np.array_equal(self.direction, other.direction)
            and self.medium_index == other.medium_index
        )


@dataclass(frozen=True, eq=False)
class PortPlane:
    """Planar glass slab. ``normal`` points from the air side to the water side."""

    normal: np.ndarray
    inner_offset: float
    thickness: float

    def __post_init__(self):
        n = _vec3(self.normal, "normal")
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"port normal must be unit length (|n| = {norm!r})")
        object.__setattr__(self, "normal", n)
        if not self.thickness > 0:
            raise ValueError(f"port thickness must be positive, got {self.thickness}")
        object.__setattr__(self, "inner_offset", float(self.inner_offset))
        object.__setattr__(self, "thickness", float(self.thickness))

    @property
    def outer_offset(self):
        return self.inner_offset + self.thickness

    def __eq__(self, other):
        if not isinstance(other, PortPlane):
            return NotImplemented
        return (
            np.array_equal(self.normal, other.normal)
            and self.inner_offset == other.inner_offset
            and self.thickness == other.thickness
        )


@dataclass(frozen=True)
class MediaIndices:
    n_air: float = 1.0
    n_glass: float = 1.49
    n_water: float = 1.33

    def __post_init__(self):
        for name in ("n_air", "n_glass", "n_water"):
            value = float(getattr(self, name))
            if not 1.0 <= value <= 2.0:
                raise ValueError(f"{name} must lie in [1, 2], got {value}")
            object.__setattr__(self, name, value)


def refract_batch(incident, normal, n1, n2):
    """Refract unit directions ``incident`` (N, 3) at surfaces with ``normal``.

    ``normal`` may be a single 3-vector or (N, 3); its sign is flipped per row so
    that it points along propagation. Returns ``(directions, ok)`` where ``ok`` is
    False for rows that undergo total internal reflection (their direction is NaN).
    """
    d = np.asarray(incident, dtype=np.float64)
    nrm = np.broadcast_to(np.asarray(normal, dtype=np.float64), d.shape)
    cos1 = _dot(d, nrm)
    flip = cos1 < 0.0
    if np.any(flip):
        nrm = np.where(flip[..., None], -nrm, nrm)
        cos1 = np.abs(cos1)
    eta = n1 / n2
    sin2_sq = eta * eta * np.maximum(0.0, 1.0 - cos1 * cos1)
    ok = sin2_sq <= 1.0
    cos2 = np.sqrt(np.maximum(0.0, 1.0 - sin2_sq))
    out = eta * d + (cos2 - eta * cos1)[..., None] * nrm
    out = out / np.sqrt(_dot(out, out))[..., None]
    out = np.where(ok[..., None], out, np.nan)
    return out, ok


def refract_direction(incident, surface_normal, n1, n2):
    """Refract one unit direction across an interface from index ``n1`` to ``n2``.

    The normal may be given with either orientation. Raises
    :class:`TotalInternalReflection` when no transmitted ray exists.
    """
    d = _unit(incident, "incident")
    n = _unit(surface_normal, "surface_normal")
    if n1 == n2:
        return d.copy()
    out, ok = refract_batch(d[None], n, float(n1), float(n2))
    if not ok[0]:
        raise TotalInternalReflection(
            f"total internal reflection going from n={n1} to n={n2}"
        )
    return out[0]


def intersect_plane_batch(origins, directions, normal, offset):
    """Forward intersection of many rays with the plane ``normal . x = offset``.

    Returns ``(points, ok)``; points are snapped exactly onto the plane.
    """
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64)
    nrm = np.asarray(normal, dtype=np.float64)
    denom = _dot(d, nrm)
    safe = np.abs(denom) >= PARALLEL_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(safe, (offset - _dot(o, nrm)) / np.where(safe, denom, 1.0), -1.0)
    ok = safe & (t > 0.0)
    p = o + t[..., None] * d
    p = p + (offset - _dot(p, nrm))[..., None] * nrm
    return np.where(ok[..., None], p, np.nan), ok


def intersect_ray_plane(ray: Ray, normal, offset: float):
    n = _unit(normal, "normal")
    p, ok = intersect_plane_batch(ray.origin[None], ray.direction[None], n, float(offset))
    if not ok[0]:
        raise NoForwardIntersection("ray does not reach the plane in front of its origin")
    return p[0]


def trace_port_batch(origins, directions, port: PortPlane, media: MediaIndices):
    """Carry air rays through both glass surfaces.

    Returns ``(water_origins, water_directions, ok)``.
    """
    n = port.normal
    p1, ok1 = intersect_plane_batch(origins, directions, n, port.inner_offset)
    dg, ok2 = refract_batch(directions, n, media.n_air, media.n_glass)
    p2, ok3 = intersect_plane_batch(p1, dg, n, port.outer_offset)
    dw, ok4 = refract_batch(dg, n, media.n_glass, media.n_water)
    return p2, dw, ok1 & ok2 & ok3 & ok4


def trace_through_port(ray_air: Ray, port: PortPlane, media: MediaIndices) -> Ray:
    """Refract an air ray at the inner and outer glass surfaces.

    The returned ray starts on the outer surface and travels in water.
    """
    n = port.normal
    if _dot(n, ray_air.origin) >= port.inner_offset:
        raise NoForwardIntersection("ray origin is not on the air side of the port")
    if _dot(n, ray_air.direction) <= 0.0:
        raise NoForwardIntersection("ray travels away from the port")
    p1 = intersect_ray_plane(ray_air, n, port.inner_offset)
    d_glass = refract_direction(ray_air.direction, n, media.n_air, media.n_glass)
    p2 = intersect_ray_plane(Ray(p1, d_glass, media.n_glass), n, port.outer_offset)
    d_water = refract_direction(d_glass, n, media.n_glass, media.n_water)
    return Ray(p2, d_water, media.n_water)


def closest_points_batch(oa, da, ob, db):
    """Closest points of forward half-lines, vectorised.

    Returns ``(point_a, point_b, midpoint, gap, status)`` with status 0 = ok,
    1 = parallel, 2 = closest approach behind an origin.
    """
    oa, da, ob, db = (np.asarray(x, dtype=np.float64) for x in (oa, da, ob, db))
    cross = np.cross(da, db)
    parallel = np.sqrt(_dot(cross, cross)) <= PARALLEL_EPS
    w0 = oa - ob
    b = _dot(da, db)
    d = _dot(da, w0)
    e = _dot(db, w0)
    denom = np.where(parallel, 1.0, 1.0 - b * b)
    s = (b * e - d) / denom
    t = (e - b * d) / denom
    pa = oa + s[..., None] * da
    pb = ob + t[..., None] * db
    mid = (pa + pb) / 2.0
    diff = pa - pb
    gap = np.sqrt(_dot(diff, diff))
    status = np.where(parallel, 1, np.where((s < 0.0) | (t < 0.0), 2, 0))
    return pa, pb, mid, gap, status


def closest_point_pair(ray_a: Ray, ray_b: Ray):
    """Common perpendicular of two rays.

    Returns ``(point_a, point_b, midpoint, gap)``.
    """
    pa, pb, mid, gap, status = closest_points_batch(
        ray_a.origin, ray_a.direction, ray_b.origin, ray_b.direction
    )
    if status == 1:
        raise DegenerateRays("rays are parallel")
    if status == 2:
        raise BehindCamera("closest approach lies behind a ray origin")
    return pa, pb, mid, float(gap)
