"""Refracted epipolar loci and the dilated search domain built around them.

Behind a flat port a pixel's correspondences no longer lie on a straight
epipolar line. The locus is sampled by pushing the pixel's water ray through a
depth interval and projecting each sample into the other camera; the search
domain is that polyline rasterised and grown by an uncertainty radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DepthNotReachable, EmptyDomain, EmptyLocus
from .projection import (
    _raise_for_status,
    back_project_batch,
    forward_project_batch,
    points_at_depth_batch,
)

DEFAULT_SAMPLES = 32
DEFAULT_RADIUS = 2


@dataclass(frozen=True, eq=False)
class EpipolarLocus:
    source_pixel: tuple
    depths: np.ndarray  # (K,) strictly increasing
    pixels: np.ndarray  # (K, 2) in the target image, NaN when not projectable
    in_bounds: np.ndarray  # (K,) bool
    depth_range: tuple
    target_size: tuple  # (width, height) of the target image

    @property
    def samples(self):
        return [
            (float(z), (float(p[0]), float(p[1])), bool(b))
            for z, p, b in zip(self.depths, self.pixels, self.in_bounds)
        ]


@dataclass(frozen=True, eq=False)
class SearchDomain:
    rows: np.ndarray  # (M, 3) int64: row, col_start, col_end (half-open)
    dilation_radius: int
    source_pixel: tuple

    @property
    def size(self):
        return int(np.sum(self.rows[:, 2] - self.rows[:, 1]))

    def contains(self, u, v):
        col, row = int(np.floor(u + 0.5)), int(np.floor(v + 0.5))
        hit = (self.rows[:, 0] == row) & (self.rows[:, 1] <= col) & (col < self.rows[:, 2])
        return bool(np.any(hit))

    def pixels(self):
        """All (row, col) pairs, row-major."""
        out = [
            (int(r), c) for r, a, b in self.rows for c in range(int(a), int(b))
        ]
        return np.array(out, dtype=np.int64).reshape(-1, 2)


def inverse_depth_samples(z_min, z_max, count):
    if count < 2:
        raise ValueError("at least two locus samples are required")
    z = 1.0 / np.linspace(1.0 / z_min, 1.0 / z_max, count)
    z[0], z[-1] = z_min, z_max
    return z


def _check_range(z_min, z_max):
    if not (np.isfinite(z_min) and np.isfinite(z_max)) or not 0.0 < z_min < z_max:
        raise ValueError(f"need 0 < z_min < z_max, got [{z_min}, {z_max}]")


def loci_batch(rig, source_camera, pixels, z_min, z_max, count=DEFAULT_SAMPLES):
    """Loci of many source pixels at once.

    Returns ``(depths (K,), target_pixels (N, K, 2), in_bounds (N, K), status (N, K))``.
    Sample status uses the projection codes; samples the ray cannot reach get
    ``NOT_WATER_SIDE``.
    """
    _check_range(z_min, z_max)
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    depths = inverse_depth_samples(z_min, z_max, count)
    o, d, ok = back_project_batch(rig, source_camera, pixels)
    n = pixels.shape[0]
    oo = np.repeat(o, count, axis=0)
    dd = np.repeat(d, count, axis=0)
    zz = np.tile(depths, n)
    pts, reach = points_at_depth_batch(rig, source_camera, oo, dd, zz)
    reach &= np.repeat(ok, count)
    target = rig.other(source_camera)
    uv = np.full((n * count, 2), np.nan)
    inb = np.zeros(n * count, dtype=bool)
    status = np.full(n * count, 3, dtype=np.int8)
    if np.any(reach):
        uv_r, inb_r, st_r = forward_project_batch(rig, target, pts[reach])
        uv[reach], inb[reach], status[reach] = uv_r, inb_r, st_r
    return depths, uv.reshape(n, count, 2), inb.reshape(n, count), status.reshape(n, count)


def epipolar_locus(rig, source_camera, pixel, z_min, z_max, sample_count=DEFAULT_SAMPLES):
    cam = rig.camera(source_camera)
    u, v = (float(c) for c in pixel)
    if not cam.intrinsics.in_bounds(u, v):
        raise ValueError(f"pixel ({u}, {v}) outside the source image")
    depths, uv, inb, status = loci_batch(rig, source_camera, [(u, v)], z_min, z_max, sample_count)
    st = status[0]
    for code in st:
        if code == 1:
            _raise_for_status(1)
    if np.any(st == 3):
        # the pre-condition on z_min puts every sample past the glass
        raise DepthNotReachable(f"water ray of pixel ({u}, {v}) cannot reach [{z_min}, {z_max}]")
    if not np.any(inb[0]):
        raise EmptyLocus(f"no locus sample of pixel ({u}, {v}) falls inside the target image")
    tgt = rig.camera(rig.other(source_camera)).intrinsics
    return EpipolarLocus(
        (u, v), depths, uv[0], inb[0], (float(z_min), float(z_max)), (tgt.width, tgt.height)
    )


def build_search_domain(locus: EpipolarLocus, dilation_radius=DEFAULT_RADIUS) -> SearchDomain:
    r = int(dilation_radius)
    if r < 0:
        raise ValueError("dilation radius must be non-negative")
    if not np.any(locus.in_bounds):
        raise EmptyDomain("locus has no in-bounds sample")
    w, h = locus.target_size
    rows = kernels.domain_intervals(
        locus.pixels[:, 0], locus.pixels[:, 1], locus.in_bounds, r, w, h
    )
    if rows.shape[0] == 0:
        raise EmptyDomain("search domain is empty after clipping")
    return SearchDomain(rows, r, locus.source_pixel)


def chord_deviation(pixels):
    """Largest distance of polyline vertices from the chord joining its ends."""
    p = np.asarray(pixels, dtype=np.float64)
    a, b = p[0], p[-1]
    d = b - a
    length = np.hypot(d[0], d[1])
    rel = p - a
    return float(np.max(np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0])) / length)
