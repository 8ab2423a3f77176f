"""Synthetic ground truth through the exact refractive forward model.

Images are rendered inversely: every output pixel is back-projected into the
water and the procedural texture is sampled where its ray meets the target
plane. True correspondences come from ``forward_project`` so the simulator
and the projection module share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .calibration import BoardPose, CornerObservation
from .matcher import DepthMap
from .projection import back_project_batch, depth_along_axis, forward_project_batch

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix64(z):
    """splitmix64 output function on a uint64 array (wrapping arithmetic)."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class NoiseStream:
    """Standard normal values from a splitmix64 state feeding Box-Muller.

    Values come in (cos, sin) pairs; an unused sine is kept for the next draw, so
    the sequence does not depend on how requests are chunked.
    """

    def __init__(self, seed):
        self._state = int(seed) & _MASK
        self._spare = None

    def _uint64(self, count):
        k = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + k * _GOLDEN
            out = _mix64(z)
        self._state = (self._state + count * int(_GOLDEN)) & _MASK
        return out

    def normal(self, count):
        count = int(count)
        out = np.empty(count)
        start = 0
        if count and self._spare is not None:
            out[0] = self._spare
            self._spare = None
            start = 1
        need = count - start
        if need > 0:
            pairs = (need + 1) // 2
            bits = self._uint64(2 * pairs).reshape(pairs, 2) >> np.uint64(11)
            u1 = (bits[:, 0].astype(np.float64) + 1.0) * 2.0**-53
            u2 = bits[:, 1].astype(np.float64) * 2.0**-53
            r = np.sqrt(-2.0 * np.log(u1))
            vals = np.empty(2 * pairs)
            vals[0::2] = r * np.cos(2.0 * np.pi * u2)
            vals[1::2] = r * np.sin(2.0 * np.pi * u2)
            out[start:] = vals[:need]
            if 2 * pairs > need:
                self._spare = float(vals[-1])
        return out

    def __iter__(self):
        return self

    def __next__(self):
        return float(self.normal(1)[0])


def noise_stream(seed):
    return NoiseStream(seed)


@dataclass(frozen=True)
class NoiseSpec:
    pixel_sigma: float = 0.0
    intensity_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pixel_sigma < 0 or self.intensity_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        object.__setattr__(self, "seed", int(self.seed) & _MASK)


SCENE_KINDS = ("textured_plane", "checkerboard", "point_grid")


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Planar target. Plane point ``(s, t)`` sits at ``rotation @ (s, t, 0) + translation``."""

    kind: str = "textured_plane"
    plane_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    plane_translation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 2.0]))
    extent: float = 4.0
    texture_seed: int = 7
    octaves: int = 3
    cell_size: float = 0.012
    contrast: float = 1.6
    square_size: float = 0.05
    grid_rows: int = 5
    grid_cols: int = 4
    grid_spacing: float = 0.05

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"scene kind must be one of {SCENE_KINDS}, got {self.kind!r}")
        r = np.asarray(self.plane_rotation, dtype=np.float64)
        if r.shape != (3, 3) or not np.allclose(r.T @ r, np.eye(3), atol=1e-10):
            raise ValueError("plane_rotation must be a 3x3 rotation")
        object.__setattr__(self, "plane_rotation", r)
        object.__setattr__(
            self, "plane_translation", np.asarray(self.plane_translation, dtype=np.float64)
        )
        if self.extent <= 0 or self.cell_size <= 0 or self.square_size <= 0:
            raise ValueError("extent, cell_size and square_size must be positive")
        if self.octaves < 1 or self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("octaves and grid dimensions must be >= 1")

    @property
    def normal(self):
        return self.plane_rotation[:, 2]

    def to_world(self, st):
        st = np.asarray(st, dtype=np.float64)
        return st[..., 0:1] * self.plane_rotation[:, 0] + st[..., 1:2] * self.plane_rotation[
            :, 1
        ] + self.plane_translation

    def grid_points(self):
        s = (np.arange(self.grid_cols) - (self.grid_cols - 1) / 2.0) * self.grid_spacing
        t = (np.arange(self.grid_rows) - (self.grid_rows - 1) / 2.0) * self.grid_spacing
        ss, tt = np.meshgrid(s, t)
        return self.to_world(np.stack([ss.ravel(), tt.ravel()], axis=1))

    def outline(self):
        """Points whose water-side check validates the whole target."""
        if self.kind == "point_grid":
            return self.grid_points()
        e = self.extent / 2.0
        return self.to_world(np.array([[-e, -e], [e, -e], [e, e], [-e, e]]))


def validate_scene(rig, scene: SceneSpec):
    side = scene.outline() @ rig.port.normal
    if np.any(side <= rig.port.outer_offset):
        raise ValueError("scene target is not entirely on the water side of the port")


def _lattice(ix, iy, octave, seed):
    with np.errstate(over="ignore"):
        key = (
            np.uint64(seed) * _GOLDEN
            ^ ix.astype(np.int64).view(np.uint64) * _MIX1
            ^ iy.astype(np.int64).view(np.uint64) * _MIX2
            ^ np.uint64(octave + 1) * np.uint64(0xD6E8FEB86659FD93)
        )
        return (_mix64(key) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def texture(scene: SceneSpec, s, t):
    """Intensity of the target texture at plane coordinates (s, t) in metres."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if scene.kind == "checkerboard":
        k = np.floor(s / scene.square_size) + np.floor(t / scene.square_size)
        return np.where(np.mod(k, 2.0) == 0.0, 0.85, 0.15)
    total = np.zeros(np.broadcast(s, t).shape)
    weight = 0.0
    for o in range(scene.octaves):
        cell = scene.cell_size / 2.0**o
        x, y = s / cell, t / cell
        x0, y0 = np.floor(x), np.floor(y)
        fx, fy = x - x0, y - y0
        ix, iy = x0.astype(np.int64), y0.astype(np.int64)
        v00 = _lattice(ix, iy, o, scene.texture_seed)
        v10 = _lattice(ix + 1, iy, o, scene.texture_seed)
        v01 = _lattice(ix, iy + 1, o, scene.texture_seed)
        v11 = _lattice(ix + 1, iy + 1, o, scene.texture_seed)
        val = (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy
        amp = 0.5**o
        total += amp * val
        weight += amp
    return np.clip(0.5 + scene.contrast * (total / weight - 0.5), 0.0, 1.0)


def _hit_plane(scene, origins, directions):
    n = scene.normal
    denom = directions @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((scene.plane_translation - origins) @ n) / denom
    ok = np.isfinite(t) & (t > 0.0)
    hit = origins + np.where(ok, t, 0.0)[:, None] * directions
    rel = hit - scene.plane_translation
    s = rel @ scene.plane_rotation[:, 0]
    tt = rel @ scene.plane_rotation[:, 1]
    e = scene.extent / 2.0
    ok &= (np.abs(s) <= e) & (np.abs(tt) <= e)
    return hit, s, tt, ok


class StereoPair(NamedTuple):
    left: np.ndarray
    right: np.ndarray
    truth: DepthMap
    truth_match: np.ndarray  # (H, W, 2) right-image pixel; NaN where unknown


class PointRender(NamedTuple):
    point_world: np.ndarray
    pixel_left: np.ndarray
    pixel_right: np.ndarray
    visible_left: bool
    visible_right: bool


def _render_view(rig, camera, scene):
    intr = rig.camera(camera).intrinsics
    vv, uu = np.mgrid[0 : intr.height, 0 : intr.width]
    pix = np.stack([uu.ravel(), vv.ravel()], axis=1).astype(np.float64)
    o, d, ok = back_project_batch(rig, camera, pix)
    hit, s, t, on = _hit_plane(scene, np.where(ok[:, None], o, 0.0), np.where(ok[:, None], d, 0.0))
    on &= ok
    img = np.zeros(pix.shape[0])
    img[on] = texture(scene, s[on], t[on])
    return img.reshape(intr.height, intr.width), hit, on


def render_stereo_pair(rig, scene: SceneSpec = SceneSpec(), noise: NoiseSpec = NoiseSpec()):
    if scene.kind == "point_grid":
        raise ValueError("render_stereo_pair needs a textured_plane or checkerboard scene")
    validate_scene(rig, scene)
    left, hit, on = _render_view(rig, "left", scene)
    right, _, _ = _render_view(rig, "right", scene)
    h, w = left.shape

    depth = np.zeros(h * w)
    depth[on] = depth_along_axis(rig, "left", hit[on])
    match = np.full((h * w, 2), np.nan)
    if np.any(on):
        uv, in_image, _ = forward_project_batch(rig, "right", hit[on])
        uv[~in_image] = np.nan
        match[on] = uv
    truth = DepthMap(depth.reshape(h, w), np.zeros((h, w)))

    if noise.intensity_sigma > 0.0:
        stream = NoiseStream(noise.seed)
        left = np.clip(left + noise.intensity_sigma * stream.normal(left.size).reshape(h, w), 0, 1)
        right = np.clip(
            right + noise.intensity_sigma * stream.normal(right.size).reshape(right.shape), 0, 1
        )
    return StereoPair(left, right, truth, match.reshape(h, w, 2))


def render_points(rig, scene: SceneSpec):
    """Project every grid point of a ``point_grid`` scene into both cameras."""
    validate_scene(rig, scene)
    pts = scene.grid_points()
    uv_l, in_l, _ = forward_project_batch(rig, "left", pts)
    uv_r, in_r, _ = forward_project_batch(rig, "right", pts)
    return [
        PointRender(pts[i], uv_l[i], uv_r[i], bool(in_l[i]), bool(in_r[i]))
        for i in range(pts.shape[0])
    ]


def board_grid(rows, cols, spacing):
    """Board-frame corner coordinates (z = 0), row-major, centred on the origin."""
    s = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    t = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    ss, tt = np.meshgrid(s, t)
    return np.stack([ss.ravel(), tt.ravel(), np.zeros(ss.size)], axis=1)


def synthesize_corners(rig, board_poses, board_points, noise: NoiseSpec = NoiseSpec()):
    """Corner observations of a board seen in several poses by both cameras.

    Only corners imaged inside a camera's frame are kept. Pixel noise is drawn
    from the seeded stream in observation order (u then v).
    """
    board_points = np.asarray(board_points, dtype=np.float64)
    stream = NoiseStream(noise.seed)
    obs = []
    for view_id, pose in enumerate(board_poses):
        world = pose.apply(board_points)
        for camera in ("left", "right"):
            uv, in_image, _ = forward_project_batch(rig, camera, world)
            for k in np.nonzero(in_image)[0]:
                obs.append([view_id, camera, board_points[k], uv[k]])
    if noise.pixel_sigma > 0.0 and obs:
        jitter = noise.pixel_sigma * stream.normal(2 * len(obs)).reshape(-1, 2)
        for o, j in zip(obs, jitter):
            o[3] = o[3] + j
    return [CornerObservation(v, c, b, tuple(p)) for v, c, b, p in obs]


def default_board_poses(count=5, distance=1.0):
    """Board poses spread in depth and attitude in front of the left camera."""
    from .rigs import rot_x, rot_y

    poses = []
    for i in range(count):
        ax = 18.0 * np.sin(2.1 * i + 0.3)
        ay = 22.0 * np.cos(1.7 * i + 0.5)
        z = distance * (0.7 + 0.2 * i)
        x = 0.1 + 0.05 * np.sin(1.3 * i)
        y = 0.05 * np.cos(0.9 * i)
        poses.append(BoardPose(rot_x(ax) @ rot_y(ay), np.array([x, y, z])))
    return poses
