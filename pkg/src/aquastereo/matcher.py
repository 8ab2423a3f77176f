"""Domain-constrained block matching, triangulation and dense reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    BehindCamera,
    DegenerateRays,
    ImageSizeMismatch,
    WindowOutOfBounds,
)
from .geometry import closest_point_pair, closest_points_batch
from .projection import back_project, back_project_batch, depth_along_axis, points_at_depth_batch
from .search_domain import SearchDomain, loci_batch

METRICS = {"zncc": 0, "sad": 1}
STATUSES = ("ok", "no_domain", "low_score", "inconsistent")


def as_gray(image, name="image"):
    """Validate a grey image: 2-D float array with values in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {img.shape}")
    if img.size and (not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return np.ascontiguousarray(img)


def _metric_code(metric):
    try:
        return METRICS[metric.lower()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}") from None


def _half_window(window):
    if int(window) != window or window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    return int(window) // 2


@dataclass(frozen=True)
class MatchParams:
    window: int = 11
    metric: str = "zncc"
    samples: int = 32
    radius: int = 2
    accept_threshold: float = 0.7
    lr_max_px: float = 1.0

    def __post_init__(self):
        _half_window(self.window)
        _metric_code(self.metric)
        if self.samples < 2 or self.radius < 0 or self.lr_max_px < 0:
            raise ValueError("samples >= 2, radius >= 0 and lr_max_px >= 0 are required")


@dataclass(frozen=True)
class MatchResult:
    source_pixel: tuple
    matched_pixel: tuple
    score: float
    status: str


@dataclass(eq=False)
class DepthMap:
    """Metric depth per pixel along the left optical axis; 0.0 marks invalid pixels."""

    depth: np.ndarray
    residual: np.ndarray = None

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.residual is None:
            self.residual = np.zeros_like(self.depth)
        self.residual = np.asarray(self.residual, dtype=np.float64)
        if self.residual.shape != self.depth.shape:
            raise ValueError("depth and residual maps must have the same shape")

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def valid(self):
        return self.depth > 0.0


@dataclass(eq=False)
class PointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    intensity: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gap: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.points.shape[0]


def patch_cost(left, right, p_left, p_right, window=11, metric="zncc"):
    """Score of the ``window`` x ``window`` patches centred on two integer pixels.

    ZNCC lies in [-1, 1] (higher is better, 0 for a flat window); SAD is the mean
    absolute difference (lower is better).
    """
    half = _half_window(window)
    code = _metric_code(metric)
    patches = []
    for img, (u, v) in ((left, p_left), (right, p_right)):
        u, v = int(u), int(v)
        h, w = img.shape
        if not (half <= u < w - half and half <= v < h - half):
            raise WindowOutOfBounds(f"window at ({u}, {v}) leaves the {w}x{h} image")
        patches.append(np.asarray(img[v - half : v + half + 1, u - half : u + half + 1], float))
    a, b = patches
    if code == 1:
        return float(np.mean(np.abs(a - b)))
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.sum(a * a), np.sum(b * b)
    if na <= kernels._fallback.ZERO_VAR or nb <= kernels._fallback.ZERO_VAR:
        return 0.0
    return float(np.sum(a * b) / np.sqrt(na * nb))


def parabola_offset(s_minus, s_0, s_plus, maximize=True):
    """Vertex offset of the parabola through three equally spaced scores, in [-0.5, 0.5].

    Zero when a neighbour is missing or the centre is not a local extremum.
    """
    if not (np.isfinite(s_minus) and np.isfinite(s_plus)):
        return 0.0
    denom = s_minus - 2.0 * s_0 + s_plus
    if maximize:
        if not (denom < 0.0 and s_0 >= s_minus and s_0 >= s_plus):
            return 0.0
    elif not (denom > 0.0 and s_0 <= s_minus and s_0 <= s_plus):
        return 0.0
    return float(np.clip(0.5 * (s_minus - s_plus) / denom, -0.5, 0.5))


class _PairStats:
    """Window statistics of an image pair, computed once per run."""

    def __init__(self, left, right, half):
        self.left, self.right, self.half = left, right, half
        self.lmean, self.lnorm = kernels.window_stats(left, half)
        self.rmean, self.rnorm = kernels.window_stats(right, half)

    def swapped(self):
        s = object.__new__(_PairStats)
        s.left, s.right, s.half = self.right, self.left, self.half
        s.lmean, s.lnorm, s.rmean, s.rnorm = self.rmean, self.rnorm, self.lmean, self.lnorm
        return s


def _match(stats, ul, vl, intervals, code, threshold):
    br, bc, score, nb, _ = kernels.best_in_domain(
        stats.left, stats.right, stats.lmean, stats.lnorm, stats.rmean, stats.rnorm,
        ul, vl, intervals, stats.half, code,
    )
    if br < 0:
        return "no_domain", (np.nan, np.nan), np.nan, (-1, -1)
    maximize = code == 0
    du = parabola_offset(nb[0], score, nb[1], maximize)
    dv = parabola_offset(nb[2], score, nb[3], maximize)
    good = score >= threshold if maximize else score <= threshold
    return ("ok" if good else "low_score"), (bc + du, br + dv), float(score), (bc, br)


def match_pixel(left, right, p_left, domain: SearchDomain, window=11, metric="zncc",
                accept_threshold=0.7, _stats=None) -> MatchResult:
    """Best match of the left window at ``p_left`` over ``domain`` in the right image."""
    half = _half_window(window)
    code = _metric_code(metric)
    left = as_gray(left, "left")
    right = as_gray(right, "right")
    ul, vl = int(p_left[0]), int(p_left[1])
    h, w = left.shape
    if not (half <= ul < w - half and half <= vl < h - half):
        raise WindowOutOfBounds(f"left window at ({ul}, {vl}) leaves the image")
    stats = _stats or _PairStats(left, right, half)
    status, pix, score, _ = _match(stats, ul, vl, domain.rows, code, accept_threshold)
    return MatchResult((ul, vl), pix, score, status)


def triangulate_batch(rig, p_left, p_right):
    """Midpoints and gaps of the water rays through matched pixels.

    Returns ``(points, gaps, status)`` with status 0 ok, 1 degenerate, 2 behind.
    """
    ol, dl, okl = back_project_batch(rig, "left", p_left)
    orr, dr, okr = back_project_batch(rig, "right", p_right)
    _, _, mid, gap, status = closest_points_batch(ol, dl, orr, dr)
    status = np.where(okl & okr, status, 1)
    n = rig.port.normal
    wrong_side = (mid @ n) <= rig.port.outer_offset
    status = np.where((status == 0) & wrong_side, 2, status)
    return mid, gap, status


def triangulate_match(rig, p_left, p_right):
    """Point where the refracted rays of two matched pixels (nearly) meet."""
    ra = back_project(rig, "left", p_left).ray
    rb = back_project(rig, "right", p_right).ray
    _, _, mid, gap = closest_point_pair(ra, rb)
    if mid @ rig.port.normal <= rig.port.outer_offset:
        raise BehindCamera("triangulated point is not on the water side of the port")
    return mid, gap


def _check_sizes(rig, left, right):
    for name, img in (("left", left), ("right", right)):
        intr = rig.camera(name).intrinsics
        if img.shape != (intr.height, intr.width):
            raise ImageSizeMismatch(
                f"{name} image is {img.shape[1]}x{img.shape[0]}, rig expects "
                f"{intr.width}x{intr.height}"
            )


def match_dense(rig, left, right, z_min, z_max, params: MatchParams = MatchParams()):
    """Dense refractive stereo. Returns ``(DepthMap, [MatchResult, ...])``.

    One result per left pixel whose window fits, in row-major order.
    """
    left = as_gray(left, "left")
    right = as_gray(right, "right")
    _check_sizes(rig, left, right)
    half = _half_window(params.window)
    code = _metric_code(params.metric)
    thr = params.accept_threshold
    h, w = left.shape
    vv, uu = np.mgrid[half : h - half, half : w - half]
    src = np.stack([uu.ravel(), vv.ravel()], axis=1).astype(np.float64)
    stats = _PairStats(left, right, half)
    rw, rh = right.shape[1], right.shape[0]

    _, loci, inb, _ = loci_batch(rig, "left", src, z_min, z_max, params.samples)
    n = src.shape[0]
    status = np.empty(n, dtype=object)
    matched = np.full((n, 2), np.nan)
    q_int = np.full((n, 2), -1, dtype=np.int64)
    scores = np.full(n, np.nan)
    for i in range(n):
        if not inb[i].any():
            status[i] = "no_domain"
            continue
        iv = kernels.domain_intervals(loci[i, :, 0], loci[i, :, 1], inb[i], params.radius, rw, rh)
        st, pix, sc, qi = _match(stats, int(src[i, 0]), int(src[i, 1]), iv, code, thr)
        status[i], matched[i], scores[i], q_int[i] = st, pix, sc, qi

    # left-right consistency by full re-matching from the right winner
    ok = np.nonzero(status == "ok")[0]
    if ok.size:
        back = stats.swapped()
        _, bloci, binb, _ = loci_batch(
            rig, "right", q_int[ok].astype(np.float64), z_min, z_max, params.samples
        )
        for j, i in enumerate(ok):
            if not binb[j].any():
                status[i] = "inconsistent"
                continue
            iv = kernels.domain_intervals(
                bloci[j, :, 0], bloci[j, :, 1], binb[j], params.radius, w, h
            )
            st, pix, _, _ = _match(back, int(q_int[i, 0]), int(q_int[i, 1]), iv, code, thr)
            expected = src[i] + (q_int[i] - matched[i])
            if st != "ok" or np.hypot(*(np.asarray(pix) - expected)) > params.lr_max_px:
                status[i] = "inconsistent"

    depth = np.zeros((h, w))
    residual = np.zeros((h, w))
    ok = np.nonzero(status == "ok")[0]
    if ok.size:
        pts, gaps, tstat = triangulate_batch(rig, src[ok], matched[ok])
        z = depth_along_axis(rig, "left", pts)
        good = (tstat == 0) & (z >= z_min) & (z <= z_max)
        idx = ok[good]
        cols, rows = src[idx, 0].astype(int), src[idx, 1].astype(int)
        depth[rows, cols] = z[good]
        residual[rows, cols] = gaps[good]

    results = [
        MatchResult(
            (int(src[i, 0]), int(src[i, 1])),
            (float(matched[i, 0]), float(matched[i, 1])),
            float(scores[i]),
            status[i],
        )
        for i in range(n)
    ]
    return DepthMap(depth, residual), results


def to_point_cloud(rig, depth_map: DepthMap, left) -> PointCloud:
    left = as_gray(left, "left")
    intr = rig.left.intrinsics
    if depth_map.depth.shape != left.shape or left.shape != (intr.height, intr.width):
        raise ImageSizeMismatch("depth map, left image and rig dimensions disagree")
    rows, cols = np.nonzero(depth_map.valid)
    if rows.size == 0:
        return PointCloud()
    pix = np.stack([cols, rows], axis=1).astype(np.float64)
    o, d, ok = back_project_batch(rig, "left", pix)
    pts, reach = points_at_depth_batch(rig, "left", o, d, depth_map.depth[rows, cols])
    if not np.all(ok & reach):
        raise DegenerateRays("a valid depth pixel cannot be re-projected to its depth")
    return PointCloud(pts, left[rows, cols].copy(), depth_map.residual[rows, cols].copy())


def coverage(depth_map: DepthMap, window=11):
    """Fraction of pixels with a full matching window that received a depth."""
    half = _half_window(window)
    inner = depth_map.depth[half : depth_map.height - half, half : depth_map.width - half]
    return float(np.count_nonzero(inner > 0.0)) / max(inner.size, 1)
