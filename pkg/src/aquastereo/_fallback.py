"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` extension; used when
the extension is not built, and as its reference in tests and benchmarks.
"""

import math

import numpy as np

MAX_NEWTON_STEPS = 100
GRAD_TOL = 1e-12
ZERO_VAR = 1e-12

OK = 0
NOT_CONVERGED = 1
NOT_WATER_SIDE = 3


def plane_basis(normal):
    n = np.asarray(normal, dtype=np.float64)
    a = np.array([0.0, 1.0, 0.0]) if abs(n[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = a - (a @ n) * n
    e1 /= math.sqrt(e1 @ e1)
    e2 = np.cross(n, e1)
    return e1, e2


def _unit_rows(v):
    length = np.sqrt(np.einsum("ij,ij->i", v, v))
    return v / length[:, None], length


def _in_plane_block(u, length, index):
    k = index / length
    return k[:, None, None] * (np.eye(2)[None] - u[:, :2, None] * u[:, None, :2])


def _segments(z, ha, thickness, xl):
    """Air, glass and water segment vectors in the (e1, e2, n) frame."""
    a = np.empty((z.shape[0], 3))
    a[:, 0], a[:, 1], a[:, 2] = z[:, 0], z[:, 1], ha
    g = np.empty_like(a)
    g[:, 0], g[:, 1], g[:, 2] = z[:, 2], z[:, 3], thickness
    w = np.empty_like(a)
    w[:, 0] = xl[:, 0] - z[:, 0] - z[:, 2]
    w[:, 1] = xl[:, 1] - z[:, 1] - z[:, 3]
    w[:, 2] = xl[:, 2] - ha - thickness
    return a, g, w


def fermat_paths(center, normal, inner, thickness, n_air, n_glass, n_water, points):
    """Stationary optical path C -> P1 (inner plane) -> P2 (outer plane) -> X.

    Damped Newton on four unknowns: the in-plane offset of P1 from the foot of
    the camera center and the in-plane displacement P2 - P1 across the glass.
    Every segment vector is formed directly, without cancellation, so thin
    glass stays well conditioned. Returns ``(p1, p2, status, iterations)`` with
    status 0 ok, 1 not converged, 3 point or center on the wrong side.
    """
    c = np.asarray(center, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    x = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    count = x.shape[0]
    e1, e2 = plane_basis(n)
    frame = np.stack([e1, e2, n])  # rows: e1, e2, n
    ha = inner - n @ c
    xl = (x - c) @ frame.T  # point in the local frame

    status = np.full(count, NOT_CONVERGED, dtype=np.int8)
    iters = np.zeros(count, dtype=np.int32)
    bad = (xl[:, 2] <= ha + thickness) | (ha <= 0.0)
    status[bad] = NOT_WATER_SIDE

    along = np.where(bad, 1.0, xl[:, 2])
    z = np.empty((count, 4))
    z[:, :2] = xl[:, :2] * (ha / along)[:, None]
    z[:, 2:] = xl[:, :2] * (thickness / along)[:, None]

    active = np.nonzero(~bad)[0]
    for it in range(MAX_NEWTON_STEPS + 1):
        if active.size == 0:
            break
        za, xa = z[active], xl[active]
        a, g, w = _segments(za, ha, thickness, xa)
        ua, la = _unit_rows(a)
        ug, lg = _unit_rows(g)
        uw, lw = _unit_rows(w)
        length = n_air * la + n_glass * lg + n_water * lw
        grad = np.concatenate(
            [n_air * ua[:, :2] - n_water * uw[:, :2], n_glass * ug[:, :2] - n_water * uw[:, :2]],
            axis=1,
        )
        gnorm = np.sqrt(np.einsum("ij,ij->i", grad, grad))
        done = gnorm < GRAD_TOL * length
        if np.any(done):
            idx = active[done]
            status[idx] = OK
            iters[idx] = it
        if it == MAX_NEWTON_STEPS:
            iters[active[~done]] = it
            break
        keep = ~done
        active = active[keep]
        if active.size == 0:
            break
        za, xa, grad, length = za[keep], xa[keep], grad[keep], length[keep]
        ma = _in_plane_block(ua[keep], la[keep], n_air)
        mg = _in_plane_block(ug[keep], lg[keep], n_glass)
        mw = _in_plane_block(uw[keep], lw[keep], n_water)
        h = np.empty((active.size, 4, 4))
        h[:, :2, :2] = ma + mw
        h[:, :2, 2:] = mw
        h[:, 2:, :2] = mw
        h[:, 2:, 2:] = mg + mw
        step = -np.linalg.solve(h, grad[:, :, None])[:, :, 0]

        # backtracking on the convex objective
        scale = np.ones(active.size)
        pending = np.ones(active.size, dtype=bool)
        for _ in range(40):
            trial = za + scale[:, None] * step
            a, g, w = _segments(trial, ha, thickness, xa)
            f = (
                n_air * np.sqrt(np.einsum("ij,ij->i", a, a))
                + n_glass * np.sqrt(np.einsum("ij,ij->i", g, g))
                + n_water * np.sqrt(np.einsum("ij,ij->i", w, w))
            )
            accept = f <= length * (1.0 + 1e-15)
            pending &= ~accept
            if not np.any(pending):
                break
            scale = np.where(pending, scale * 0.5, scale)
        z[active] = za + scale[:, None] * step

    p1 = c + z[:, 0:1] * e1 + z[:, 1:2] * e2 + ha * n
    p2 = p1 + z[:, 2:3] * e1 + z[:, 3:4] * e2 + thickness * n
    p1[bad] = np.nan
    p2[bad] = np.nan
    return p1, p2, status, iters


def window_stats(image, half):
    """Per-pixel window mean and centred L2 norm; NaN where the window does not fit."""
    img = np.ascontiguousarray(image, dtype=np.float64)
    h, w = img.shape
    mean = np.full((h, w), np.nan)
    norm = np.full((h, w), np.nan)
    size = 2 * half + 1
    if h < size or w < size:
        return mean, norm
    win = np.lib.stride_tricks.sliding_window_view(img, (size, size))
    m = win.sum(axis=(2, 3)) / (size * size)
    centred = win - m[:, :, None, None]
    mean[half : h - half, half : w - half] = m
    norm[half : h - half, half : w - half] = np.sqrt(np.sum(centred * centred, axis=(2, 3)))
    return mean, norm


def _candidate_scores(left, right, lmean, lnorm, rnorm, ul, vl, rows, cols, half, metric):
    size = 2 * half + 1
    lw = left[vl - half : vl + half + 1, ul - half : ul + half + 1]
    win = np.lib.stride_tricks.sliding_window_view(right, (size, size))
    rw = win[rows - half, cols - half]  # (M, size, size)
    if metric == 0:
        lc = lw - lmean[vl, ul]
        num = np.einsum("ij,mij->m", lc, rw)
        den = lnorm[vl, ul] * rnorm[rows, cols]
        ok = (lnorm[vl, ul] ** 2 > ZERO_VAR) & (rnorm[rows, cols] ** 2 > ZERO_VAR)
        return np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    return np.abs(rw - lw[None]).sum(axis=(1, 2)) / (size * size)


def best_in_domain(left, right, lmean, lnorm, rmean, rnorm, ul, vl, intervals, half, metric):
    """Best window in the domain, smallest (row, col) on ties.

    Returns ``(row, col, score, neighbours, evaluated)``; ``neighbours`` holds the
    scores at col-1, col+1, row-1, row+1 (NaN where the window does not fit);
    row is -1 when nothing could be evaluated.
    """
    h, w = right.shape
    nb = np.full(4, np.nan)
    iv = np.asarray(intervals, dtype=np.int64).reshape(-1, 3)
    if iv.shape[0] == 0:
        return -1, -1, math.nan, nb, 0
    lens = iv[:, 2] - iv[:, 1]
    rows = np.repeat(iv[:, 0], lens)
    starts = np.repeat(iv[:, 1] - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
    cols = starts + np.arange(rows.size)
    fit = (rows >= half) & (rows < h - half) & (cols >= half) & (cols < w - half)
    rows, cols = rows[fit], cols[fit]
    if rows.size == 0:
        return -1, -1, math.nan, nb, 0
    scores = _candidate_scores(left, right, lmean, lnorm, rnorm, ul, vl, rows, cols, half, metric)
    k = int(np.argmax(scores)) if metric == 0 else int(np.argmin(scores))
    br, bc = int(rows[k]), int(cols[k])
    for i, (r, cc) in enumerate(((br, bc - 1), (br, bc + 1), (br - 1, bc), (br + 1, bc))):
        if half <= r < h - half and half <= cc < w - half:
            nb[i] = _candidate_scores(
                left, right, lmean, lnorm, rnorm, ul, vl,
                np.array([r]), np.array([cc]), half, metric,
            )[0]
    return br, bc, float(scores[k]), nb, int(rows.size)


def _cell(x):
    return math.floor(x + 0.5)


def domain_intervals(us, vs, inb, radius, width, height):
    """Rasterise the locus polyline, dilate by a Chebyshev radius, merge per row.

    Returns an ``(M, 3)`` int64 array of half-open ``(row, col_start, col_end)``.
    """
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    inb = np.asarray(inb, dtype=bool)
    r = int(radius)
    raw = []

    def add(row, c0, c1):
        if row < -r or row >= height + r:
            return
        c0 = max(c0, -r - 1)
        c1 = min(c1, width + r)
        if c0 <= c1:
            raw.append((row, c0, c1))

    for i in range(us.size):
        if inb[i]:
            add(_cell(vs[i]), _cell(us[i]), _cell(us[i]))
    for i in range(us.size - 1):
        u0, v0, u1, v1 = us[i], vs[i], us[i + 1], vs[i + 1]
        if not (inb[i] or inb[i + 1]) or not all(map(math.isfinite, (u0, v0, u1, v1))):
            continue
        y_lo = max(_cell(min(v0, v1)), -r - 1)
        y_hi = min(_cell(max(v0, v1)), height + r)
        for y in range(y_lo, y_hi + 1):
            if v1 == v0:
                lo, hi = 0.0, 1.0
            else:
                ta = (y - 0.5 - v0) / (v1 - v0)
                tb = (y + 0.5 - v0) / (v1 - v0)
                lo, hi = max(0.0, min(ta, tb)), min(1.0, max(ta, tb))
            if lo > hi:
                continue
            ua = u0 + lo * (u1 - u0)
            ub = u0 + hi * (u1 - u0)
            add(y, _cell(min(ua, ub)), _cell(max(ua, ub)))

    dil = []
    for row, c0, c1 in raw:
        a, b = max(c0 - r, 0), min(c1 + r, width - 1)
        if a > b:
            continue
        for rr in range(max(row - r, 0), min(row + r, height - 1) + 1):
            dil.append((rr, a, b))
    dil.sort()
    out = []
    for row, a, b in dil:
        if out and out[-1][0] == row and a <= out[-1][2]:
            if b + 1 > out[-1][2]:
                out[-1][2] = b + 1
        else:
            out.append([row, a, b + 1])
    return np.array(out, dtype=np.int64).reshape(-1, 3)
