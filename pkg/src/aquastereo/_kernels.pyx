# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_fallback`` exactly in contract."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, fabs, isfinite, NAN
from libc.stdlib cimport qsort, malloc, free

cnp.import_array()

DEF MAX_NEWTON_STEPS = 100
DEF GRAD_TOL = 1e-12
DEF ZERO_VAR = 1e-12


cdef inline double dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline double unit3(double x, double y, double z, double* u) noexcept nogil:
    cdef double l = sqrt(x * x + y * y + z * z)
    u[0] = x / l
    u[1] = y / l
    u[2] = z / l
    return l


cdef inline double norm3(double x, double y, double z) noexcept nogil:
    return sqrt(x * x + y * y + z * z)


cdef int solve4(double* h, double* g, double* x) noexcept nogil:
    """Cholesky solve of the 4x4 SPD system h x = g. Returns 0 on failure."""
    cdef double l[16]
    cdef double y[4]
    cdef int i, j, k
    cdef double s
    for i in range(16):
        l[i] = 0.0
    for i in range(4):
        for j in range(i + 1):
            s = h[i * 4 + j]
            for k in range(j):
                s -= l[i * 4 + k] * l[j * 4 + k]
            if i == j:
                if s <= 0.0:
                    return 0
                l[i * 4 + i] = sqrt(s)
            else:
                l[i * 4 + j] = s / l[j * 4 + j]
    for i in range(4):
        s = g[i]
        for k in range(i):
            s -= l[i * 4 + k] * y[k]
        y[i] = s / l[i * 4 + i]
    for i in range(3, -1, -1):
        s = y[i]
        for k in range(i + 1, 4):
            s -= l[k * 4 + i] * x[k]
        x[i] = s / l[i * 4 + i]
    return 1


cdef inline void add_block(double* h, int r0, int c0, double k,
                           double u0, double u1) noexcept nogil:
    h[r0 * 4 + c0] += k * (1.0 - u0 * u0)
    h[r0 * 4 + c0 + 1] += k * (-u0 * u1)
    h[(r0 + 1) * 4 + c0] += k * (-u0 * u1)
    h[(r0 + 1) * 4 + c0 + 1] += k * (1.0 - u1 * u1)


def plane_basis(normal):
    n = np.asarray(normal, dtype=np.float64)
    a = np.array([0.0, 1.0, 0.0]) if abs(n[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = a - (a @ n) * n
    e1 /= np.sqrt(e1 @ e1)
    e2 = np.cross(n, e1)
    return e1, e2


def fermat_paths(center, normal, double inner, double thickness, double n_air,
                 double n_glass, double n_water, points):
    c_ = np.ascontiguousarray(center, dtype=np.float64)
    n_ = np.ascontiguousarray(normal, dtype=np.float64)
    e1_, e2_ = plane_basis(n_)
    frame = np.stack([e1_, e2_, n_])
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef double[:, ::1] xl = np.ascontiguousarray((pts - c_) @ frame.T)
    cdef Py_ssize_t count = xl.shape[0]
    cdef double ha = inner - float(n_ @ c_)
    cdef double[::1] c = c_
    cdef double[::1] n = n_
    cdef double[::1] e1 = e1_
    cdef double[::1] e2 = e2_
    out1 = np.empty((count, 3))
    out2 = np.empty((count, 3))
    status_ = np.empty(count, dtype=np.int8)
    iters_ = np.zeros(count, dtype=np.int32)
    cdef double[:, ::1] p1o = out1
    cdef double[:, ::1] p2o = out2
    cdef cnp.int8_t[::1] status = status_
    cdef cnp.int32_t[::1] iters = iters_

    cdef double ua[3]
    cdef double ug[3]
    cdef double uw[3]
    cdef double z[4]
    cdef double g[4]
    cdef double step[4]
    cdef double h[16]
    cdef double la, lg, lw, length, gnorm, s, f, ka, kg, kw, wz, x0, x1, z0, z1, z2, z3
    cdef Py_ssize_t i
    cdef int it, k, ls, converged

    with nogil:
        for i in range(count):
            wz = xl[i, 2] - ha - thickness
            if wz <= 0.0 or ha <= 0.0:
                status[i] = 3
                iters[i] = 0
                for k in range(3):
                    p1o[i, k] = NAN
                    p2o[i, k] = NAN
                continue
            x0 = xl[i, 0]
            x1 = xl[i, 1]
            z[0] = x0 * (ha / xl[i, 2])
            z[1] = x1 * (ha / xl[i, 2])
            z[2] = x0 * (thickness / xl[i, 2])
            z[3] = x1 * (thickness / xl[i, 2])
            converged = 0
            it = 0
            while True:
                la = unit3(z[0], z[1], ha, ua)
                lg = unit3(z[2], z[3], thickness, ug)
                lw = unit3(x0 - z[0] - z[2], x1 - z[1] - z[3], wz, uw)
                length = n_air * la + n_glass * lg + n_water * lw
                g[0] = n_air * ua[0] - n_water * uw[0]
                g[1] = n_air * ua[1] - n_water * uw[1]
                g[2] = n_glass * ug[0] - n_water * uw[0]
                g[3] = n_glass * ug[1] - n_water * uw[1]
                gnorm = sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3])
                if gnorm < GRAD_TOL * length:
                    converged = 1
                    break
                if it == MAX_NEWTON_STEPS:
                    break
                it += 1
                ka = n_air / la
                kg = n_glass / lg
                kw = n_water / lw
                for k in range(16):
                    h[k] = 0.0
                add_block(h, 0, 0, ka, ua[0], ua[1])
                add_block(h, 0, 0, kw, uw[0], uw[1])
                add_block(h, 0, 2, kw, uw[0], uw[1])
                add_block(h, 2, 0, kw, uw[0], uw[1])
                add_block(h, 2, 2, kg, ug[0], ug[1])
                add_block(h, 2, 2, kw, uw[0], uw[1])
                for k in range(4):
                    g[k] = -g[k]
                if not solve4(h, g, step):
                    break
                s = 1.0
                for ls in range(40):
                    z0 = z[0] + s * step[0]
                    z1 = z[1] + s * step[1]
                    z2 = z[2] + s * step[2]
                    z3 = z[3] + s * step[3]
                    f = (n_air * norm3(z0, z1, ha) + n_glass * norm3(z2, z3, thickness)
                         + n_water * norm3(x0 - z0 - z2, x1 - z1 - z3, wz))
                    if f <= length * (1.0 + 1e-15):
                        break
                    s *= 0.5
                for k in range(4):
                    z[k] = z[k] + s * step[k]
            status[i] = 0 if converged else 1
            iters[i] = it
            for k in range(3):
                p1o[i, k] = c[k] + z[0] * e1[k] + z[1] * e2[k] + ha * n[k]
                p2o[i, k] = p1o[i, k] + z[2] * e1[k] + z[3] * e2[k] + thickness * n[k]
    return out1, out2, status_, iters_


def window_stats(image, int half):
    cdef double[:, ::1] img = np.ascontiguousarray(image, dtype=np.float64)
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    mean_ = np.full((h, w), np.nan)
    norm_ = np.full((h, w), np.nan)
    cdef double[:, ::1] mean = mean_
    cdef double[:, ::1] norm = norm_
    cdef Py_ssize_t r, c, i, j
    cdef double s, m, d
    cdef int size = 2 * half + 1
    with nogil:
        for r in range(half, h - half):
            for c in range(half, w - half):
                s = 0.0
                for i in range(r - half, r + half + 1):
                    for j in range(c - half, c + half + 1):
                        s = s + img[i, j]
                m = s / (size * size)
                s = 0.0
                for i in range(r - half, r + half + 1):
                    for j in range(c - half, c + half + 1):
                        d = img[i, j] - m
                        s = s + d * d
                mean[r, c] = m
                norm[r, c] = sqrt(s)
    return mean_, norm_


cdef double score_at(const double[:, ::1] left, const double[:, ::1] right,
                     const double[:, ::1] lmean, const double[:, ::1] lnorm,
                     const double[:, ::1] rnorm, Py_ssize_t ul, Py_ssize_t vl,
                     Py_ssize_t ur, Py_ssize_t vr, int half, int metric) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0, lm, ln, rn
    cdef int size = 2 * half + 1
    if metric == 0:
        ln = lnorm[vl, ul]
        rn = rnorm[vr, ur]
        if ln * ln <= ZERO_VAR or rn * rn <= ZERO_VAR:
            return 0.0
        lm = lmean[vl, ul]
        for i in range(-half, half + 1):
            for j in range(-half, half + 1):
                s = s + (left[vl + i, ul + j] - lm) * right[vr + i, ur + j]
        return s / (ln * rn)
    for i in range(-half, half + 1):
        for j in range(-half, half + 1):
            s = s + fabs(left[vl + i, ul + j] - right[vr + i, ur + j])
    return s / (size * size)


def best_in_domain(left, right, lmean, lnorm, rmean, rnorm, Py_ssize_t ul, Py_ssize_t vl,
                   intervals, int half, int metric):
    cdef const double[:, ::1] L = np.ascontiguousarray(left, dtype=np.float64)
    cdef const double[:, ::1] R = np.ascontiguousarray(right, dtype=np.float64)
    cdef const double[:, ::1] LM = np.ascontiguousarray(lmean, dtype=np.float64)
    cdef const double[:, ::1] LN = np.ascontiguousarray(lnorm, dtype=np.float64)
    cdef const double[:, ::1] RN = np.ascontiguousarray(rnorm, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] iv = np.ascontiguousarray(intervals, dtype=np.int64).reshape(-1, 3)
    cdef Py_ssize_t h = R.shape[0], w = R.shape[1]
    cdef Py_ssize_t m, r, col, c0, c1, br = -1, bc = -1, count = 0
    cdef double s, best = NAN
    nb = np.full(4, np.nan)
    with nogil:
        for m in range(iv.shape[0]):
            r = iv[m, 0]
            if r < half or r >= h - half:
                continue
            c0 = iv[m, 1]
            c1 = iv[m, 2]
            if c0 < half:
                c0 = half
            if c1 > w - half:
                c1 = w - half
            for col in range(c0, c1):
                s = score_at(L, R, LM, LN, RN, ul, vl, col, r, half, metric)
                count += 1
                if br < 0 or (metric == 0 and s > best) or (metric != 0 and s < best):
                    best = s
                    br = r
                    bc = col
    if br < 0:
        return -1, -1, float("nan"), nb, 0
    offsets = ((br, bc - 1), (br, bc + 1), (br - 1, bc), (br + 1, bc))
    for k in range(4):
        r, col = offsets[k]
        if half <= r < h - half and half <= col < w - half:
            nb[k] = score_at(L, R, LM, LN, RN, ul, vl, col, r, half, metric)
    return br, bc, best, nb, count


cdef int cmp_iv(const void* a, const void* b) noexcept nogil:
    cdef const long long* x = <const long long*>a
    cdef const long long* y = <const long long*>b
    if x[0] != y[0]:
        return -1 if x[0] < y[0] else 1
    if x[1] != y[1]:
        return -1 if x[1] < y[1] else 1
    if x[2] != y[2]:
        return -1 if x[2] < y[2] else 1
    return 0


cdef inline long long cell(double x) noexcept nogil:
    return <long long>floor(x + 0.5)


cdef class _Raw:
    cdef long long* buf
    cdef Py_ssize_t n, cap

    def __cinit__(self):
        self.cap = 256
        self.n = 0
        self.buf = <long long*>malloc(self.cap * 3 * sizeof(long long))
        if self.buf == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.buf)

    cdef int push(self, long long row, long long c0, long long c1) except -1:
        cdef long long* nbuf
        cdef Py_ssize_t k
        if self.n == self.cap:
            nbuf = <long long*>malloc(self.cap * 2 * 3 * sizeof(long long))
            if nbuf == NULL:
                raise MemoryError()
            for k in range(self.n * 3):
                nbuf[k] = self.buf[k]
            free(self.buf)
            self.buf = nbuf
            self.cap *= 2
        self.buf[self.n * 3] = row
        self.buf[self.n * 3 + 1] = c0
        self.buf[self.n * 3 + 2] = c1
        self.n += 1
        return 0


cdef int add_raw(_Raw raw, long long row, long long c0, long long c1, long long r,
                 long long width, long long height) except -1:
    if row < -r or row >= height + r:
        return 0
    if c0 < -r - 1:
        c0 = -r - 1
    if c1 > width + r:
        c1 = width + r
    if c0 <= c1:
        raw.push(row, c0, c1)
    return 0


def domain_intervals(us, vs, inb, int radius, long long width, long long height):
    cdef const double[::1] U = np.ascontiguousarray(us, dtype=np.float64)
    cdef const double[::1] V = np.ascontiguousarray(vs, dtype=np.float64)
    cdef const cnp.uint8_t[::1] B = np.ascontiguousarray(inb, dtype=np.uint8)
    cdef Py_ssize_t n = U.shape[0], i
    cdef long long r = radius, y, y_lo, y_hi, a, b, rr
    cdef double u0, v0, u1, v1, lo, hi, ta, tb, ua, ub
    cdef _Raw raw = _Raw()
    cdef _Raw dil = _Raw()

    for i in range(n):
        if B[i]:
            add_raw(raw, cell(V[i]), cell(U[i]), cell(U[i]), r, width, height)
    for i in range(n - 1):
        u0 = U[i]
        v0 = V[i]
        u1 = U[i + 1]
        v1 = V[i + 1]
        if not (B[i] or B[i + 1]):
            continue
        if not (isfinite(u0) and isfinite(v0) and isfinite(u1) and isfinite(v1)):
            continue
        y_lo = cell(v0 if v0 < v1 else v1)
        y_hi = cell(v1 if v0 < v1 else v0)
        if y_lo < -r - 1:
            y_lo = -r - 1
        if y_hi > height + r:
            y_hi = height + r
        for y in range(y_lo, y_hi + 1):
            if v1 == v0:
                lo = 0.0
                hi = 1.0
            else:
                ta = (y - 0.5 - v0) / (v1 - v0)
                tb = (y + 0.5 - v0) / (v1 - v0)
                lo = ta if ta < tb else tb
                hi = tb if ta < tb else ta
                if lo < 0.0:
                    lo = 0.0
                if hi > 1.0:
                    hi = 1.0
            if lo > hi:
                continue
            ua = u0 + lo * (u1 - u0)
            ub = u0 + hi * (u1 - u0)
            add_raw(raw, y, cell(ua if ua < ub else ub), cell(ub if ua < ub else ua),
                    r, width, height)

    for i in range(raw.n):
        a = raw.buf[i * 3 + 1] - r
        b = raw.buf[i * 3 + 2] + r
        if a < 0:
            a = 0
        if b > width - 1:
            b = width - 1
        if a > b:
            continue
        y = raw.buf[i * 3]
        y_lo = y - r if y - r > 0 else 0
        y_hi = y + r if y + r < height - 1 else height - 1
        for rr in range(y_lo, y_hi + 1):
            dil.push(rr, a, b)
    qsort(dil.buf, dil.n, 3 * sizeof(long long), cmp_iv)

    out = np.empty((dil.n, 3), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    cdef Py_ssize_t m = 0
    for i in range(dil.n):
        y = dil.buf[i * 3]
        a = dil.buf[i * 3 + 1]
        b = dil.buf[i * 3 + 2]
        if m > 0 and o[m - 1, 0] == y and a <= o[m - 1, 2]:
            if b + 1 > o[m - 1, 2]:
                o[m - 1, 2] = b + 1
        else:
            o[m, 0] = y
            o[m, 1] = a
            o[m, 2] = b + 1
            m += 1
    return out[:m].copy()
