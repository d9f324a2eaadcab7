# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the numeric kernels.

Mirrors fruitdx.kernels._fallback routine for routine. Floating-point
expression grouping and per-accumulator addition order are kept
identical to the NumPy backend so both produce bit-equal outputs
(the Lloyd SSE trace is the one documented exception); the extension is
built with -ffp-contract=off for the same reason.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, floor, sqrt

cnp.import_array()


def circular_samples(double[:, ::1] gray, unsigned char[:, ::1] mask,
                     double[:, ::1] offsets):
    """See fruitdx.kernels._fallback.circular_samples."""
    cdef Py_ssize_t h = gray.shape[0]
    cdef Py_ssize_t w = gray.shape[1]
    cdef Py_ssize_t n = offsets.shape[0]
    valid_arr = np.zeros((h, w), dtype=np.uint8)
    samples_arr = np.zeros((h, w, n), dtype=np.float64)
    cdef unsigned char[:, ::1] valid = valid_arr
    cdef double[:, :, ::1] samples = samples_arr
    cdef double dy, dx, fy, fx, v00, v01, v10, v11
    cdef Py_ssize_t i, y, x, oy0, ox0, oy1, ox1, y0, x0, y1, x1

    for y in range(h):
        for x in range(w):
            valid[y, x] = 1 if mask[y, x] != 0 else 0

    for i in range(n):
        dy = offsets[i, 0]
        dx = offsets[i, 1]
        oy0 = <Py_ssize_t>floor(dy)
        ox0 = <Py_ssize_t>floor(dx)
        fy = dy - oy0
        fx = dx - ox0
        oy1 = oy0 + 1 if fy > 0.0 else oy0
        ox1 = ox0 + 1 if fx > 0.0 else ox0
        for y in range(h):
            for x in range(w):
                if valid[y, x] == 0:
                    continue
                y0 = y + oy0
                y1 = y + oy1
                x0 = x + ox0
                x1 = x + ox1
                if y0 < 0 or y1 < 0 or y0 >= h or y1 >= h or \
                        x0 < 0 or x1 < 0 or x0 >= w or x1 >= w:
                    valid[y, x] = 0
                    continue
                if mask[y0, x0] == 0 or mask[y0, x1] == 0 or \
                        mask[y1, x0] == 0 or mask[y1, x1] == 0:
                    valid[y, x] = 0
                    continue
                v00 = gray[y0, x0]
                v01 = gray[y0, x1]
                v10 = gray[y1, x0]
                v11 = gray[y1, x1]
                samples[y, x, i] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + \
                    fy * ((1.0 - fx) * v10 + fx * v11)

    for y in range(h):
        for x in range(w):
            if valid[y, x] == 0:
                for i in range(n):
                    samples[y, x, i] = 0.0
    return valid_arr.view(np.bool_), samples_arr


cdef inline void _assign_pts(double[:, ::1] pts, double[:, ::1] c,
                             cnp.int64_t[::1] assign, double[::1] point_d2) noexcept nogil:
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t k = c.shape[0]
    cdef Py_ssize_t i, j, bj
    cdef double px, py, dx, dy, d, best
    for i in range(n):
        px = pts[i, 0]
        py = pts[i, 1]
        best = INFINITY
        bj = 0
        for j in range(k):
            dx = px - c[j, 0]
            dy = py - c[j, 1]
            d = dx * dx + dy * dy
            if d < best:
                best = d
                bj = j
        assign[i] = bj
        point_d2[i] = best


cdef inline void _repair(double[:, ::1] pts, double[:, ::1] c,
                         cnp.int64_t[::1] assign, double[::1] point_d2,
                         cnp.int64_t[::1] counts) noexcept nogil:
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t k = c.shape[0]
    cdef Py_ssize_t i, j, p
    cdef double best
    for j in range(k):
        counts[j] = 0
    for i in range(n):
        counts[assign[i]] += 1
    for j in range(k):
        if counts[j] != 0:
            continue
        p = -1
        best = -INFINITY
        for i in range(n):
            if counts[assign[i]] > 1 and point_d2[i] > best:
                best = point_d2[i]
                p = i
        if p < 0:
            p = 0
        counts[assign[p]] -= 1
        assign[p] = j
        counts[j] += 1
        c[j, 0] = pts[p, 0]
        c[j, 1] = pts[p, 1]
        point_d2[p] = 0.0


def lloyd(points, centroids, Py_ssize_t max_iter, double tol):
    """See fruitdx.kernels._fallback.lloyd."""
    pts_arr = np.ascontiguousarray(points, dtype=np.float64)
    c_arr = np.array(centroids, dtype=np.float64)
    cdef double[:, ::1] pts = pts_arr
    cdef double[:, ::1] c = c_arr
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t k = c.shape[0]
    assign_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] assign = assign_arr
    d2_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] point_d2 = d2_arr
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    sums_arr = np.zeros((k, 2), dtype=np.float64)
    cdef double[:, ::1] sums = sums_arr
    cdef Py_ssize_t it = 0, i, j
    cdef double s, nx, ny, ddx, ddy, dd, disp
    trace = []

    for it in range(1, max_iter + 1):
        _assign_pts(pts, c, assign, point_d2)
        _repair(pts, c, assign, point_d2, counts)
        s = 0.0
        for i in range(n):
            s += point_d2[i]
        trace.append(s)
        for j in range(k):
            sums[j, 0] = 0.0
            sums[j, 1] = 0.0
            counts[j] = 0
        for i in range(n):
            j = assign[i]
            sums[j, 0] += pts[i, 0]
            sums[j, 1] += pts[i, 1]
            counts[j] += 1
        disp = 0.0
        for j in range(k):
            nx = sums[j, 0] / counts[j]
            ny = sums[j, 1] / counts[j]
            ddx = nx - c[j, 0]
            ddy = ny - c[j, 1]
            dd = sqrt(ddx * ddx + ddy * ddy)
            if dd > disp:
                disp = dd
            c[j, 0] = nx
            c[j, 1] = ny
        if disp < tol:
            break
    _assign_pts(pts, c, assign, point_d2)
    _repair(pts, c, assign, point_d2, counts)
    return c_arr, assign_arr, it, np.asarray(trace, dtype=np.float64)


def box_blur_masked(double[:, ::1] values, unsigned char[:, ::1] mask,
                    Py_ssize_t radius):
    """See fruitdx.kernels._fallback.box_blur_masked."""
    cdef Py_ssize_t h = values.shape[0]
    cdef Py_ssize_t w = values.shape[1]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, yy, xx, y0, y1, x0, x1
    cdef double s, cnt
    if radius <= 0:
        for y in range(h):
            for x in range(w):
                if mask[y, x] != 0:
                    out[y, x] = values[y, x]
        return out_arr
    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0:
                continue
            y0 = y - radius
            if y0 < 0:
                y0 = 0
            y1 = y + radius
            if y1 > h - 1:
                y1 = h - 1
            x0 = x - radius
            if x0 < 0:
                x0 = 0
            x1 = x + radius
            if x1 > w - 1:
                x1 = w - 1
            s = 0.0
            cnt = 0.0
            for yy in range(y0, y1 + 1):
                for xx in range(x0, x1 + 1):
                    if mask[yy, xx] != 0:
                        s += values[yy, xx]
                        cnt += 1.0
            out[y, x] = s / cnt
    return out_arr


cdef inline Py_ssize_t _find(cnp.intp_t[::1] par, Py_ssize_t i) noexcept nogil:
    while par[i] != i:
        par[i] = par[par[i]]
        i = par[i]
    return i


cdef inline void _union(cnp.intp_t[::1] par, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef Py_ssize_t ra = _find(par, a)
    cdef Py_ssize_t rb = _find(par, b)
    if ra != rb:
        par[rb] = ra


def component_sizes(cnp.int32_t[:, ::1] bins, unsigned char[:, ::1] mask):
    """See fruitdx.kernels._fallback.component_sizes."""
    cdef Py_ssize_t h = bins.shape[0]
    cdef Py_ssize_t w = bins.shape[1]
    par_arr = np.arange(h * w, dtype=np.intp)
    cdef cnp.intp_t[::1] par = par_arr
    cnt_arr = np.zeros(h * w, dtype=np.int64)
    cdef cnp.int64_t[::1] cnt = cnt_arr
    sizes_arr = np.zeros((h, w), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] sizes = sizes_arr
    cdef Py_ssize_t y, x, idx, r
    cdef cnp.int32_t b
    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0:
                continue
            b = bins[y, x]
            idx = y * w + x
            if y > 0:
                if x > 0 and mask[y - 1, x - 1] != 0 and bins[y - 1, x - 1] == b:
                    _union(par, idx, idx - w - 1)
                if mask[y - 1, x] != 0 and bins[y - 1, x] == b:
                    _union(par, idx, idx - w)
                if x < w - 1 and mask[y - 1, x + 1] != 0 and bins[y - 1, x + 1] == b:
                    _union(par, idx, idx - w + 1)
            if x > 0 and mask[y, x - 1] != 0 and bins[y, x - 1] == b:
                _union(par, idx, idx - 1)
    for y in range(h):
        for x in range(w):
            if mask[y, x] != 0:
                cnt[_find(par, y * w + x)] += 1
    for y in range(h):
        for x in range(w):
            if mask[y, x] != 0:
                sizes[y, x] = cnt[_find(par, y * w + x)]
    return sizes_arr


def cdh_accumulate(cnp.int32_t[:, ::1] color_bins, cnp.int32_t[:, ::1] ori_bins,
                   double[:, :, ::1] lab, unsigned char[:, ::1] valid,
                   cnp.int32_t[:, ::1] offsets, Py_ssize_t n_color, Py_ssize_t n_ori):
    """See fruitdx.kernels._fallback.cdh_accumulate."""
    cdef Py_ssize_t h = color_bins.shape[0]
    cdef Py_ssize_t w = color_bins.shape[1]
    color_arr = np.zeros(n_color, dtype=np.float64)
    ori_arr = np.zeros(n_ori, dtype=np.float64)
    cdef double[::1] color_hist = color_arr
    cdef double[::1] ori_hist = ori_arr
    cdef Py_ssize_t i, y, x, ny, nx
    cdef cnp.int32_t dy, dx
    cdef double dL, dA, dB, d
    for i in range(offsets.shape[0]):
        dy = offsets[i, 0]
        dx = offsets[i, 1]
        for y in range(h):
            ny = y + dy
            if ny < 0 or ny >= h:
                continue
            for x in range(w):
                if valid[y, x] == 0:
                    continue
                nx = x + dx
                if nx < 0 or nx >= w:
                    continue
                dL = lab[y, x, 0] - lab[ny, nx, 0]
                dA = lab[y, x, 1] - lab[ny, nx, 1]
                dB = lab[y, x, 2] - lab[ny, nx, 2]
                d = sqrt((dL * dL + dA * dA) + dB * dB)
                if ori_bins[y, x] == ori_bins[ny, nx]:
                    color_hist[color_bins[y, x]] += d
                if color_bins[y, x] == color_bins[ny, nx]:
                    ori_hist[ori_bins[y, x]] += d
    return color_arr, ori_arr


def seh_counts(cnp.int32_t[:, ::1] bins, unsigned char[:, ::1] mask, Py_ssize_t n_bins):
    """See fruitdx.kernels._fallback.seh_counts."""
    cdef Py_ssize_t h = bins.shape[0]
    cdef Py_ssize_t w = bins.shape[1]
    counts_arr = np.zeros(n_bins, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef Py_ssize_t y, x
    cdef bint has01, has10, m00, m01, m10, m11
    cdef cnp.int32_t b00
    for y in range(0, h, 2):
        for x in range(0, w, 2):
            has01 = x + 1 < w
            has10 = y + 1 < h
            m00 = mask[y, x] != 0
            m01 = has01 and mask[y, x + 1] != 0
            m10 = has10 and mask[y + 1, x] != 0
            m11 = has01 and has10 and mask[y + 1, x + 1] != 0
            b00 = bins[y, x]
            if m00 and m01 and b00 == bins[y, x + 1]:
                counts[b00] += 1
            if m00 and m10 and b00 == bins[y + 1, x]:
                counts[b00] += 1
            if m10 and m01 and bins[y + 1, x] == bins[y, x + 1]:
                counts[bins[y + 1, x]] += 1
            if m00 and m11 and b00 == bins[y + 1, x + 1]:
                counts[b00] += 1
            if m00 and m01 and m10 and m11 and b00 == bins[y, x + 1] and \
                    b00 == bins[y + 1, x] and b00 == bins[y + 1, x + 1]:
                counts[b00] += 1
    return counts_arr
