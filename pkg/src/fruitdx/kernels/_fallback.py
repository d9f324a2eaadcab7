"""NumPy implementation of the numeric kernels.

This backend is the import-time fallback when the compiled extension is
missing. The compiled backend mirrors these routines operation for
operation; floating-point expression grouping and per-accumulator
addition order are part of the contract between the two, so any change
here must be applied there as well or they stop being bit-compatible.
"""

import numpy as np
from scipy import ndimage

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def circular_samples(gray, mask, offsets):
    """Sample `gray` at fixed sub-pixel offsets around every pixel.

    gray: float64 (h, w); mask: uint8 (h, w); offsets: float64 (n, 2) rows
    of (dy, dx) with integral components stored exactly. Returns
    (valid, samples): valid marks centers whose own pixel and every
    bilinear support pixel of every offset are masked and in bounds;
    samples is float64 (h, w, n), zero at invalid centers. Offsets with a
    zero fractional part collapse to a single support pixel.
    """
    h, w = gray.shape
    n = offsets.shape[0]
    pad = int(np.ceil(np.abs(offsets).max())) + 1 if n else 1
    gpad = np.pad(gray, pad, constant_values=0.0)
    mpad = np.pad(mask.astype(bool), pad, constant_values=False)

    valid = mask.astype(bool).copy()
    samples = np.zeros((h, w, n), dtype=np.float64)

    def view(arr, dy, dx):
        return arr[pad + dy : pad + dy + h, pad + dx : pad + dx + w]

    for i in range(n):
        dy, dx = offsets[i]
        y0 = int(np.floor(dy))
        x0 = int(np.floor(dx))
        fy = float(dy) - y0
        fx = float(dx) - x0
        y1 = y0 + 1 if fy > 0.0 else y0
        x1 = x0 + 1 if fx > 0.0 else x0
        v00 = view(gpad, y0, x0)
        v01 = view(gpad, y0, x1)
        v10 = view(gpad, y1, x0)
        v11 = view(gpad, y1, x1)
        ok = view(mpad, y0, x0) & view(mpad, y0, x1) & view(mpad, y1, x0) & view(mpad, y1, x1)
        # Grouping matters: the compiled backend evaluates the same tree.
        samples[:, :, i] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * (
            (1.0 - fx) * v10 + fx * v11
        )
        valid &= ok

    samples[~valid] = 0.0
    return valid, samples


def _assign(pts, c):
    dx = pts[:, 0:1] - c[None, :, 0]
    dy = pts[:, 1:2] - c[None, :, 1]
    d2 = dx * dx + dy * dy
    assign = np.argmin(d2, axis=1)
    return assign, d2[np.arange(pts.shape[0]), assign]


def _repair_empty(pts, c, assign, point_d2, k):
    counts = np.bincount(assign, minlength=k)
    for j in np.flatnonzero(counts == 0):
        movable = counts[assign] > 1
        cand = np.where(movable, point_d2, -np.inf)
        p = int(np.argmax(cand))
        counts[assign[p]] -= 1
        assign[p] = j
        counts[j] += 1
        c[j] = pts[p]
        point_d2[p] = 0.0


def lloyd(points, centroids, max_iter, tol):
    """Lloyd iterations with squared-Euclidean assignment on 2-D points.

    Assignment ties break to the lowest centroid index. An empty cluster
    is reseeded at the point farthest from its own centroid, never
    draining a singleton. Returns (centroids, assignments, iterations,
    sse_trace) where the trace holds one post-assignment SSE per
    iteration; trace values are the only output not guaranteed
    bit-identical across backends (summation tree differs).
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    c = np.array(centroids, dtype=np.float64)
    n = pts.shape[0]
    k = c.shape[0]
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        assign, point_d2 = _assign(pts, c)
        _repair_empty(pts, c, assign, point_d2, k)
        trace.append(float(np.sum(point_d2)))
        sums = np.zeros((k, 2), dtype=np.float64)
        np.add.at(sums, assign, pts)
        counts = np.bincount(assign, minlength=k).astype(np.float64)
        newc = sums / counts[:, None]
        ddx = newc[:, 0] - c[:, 0]
        ddy = newc[:, 1] - c[:, 1]
        disp = np.sqrt(ddx * ddx + ddy * ddy).max() if k else 0.0
        c = newc
        if disp < tol:
            break
    assign, point_d2 = _assign(pts, c)
    _repair_empty(pts, c, assign, point_d2, k)
    return c, assign.astype(np.int64), it, np.asarray(trace, dtype=np.float64)


def _window_sum(a, r):
    h, w = a.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    y0 = np.clip(np.arange(h) - r, 0, None)
    y1 = np.minimum(np.arange(h) + r, h - 1) + 1
    x0 = np.clip(np.arange(w) - r, 0, None)
    x1 = np.minimum(np.arange(w) + r, w - 1) + 1
    return (
        integral[np.ix_(y1, x1)]
        - integral[np.ix_(y0, x1)]
        - integral[np.ix_(y1, x0)]
        + integral[np.ix_(y0, x0)]
    )


def box_blur_masked(values, mask, radius):
    """Mean over masked pixels in the clamped (2r+1)^2 window, per masked pixel.

    Unmasked pixels come back as 0. For 8-bit-valued inputs every window
    sum is an exact integer in float64, so the integral-image route here
    and the direct summation in the compiled backend agree bit for bit.
    """
    m = mask.astype(bool)
    out = np.zeros(values.shape, dtype=np.float64)
    if radius <= 0:
        out[m] = values[m]
        return out
    mf = m.astype(np.float64)
    vsum = _window_sum(np.asarray(values, dtype=np.float64) * mf, radius)
    msum = _window_sum(mf, radius)
    out[m] = vsum[m] / msum[m]
    return out


def component_sizes(bins, mask):
    """Size of each pixel's 8-connected same-bin component within the mask.

    bins: int32 (h, w); mask: uint8 (h, w). Unmasked pixels get size 0.
    """
    m = mask.astype(bool)
    sizes = np.zeros(bins.shape, dtype=np.int64)
    for v in np.unique(bins[m]):
        sel = m & (bins == v)
        lab, nlab = ndimage.label(sel, structure=_EIGHT_CONNECTED)
        if nlab == 0:
            continue
        counts = np.bincount(lab.ravel())
        sizes[sel] = counts[lab[sel]]
    return sizes


def cdh_accumulate(color_bins, ori_bins, lab, valid, offsets, n_color, n_ori):
    """Accumulate Lab color differences over the neighbor offsets.

    For every valid center and each (dy, dx) row of `offsets`, the
    Euclidean Lab distance to that neighbor is added to the center's
    color bin when the two pixels share an orientation bin, and to the
    center's orientation bin when the two share a color bin. `valid`
    must already exclude centers whose neighborhood leaves the image.
    """
    h, w = color_bins.shape
    color_hist = np.zeros(n_color, dtype=np.float64)
    ori_hist = np.zeros(n_ori, dtype=np.float64)
    vsel = valid.astype(bool)
    pad = int(np.abs(offsets).max()) if offsets.size else 1
    pad = max(pad, 1)
    cpad = np.pad(color_bins, pad, constant_values=-1)
    opad = np.pad(ori_bins, pad, constant_values=-1)
    lpad = np.pad(lab, ((pad, pad), (pad, pad), (0, 0)), constant_values=0.0)

    def view(arr, dy, dx):
        return arr[pad + dy : pad + dy + h, pad + dx : pad + dx + w]

    L = lab[:, :, 0]
    A = lab[:, :, 1]
    B = lab[:, :, 2]
    for i in range(offsets.shape[0]):
        dy = int(offsets[i, 0])
        dx = int(offsets[i, 1])
        dL = L - view(lpad[:, :, 0], dy, dx)
        dA = A - view(lpad[:, :, 1], dy, dx)
        dB = B - view(lpad[:, :, 2], dy, dx)
        d = np.sqrt((dL * dL + dA * dA) + dB * dB)
        same_o = vsel & (ori_bins == view(opad, dy, dx))
        np.add.at(color_hist, color_bins[same_o], d[same_o])
        same_c = vsel & (color_bins == view(cpad, dy, dx))
        np.add.at(ori_hist, ori_bins[same_c], d[same_c])
    return color_hist, ori_hist


def seh_counts(bins, mask, n_bins):
    """Count 2x2 structuring-element matches over a stride-2 grid.

    Five elements (horizontal, vertical, 45 deg, 135 deg, all-four); an
    element matches when every cell it covers is in bounds, masked, and
    carries one bin value. Returns int64 per-bin match counts.
    """
    h, w = bins.shape
    hp = h + (h % 2)
    wp = w + (w % 2)
    b = np.full((hp, wp), -1, dtype=np.int64)
    b[:h, :w] = bins
    m = np.zeros((hp, wp), dtype=bool)
    m[:h, :w] = mask.astype(bool)
    b00, b01 = b[0::2, 0::2], b[0::2, 1::2]
    b10, b11 = b[1::2, 0::2], b[1::2, 1::2]
    m00, m01 = m[0::2, 0::2], m[0::2, 1::2]
    m10, m11 = m[1::2, 0::2], m[1::2, 1::2]
    counts = np.zeros(n_bins, dtype=np.int64)

    def tally(anchor, sel):
        if sel.any():
            counts[:] += np.bincount(anchor[sel], minlength=n_bins)

    tally(b00, m00 & m01 & (b00 == b01))
    tally(b00, m00 & m10 & (b00 == b10))
    tally(b10, m10 & m01 & (b10 == b01))
    tally(b00, m00 & m11 & (b00 == b11))
    tally(b00, m00 & m01 & m10 & m11 & (b00 == b01) & (b00 == b10) & (b00 == b11))
    return counts
