"""Color and texture descriptors over a masked image region.

Seven extractors (gch, ccv, cdh, seh, lbp, ltp, clbp) that consider only
pixels where the mask is true, plus L1 normalization and feature-level
fusion by concatenation. For the neighborhood-based extractors a center
pixel contributes only if every sampling point it needs lands on masked,
in-bounds pixels (all four bilinear support pixels, for interpolated
points), so pixels outside the masked region never leak into the
statistics.

Conventions that matter for reproducing values independently:
- circular neighbor n sits at (x + R cos(2 pi n / N), y - R sin(2 pi n / N)),
  i.e. n = 0 points east and n walks counterclockwise with image y down;
  offsets within 1e-9 of an integer are snapped so that for N=8, R=1 the
  axis-aligned neighbors read exact grid pixels;
- off-grid samples are bilinear:
  (1-fy)*((1-fx)*v00 + fx*v01) + fy*((1-fx)*v10 + fx*v11).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fruitdx import kernels
from fruitdx.errors import (
    EmptyRegionError,
    NumericError,
    PreconditionError,
    RangeError,
)
from fruitdx.imaging import (
    GRAY8,
    RGB8,
    ImageBuffer,
    _require_space,
    quantize_uniform,
    rgb_to_hsv,
    rgb_to_lab,
)

EXTRACTOR_NAMES = ("gch", "ccv", "cdh", "seh", "lbp", "ltp", "clbp")

CLBP_MEAN_MAGNITUDE = "magnitude_mean"
CLBP_MEAN_GRAY = "gray_mean"


@dataclass(frozen=True)
class DescriptorConfig:
    """Tunable parameters for all seven extractors."""

    gch_levels: int = 4
    ccv_levels: int = 4
    ccv_blur_radius: int = 1
    ccv_tau: float = 0.01
    lbp_neighbors: int = 8
    lbp_radius: float = 1.0
    ltp_theta: float = 5.0
    cdh_color_bins: int = 90
    cdh_orientation_bins: int = 18
    cdh_distance: int = 1
    seh_bins: int = 72
    clbp_m_threshold: str = CLBP_MEAN_MAGNITUDE

    def __post_init__(self):
        if min(self.gch_levels, self.ccv_levels, self.lbp_neighbors) < 1:
            raise PreconditionError("quantization levels and neighbor counts must be >= 1")
        if self.ccv_blur_radius < 0 or self.ccv_tau < 0:
            raise PreconditionError("ccv_blur_radius and ccv_tau must be >= 0")
        if self.lbp_radius <= 0:
            raise PreconditionError("lbp_radius must be > 0")
        if self.ltp_theta < 0:
            raise PreconditionError("ltp_theta must be >= 0")
        if self.cdh_color_bins < 9 or self.cdh_color_bins % 9 != 0:
            raise PreconditionError("cdh_color_bins must be a positive multiple of 9")
        if self.cdh_orientation_bins < 1 or self.cdh_distance < 1:
            raise PreconditionError("cdh_orientation_bins and cdh_distance must be >= 1")
        if self.seh_bins != 72:
            raise PreconditionError("seh_bins is fixed at 72 (8 hues x 3 x 3)")
        if self.clbp_m_threshold not in (CLBP_MEAN_MAGNITUDE, CLBP_MEAN_GRAY):
            raise PreconditionError(f"unknown clbp_m_threshold {self.clbp_m_threshold!r}")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Ordered real vector plus the provenance of its descriptor blocks.

    `blocks` lists (name, offset, length) segments that tile the vector;
    `degenerate` names blocks that came out all-zero (solid-color regions
    for cdh/seh) and were left unnormalized.
    """

    values: np.ndarray
    blocks: tuple[tuple[str, int, int], ...]
    degenerate: tuple[str, ...] = ()

    def __post_init__(self):
        expect = 0
        for name, off, length in self.blocks:
            if off != expect or length < 1:
                raise PreconditionError("blocks must tile the vector contiguously")
            expect = off + length
        if expect != self.values.shape[0]:
            raise PreconditionError("block lengths do not sum to the vector length")
        self.values.setflags(write=False)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def block(self, name: str) -> np.ndarray:
        for nm, off, length in self.blocks:
            if nm == name:
                return self.values[off : off + length]
        raise KeyError(name)


def feature_length(name: str, config: DescriptorConfig) -> int:
    """Vector length the named extractor produces under this config."""
    lengths = {
        "gch": config.gch_levels**3,
        "ccv": 2 * config.ccv_levels**3,
        "cdh": config.cdh_color_bins + config.cdh_orientation_bins,
        "seh": config.seh_bins,
        "lbp": 2**config.lbp_neighbors,
        "ltp": 2 * 2**config.lbp_neighbors,
        "clbp": 2 * 2**config.lbp_neighbors + 2,
    }
    if name not in lengths:
        raise PreconditionError(f"unknown descriptor {name!r}")
    return lengths[name]


def _check_region(img: ImageBuffer, mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (img.height, img.width):
        raise PreconditionError(
            f"mask shape {mask.shape} does not match image {img.height}x{img.width}"
        )
    if not mask.any():
        raise EmptyRegionError("mask selects no pixels")
    return mask


def _single_block(name: str, values: np.ndarray, degenerate: bool = False) -> FeatureVector:
    return FeatureVector(
        values=values,
        blocks=((name, 0, int(values.shape[0])),),
        degenerate=(name,) if degenerate else (),
    )


# --------------------------------------------------------------------------
# color descriptors


def gch(img: ImageBuffer, mask, config: DescriptorConfig) -> FeatureVector:
    """Global color histogram over the masked pixels, L1-normalized."""
    _require_space(img, RGB8, "gch")
    mask = _check_region(img, mask)
    q = quantize_uniform(img, config.gch_levels)
    hist = np.bincount(q.indices[mask], minlength=q.bins).astype(np.float64)
    return _single_block("gch", hist / hist.sum())


def ccv(img: ImageBuffer, mask, config: DescriptorConfig) -> FeatureVector:
    """Color coherence vector: coherent and incoherent histograms, jointly
    normalized.

    The masked region is box-blurred (within the mask), quantized, and
    split into 8-connected same-color components; pixels in components of
    at least ceil(tau * masked-pixel-count) are coherent.
    """
    _require_space(img, RGB8, "ccv")
    mask = _check_region(img, mask)
    levels = config.ccv_levels
    bins = levels**3
    m8 = np.ascontiguousarray(mask, dtype=np.uint8)
    idx = np.zeros((img.height, img.width), dtype=np.int64)
    for ch in range(3):
        channel = np.ascontiguousarray(img.data[..., ch], dtype=np.float64)
        blurred = kernels.box_blur_masked(channel, m8, config.ccv_blur_radius)
        q = np.floor(blurred / 256.0 * levels).astype(np.int64)
        np.clip(q, 0, levels - 1, out=q)
        idx = idx * levels + q
    idx32 = np.ascontiguousarray(idx, dtype=np.int32)
    sizes = kernels.component_sizes(idx32, m8)
    count = int(mask.sum())
    threshold = math.ceil(config.ccv_tau * count)
    coherent = sizes >= threshold
    coh = np.bincount(idx32[mask & coherent], minlength=bins)
    inc = np.bincount(idx32[mask & ~coherent], minlength=bins)
    values = np.concatenate([coh, inc]).astype(np.float64) / count
    return _single_block("ccv", values)


def _lab_edge_orientation(lab: np.ndarray) -> np.ndarray:
    """Edge-tangent orientation in degrees [0, 180) from Lab Sobel gradients.

    Uses the multichannel structure tensor; the returned angle is the
    direction of the edge itself (vertical stripes give 90), not of the
    gradient.
    """
    h, w = lab.shape[:2]
    p = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")

    def sh(dy, dx):
        return p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w, :]

    gx = (sh(-1, 1) + 2.0 * sh(0, 1) + sh(1, 1)) - (sh(-1, -1) + 2.0 * sh(0, -1) + sh(1, -1))
    gy = (sh(1, -1) + 2.0 * sh(1, 0) + sh(1, 1)) - (sh(-1, -1) + 2.0 * sh(-1, 0) + sh(-1, 1))
    gxx = (gx * gx).sum(axis=-1)
    gyy = (gy * gy).sum(axis=-1)
    gxy = (gx * gy).sum(axis=-1)
    theta = 0.5 * np.arctan2(2.0 * gxy, gxx - gyy)
    return (np.degrees(theta) + 90.0) % 180.0


def cdh(img: ImageBuffer, mask, config: DescriptorConfig) -> FeatureVector:
    """Color difference histogram in Lab, indexed by color and orientation.

    Every valid center accumulates the Euclidean Lab distance to each of
    its 8 neighbors at the configured distance: into its color bin when
    the two pixels share an orientation bin, and into its orientation bin
    when they share a color bin. A region with no color differences comes
    back all-zero and flagged degenerate.
    """
    _require_space(img, RGB8, "cdh")
    mask = _check_region(img, mask)
    lab = np.ascontiguousarray(rgb_to_lab(img).data)
    n_color = config.cdh_color_bins
    n_ori = config.cdh_orientation_bins
    n_l = n_color // 9

    lq = np.clip(np.floor(lab[..., 0] / 100.0 * n_l), 0, n_l - 1).astype(np.int64)
    aq = np.clip(np.floor((lab[..., 1] + 128.0) / 256.0 * 3), 0, 2).astype(np.int64)
    bq = np.clip(np.floor((lab[..., 2] + 128.0) / 256.0 * 3), 0, 2).astype(np.int64)
    color_bins = np.ascontiguousarray((lq * 3 + aq) * 3 + bq, dtype=np.int32)

    ori = _lab_edge_orientation(lab)
    ori_bins = np.clip(
        np.floor(ori / 180.0 * n_ori), 0, n_ori - 1
    ).astype(np.int32)
    ori_bins = np.ascontiguousarray(ori_bins)

    d = config.cdh_distance
    offsets = np.array(
        [(dy, dx) for dy in (-d, 0, d) for dx in (-d, 0, d) if (dy, dx) != (0, 0)],
        dtype=np.int32,
    )
    padded = np.pad(mask, d, constant_values=False)
    valid = mask.copy()
    h, w = mask.shape
    for dy, dx in offsets:
        valid &= padded[d + dy : d + dy + h, d + dx : d + dx + w]

    color_hist, ori_hist = kernels.cdh_accumulate(
        color_bins,
        ori_bins,
        lab,
        np.ascontiguousarray(valid, dtype=np.uint8),
        offsets,
        n_color,
        n_ori,
    )
    raw = np.concatenate([color_hist, ori_hist])
    total = raw.sum()
    if total == 0.0:
        return _single_block("cdh", raw, degenerate=True)
    return _single_block("cdh", raw / total)


def seh(img: ImageBuffer, mask, config: DescriptorConfig) -> FeatureVector:
    """Structure element histogram over HSV quantized to 72 bins.

    Five 2x2 elements (horizontal, vertical, 45, 135, all-four) slide at
    stride 2; a match needs every covered pixel masked and of one
    quantized color. No matches anywhere gives a degenerate zero vector.
    """
    _require_space(img, RGB8, "seh")
    mask = _check_region(img, mask)
    hsv = rgb_to_hsv(img).data
    hq = np.clip(np.floor(hsv[..., 0] / 360.0 * 8), 0, 7).astype(np.int64)
    sq = np.clip(np.floor(hsv[..., 1] * 3), 0, 2).astype(np.int64)
    vq = np.clip(np.floor(hsv[..., 2] * 3), 0, 2).astype(np.int64)
    idx = np.ascontiguousarray((hq * 3 + sq) * 3 + vq, dtype=np.int32)
    counts = kernels.seh_counts(idx, np.ascontiguousarray(mask, dtype=np.uint8), config.seh_bins)
    total = counts.sum()
    if total == 0:
        return _single_block("seh", np.zeros(config.seh_bins), degenerate=True)
    return _single_block("seh", counts.astype(np.float64) / total)


# --------------------------------------------------------------------------
# LBP family


def _circular_offsets(n_neighbors: int, radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(n_neighbors) / n_neighbors
    dx = radius * np.cos(angles)
    dy = -radius * np.sin(angles)
    offsets = np.stack([dy, dx], axis=1)
    snapped = np.rint(offsets)
    return np.ascontiguousarray(np.where(np.abs(offsets - snapped) < 1e-9, snapped, offsets))


def lbp_code(gray: ImageBuffer, x: int, y: int, n_neighbors: int = 8, radius: float = 1.0) -> int:
    """Binary code of one pixel: bit n set iff neighbor n >= center.

    Raises RangeError when the sampling circle leaves the image.
    """
    _require_space(gray, GRAY8, "lbp_code")
    g = gray.data.astype(np.float64)
    h, w = g.shape
    if not (0 <= x < w and 0 <= y < h):
        raise RangeError(f"center ({x}, {y}) outside {w}x{h} image")
    vc = g[y, x]
    code = 0
    for n, (dy, dx) in enumerate(_circular_offsets(n_neighbors, radius)):
        y0 = y + int(np.floor(dy))
        x0 = x + int(np.floor(dx))
        fy = float(dy) - np.floor(dy)
        fx = float(dx) - np.floor(dx)
        y1 = y0 + 1 if fy > 0.0 else y0
        x1 = x0 + 1 if fx > 0.0 else x0
        if y0 < 0 or x0 < 0 or y1 >= h or x1 >= w:
            raise RangeError(
                f"neighborhood of radius {radius} around ({x}, {y}) leaves the image"
            )
        v = (1.0 - fy) * ((1.0 - fx) * g[y0, x0] + fx * g[y0, x1]) + fy * (
            (1.0 - fx) * g[y1, x0] + fx * g[y1, x1]
        )
        if v - vc >= 0.0:
            code |= 1 << n
    return code


def _neighborhood(gray: ImageBuffer, mask, config: DescriptorConfig):
    """Gather (centers, neighbor samples) for all valid masked pixels."""
    _require_space(gray, GRAY8, "texture descriptors")
    mask = _check_region(gray, mask)
    offsets = _circular_offsets(config.lbp_neighbors, config.lbp_radius)
    g = np.ascontiguousarray(gray.data, dtype=np.float64)
    valid, samples = kernels.circular_samples(
        g, np.ascontiguousarray(mask, dtype=np.uint8), offsets
    )
    if not valid.any():
        raise EmptyRegionError("no masked pixel has a fully masked, in-bounds neighborhood")
    return g, mask, valid, g[valid], samples[valid]


def _pack_codes(bits: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(bits.shape[1], dtype=np.int64)
    return bits.astype(np.int64) @ weights


def lbp_hist(gray: ImageBuffer, mask, config: DescriptorConfig) -> FeatureVector:
    """Histogram of LBP codes over valid masked pixels, L1-normalized."""
    _, _, _, vc, vn = _neighborhood(gray, mask, config)
    codes = _pack_codes(vn >= vc[:, None])
    hist = np.bincount(codes, minlength=2**config.lbp_neighbors).astype(np.float64)
    return _single_block("lbp", hist / hist.sum())


def ltp_hist(gray: ImageBuffer, mask, config: DescriptorConfig) -> FeatureVector:
    """Ternary patterns split into upper/lower binary codes.

    Differences above +theta set upper bits, below -theta set lower bits;
    the two histograms are concatenated and normalized jointly.
    """
    _, _, _, vc, vn = _neighborhood(gray, mask, config)
    diff = vn - vc[:, None]
    upper = _pack_codes(diff > config.ltp_theta)
    lower = _pack_codes(diff < -config.ltp_theta)
    size = 2**config.lbp_neighbors
    hist = np.concatenate(
        [
            np.bincount(upper, minlength=size),
            np.bincount(lower, minlength=size),
        ]
    ).astype(np.float64)
    return _single_block("ltp", hist / hist.sum())


def clbp_hist(gray: ImageBuffer, mask, config: DescriptorConfig) -> FeatureVector:
    """Completed LBP: sign codes, magnitude codes, and a center bit.

    The magnitude threshold defaults to the mean of |neighbor - center|
    over the valid region (clbp_m_threshold="magnitude_mean"); set it to
    "gray_mean" to threshold against the masked region's mean gray level
    instead. The center bit compares each pixel against the masked mean.
    """
    g, mask, valid, vc, vn = _neighborhood(gray, mask, config)
    diff = vn - vc[:, None]
    s_codes = _pack_codes(diff >= 0.0)
    magnitudes = np.abs(diff)
    if config.clbp_m_threshold == CLBP_MEAN_MAGNITUDE:
        threshold = float(magnitudes.mean())
    else:
        threshold = float(g[mask].mean())
    m_codes = _pack_codes(magnitudes >= threshold)
    center_level = float(g[mask].mean())
    c_bits = (vc >= center_level).astype(np.int64)
    size = 2**config.lbp_neighbors
    hist = np.concatenate(
        [
            np.bincount(s_codes, minlength=size),
            np.bincount(m_codes, minlength=size),
            np.bincount(c_bits, minlength=2),
        ]
    ).astype(np.float64)
    return _single_block("clbp", hist / hist.sum())


# --------------------------------------------------------------------------
# normalization and fusion


def normalize(fv: FeatureVector, scheme: str = "l1") -> FeatureVector:
    """Scale each block to unit L1 mass; all-zero blocks stay zero, flagged."""
    if scheme != "l1":
        raise PreconditionError(f"unknown normalization scheme {scheme!r}")
    if not np.isfinite(fv.values).all():
        raise NumericError("feature vector contains non-finite values")
    values = fv.values.copy()
    degenerate = list(fv.degenerate)
    for name, off, length in fv.blocks:
        total = values[off : off + length].sum()
        if total == 0.0:
            if name not in degenerate:
                degenerate.append(name)
        else:
            values[off : off + length] /= total
    return FeatureVector(values=values, blocks=fv.blocks, degenerate=tuple(degenerate))


def fuse(parts) -> FeatureVector:
    """Concatenate feature vectors, keeping block provenance in order."""
    parts = list(parts)
    if not parts:
        raise PreconditionError("fuse needs at least one feature vector")
    values = np.concatenate([p.values for p in parts])
    blocks = []
    degenerate = []
    offset = 0
    for p in parts:
        for name, off, length in p.blocks:
            blocks.append((name, offset + off, length))
        offset += p.dim
        degenerate.extend(p.degenerate)
    return FeatureVector(
        values=values,
        blocks=tuple(blocks),
        degenerate=tuple(dict.fromkeys(degenerate)),
    )


def extract_features(img: ImageBuffer, mask, names, config: DescriptorConfig) -> FeatureVector:
    """Run the named extractors on one masked image and fuse the results."""
    from fruitdx.imaging import rgb_to_gray

    names = list(names)
    if not names:
        raise PreconditionError("feature list is empty")
    for name in names:
        if name not in EXTRACTOR_NAMES:
            raise PreconditionError(
                f"unknown descriptor {name!r}; expected one of {', '.join(EXTRACTOR_NAMES)}"
            )
    gray = None
    parts = []
    for name in names:
        if name in ("lbp", "ltp", "clbp"):
            if gray is None:
                gray = rgb_to_gray(img)
            fn = {"lbp": lbp_hist, "ltp": ltp_hist, "clbp": clbp_hist}[name]
            parts.append(fn(gray, mask, config))
        else:
            fn = {"gch": gch, "ccv": ccv, "cdh": cdh, "seh": seh}[name]
            parts.append(fn(img, mask, config))
    return fuse(parts)
