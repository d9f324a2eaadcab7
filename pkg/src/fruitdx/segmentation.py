"""K-means defect segmentation on the a*b* chroma plane.

An RGB image is converted to L*a*b*, the (a*, b*) pairs of all pixels are
clustered with seeded k-means++ Lloyd iterations, and one cluster is then
selected as the diseased region, yielding a binary mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from fruitdx import kernels
from fruitdx.errors import (
    InfeasibleClusteringError,
    PreconditionError,
    RangeError,
    SelectionFailedError,
)
from fruitdx.imaging import RGB8, ImageBuffer, _buffer, _require_space, rgb_to_lab


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 4
    max_iterations: int = 100
    tolerance: float = 1e-4
    seed: int = 0
    restarts: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise PreconditionError("k must be >= 1")
        if self.max_iterations < 1:
            raise PreconditionError("max_iterations must be >= 1")
        if self.tolerance < 0:
            raise PreconditionError("tolerance must be >= 0")
        if self.restarts < 1:
            raise PreconditionError("restarts must be >= 1")


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Outcome of one k-means run (best of the configured restarts)."""

    centroids: np.ndarray  # (k, 2)
    assignments: np.ndarray  # (n,) int64
    sse: float
    iterations_run: int
    sse_trace: np.ndarray  # per-iteration SSE of the winning restart


@dataclass(frozen=True)
class ClusterStats:
    count: int
    mean_l: float
    mean_a: float
    mean_b: float


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    width: int
    height: int
    labels: np.ndarray  # (h, w) int64 cluster index per pixel
    cluster_stats: tuple[ClusterStats, ...]
    clustering: ClusterResult
    selected_cluster: Optional[int] = None
    mask: Optional[np.ndarray] = None  # (h, w) bool once selection ran

    @property
    def k(self) -> int:
        return len(self.cluster_stats)


def _kmeans_pp_init(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted draws, never picking a duplicate."""
    n = pts.shape[0]
    centers = np.empty((k, 2), dtype=np.float64)
    centers[0] = pts[int(rng.integers(n))]
    dx = pts[:, 0] - centers[0, 0]
    dy = pts[:, 1] - centers[0, 1]
    d2 = dx * dx + dy * dy
    for j in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(n, p=d2 / total))
        centers[j] = pts[idx]
        dx = pts[:, 0] - centers[j, 0]
        dy = pts[:, 1] - centers[j, 1]
        d2 = np.minimum(d2, dx * dx + dy * dy)
    return centers


def _exact_sse(pts: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    dx = pts[:, 0] - centroids[assignments, 0]
    dy = pts[:, 1] - centroids[assignments, 1]
    # fsum is exactly rounded, hence identical whichever backend produced
    # the (bit-equal) assignments and centroids.
    return math.fsum((dx * dx + dy * dy).tolist())


def kmeans(points, config: KMeansConfig) -> ClusterResult:
    """Lloyd's algorithm with squared Euclidean distance in 2-D.

    Runs `config.restarts` k-means++ starts from one seeded stream and
    keeps the lowest-SSE result. Raises InfeasibleClusteringError when k
    exceeds the number of distinct points.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PreconditionError("points must be an (n, 2) array")
    if pts.shape[0] == 0:
        raise PreconditionError("points must be non-empty")
    distinct = np.unique(pts, axis=0).shape[0]
    if config.k > distinct:
        raise InfeasibleClusteringError(
            f"k={config.k} exceeds the {distinct} distinct point(s)"
        )
    rng = np.random.default_rng(config.seed)
    best = None
    for _ in range(config.restarts):
        init = _kmeans_pp_init(pts, config.k, rng)
        centroids, assignments, iters, trace = kernels.lloyd(
            pts, init, config.max_iterations, config.tolerance
        )
        sse = _exact_sse(pts, centroids, assignments)
        if best is None or sse < best[0]:
            best = (sse, centroids, assignments, iters, trace)
    sse, centroids, assignments, iters, trace = best
    return ClusterResult(
        centroids=centroids,
        assignments=assignments,
        sse=sse,
        iterations_run=iters,
        sse_trace=trace,
    )


def segment_image(img: ImageBuffer, config: KMeansConfig) -> SegmentationResult:
    """Cluster the image's (a*, b*) pixels; no cluster is selected yet."""
    _require_space(img, RGB8, "segment_image")
    lab = rgb_to_lab(img).data
    pts = np.stack(
        [lab[..., 1].ravel(), lab[..., 2].ravel()], axis=1
    )
    result = kmeans(pts, config)
    labels = result.assignments.reshape(img.height, img.width)
    stats = []
    for j in range(config.k):
        sel = labels == j
        stats.append(
            ClusterStats(
                count=int(sel.sum()),
                mean_l=float(lab[..., 0][sel].mean()),
                mean_a=float(lab[..., 1][sel].mean()),
                mean_b=float(lab[..., 2][sel].mean()),
            )
        )
    return SegmentationResult(
        width=img.width,
        height=img.height,
        labels=labels,
        cluster_stats=tuple(stats),
        clustering=result,
    )


def select_disease_cluster(seg: SegmentationResult, strategy: str) -> SegmentationResult:
    """Pick the diseased cluster and fill in the binary mask.

    Strategies: "darkest" takes the cluster with the lowest mean L* among
    clusters covering less than half the pixels (skipping backgrounds);
    "manual:<i>" takes cluster i directly.
    """
    k = seg.k
    if strategy == "darkest":
        total = seg.width * seg.height
        candidates = [j for j in range(k) if seg.cluster_stats[j].count < 0.5 * total]
        if not candidates:
            raise SelectionFailedError(
                "every cluster covers at least half the image; pass manual:<i>"
            )
        chosen = min(candidates, key=lambda j: (seg.cluster_stats[j].mean_l, j))
    elif strategy.startswith("manual:"):
        try:
            chosen = int(strategy.split(":", 1)[1])
        except ValueError as exc:
            raise PreconditionError(f"bad selection strategy {strategy!r}") from exc
        if not 0 <= chosen < k:
            raise RangeError(f"cluster index {chosen} out of range for k={k}")
    else:
        raise PreconditionError(f"unknown selection strategy {strategy!r}")
    return replace(seg, selected_cluster=chosen, mask=seg.labels == chosen)


def mask_to_image(img: ImageBuffer, mask: np.ndarray) -> ImageBuffer:
    """Copy masked pixels, black out the rest."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (img.height, img.width):
        raise PreconditionError(
            f"mask shape {mask.shape} does not match image {img.height}x{img.width}"
        )
    if img.data.ndim == 3:
        out = np.where(mask[..., None], img.data, 0)
    else:
        out = np.where(mask, img.data, 0)
    return _buffer(img.space, out.astype(img.data.dtype))
