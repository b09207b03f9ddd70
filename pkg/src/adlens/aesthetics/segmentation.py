"""Color segmentation: k-means++ in LUV, connected components, small-merge.

The clustering is hand-rolled (seeded k-means++ on a np.random.Generator)
so segmentations are bit-for-bit reproducible across runs and machines.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import BadK
from .image import ImageBuffer, circular_mean_degrees, rgb_to_luv


@dataclass(frozen=True)
class Segment:
    """One connected region with its summary statistics."""

    id: int
    area: int  # pixels
    mean_hue: float  # circular mean, degrees
    mean_saturation: float
    mean_value: float
    mean_rgb: tuple[float, float, float]
    centroid: tuple[float, float]  # (row, col)


@dataclass(frozen=True)
class Segmentation:
    """Pixel-to-segment map plus per-segment statistics.

    labels holds contiguous segment ids 0..n_segments-1; segments is
    ordered by descending area (ties by id).
    """

    labels: np.ndarray  # (h, w) int
    segments: tuple[Segment, ...]

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def largest(self) -> Segment:
        return self.segments[0]

    def by_id(self, seg_id: int) -> Segment:
        for s in self.segments:
            if s.id == seg_id:
                return s
        raise KeyError(seg_id)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial centers by squared distance."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:  # all points coincide with chosen centers
            centers[i:] = centers[0]
            break
        centers[i] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(
    x: np.ndarray, k: int, seed: int = 42, max_iters: int = 50, tol: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ init. Returns (assignments, centers).

    Empty clusters are re-seeded to the point farthest from its center.
    """
    x = np.asarray(x, dtype=float)
    if k < 1:
        raise BadK(f"k must be >= 1, got {k}")
    if k > x.shape[0]:
        raise BadK(f"k={k} exceeds number of points {x.shape[0]}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(x, k, rng)
    for _ in range(max_iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            mask = assign == j
            if mask.any():
                new_centers[j] = x[mask].mean(axis=0)
            else:
                new_centers[j] = x[d2[np.arange(x.shape[0]), assign].argmax()]
        shift = float(np.abs(new_centers - centers).max())
        centers = new_centers
        if shift < tol:
            break
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1), centers


_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def segment_image(
    img: ImageBuffer, k: int = 6, seed: int = 42, min_area_frac: float = 0.01
) -> Segmentation:
    """Segment an image into connected regions of similar color.

    Pixels are clustered in LUV (k-means++, fixed seed), clusters are split
    into 4-connected components, and components below `min_area_frac` of
    the image are folded into the touching segment with the nearest mean
    color (largest such segment on ties).
    """
    if k < 2:
        raise BadK(f"k must be >= 2, got {k}")
    rgb = img.rgb
    h, w = rgb.shape[:2]
    luv = rgb_to_luv(rgb).reshape(-1, 3)
    k_eff = min(k, luv.shape[0])
    assign, _ = kmeans(luv, k_eff, seed=seed)
    cluster_map = assign.reshape(h, w)

    # Split color clusters into spatially connected components.
    labels = np.full((h, w), -1, dtype=int)
    next_id = 0
    for c in range(k_eff):
        mask = cluster_map == c
        if not mask.any():
            continue
        comp, n_comp = ndimage.label(mask, structure=_FOUR_CONN)
        labels[mask] = comp[mask] - 1 + next_id
        next_id += n_comp

    labels, n_seg = _merge_small(rgb, labels, next_id, min_pixels=min_area_frac * h * w)
    return Segmentation(labels=labels, segments=_summarize(img, labels, n_seg))


def _summarize(img: ImageBuffer, labels: np.ndarray, n_seg: int) -> tuple[Segment, ...]:
    flat_rgb = img.rgb.reshape(-1, 3)
    flat_hsv = img.hsv.reshape(-1, 3)
    lab = labels.ravel()
    rows, cols = np.indices(labels.shape)
    segments = []
    for s in range(n_seg):
        mask = lab == s
        area = int(mask.sum())
        if area == 0:
            continue
        mean_rgb = flat_rgb[mask].mean(axis=0)
        segments.append(
            Segment(
                id=s,
                area=area,
                mean_hue=circular_mean_degrees(flat_hsv[mask, 0]),
                mean_saturation=float(flat_hsv[mask, 1].mean()),
                mean_value=float(flat_hsv[mask, 2].mean()),
                mean_rgb=(float(mean_rgb[0]), float(mean_rgb[1]), float(mean_rgb[2])),
                centroid=(float(rows.ravel()[mask].mean()), float(cols.ravel()[mask].mean())),
            )
        )
    return tuple(sorted(segments, key=lambda s: (-s.area, s.id)))


def _neighbor_pairs(labels: np.ndarray) -> set[tuple[int, int]]:
    """Unordered 4-adjacent label pairs, as (low, high) tuples."""
    chunks = []
    for a, b in (
        (labels[:, :-1].ravel(), labels[:, 1:].ravel()),
        (labels[:-1, :].ravel(), labels[1:, :].ravel()),
    ):
        m = a != b
        chunks.append(np.stack([np.minimum(a[m], b[m]), np.maximum(a[m], b[m])], axis=1))
    uniq = np.unique(np.concatenate(chunks, axis=0), axis=0)
    return {(int(i), int(j)) for i, j in uniq}


def _merge_small(
    rgb: np.ndarray, labels: np.ndarray, n_seg: int, min_pixels: float
) -> tuple[np.ndarray, int]:
    """Repeatedly fold undersized segments into their most similar neighbor.

    One merge at a time, smallest segment first (ties by id), so chains of
    tiny fragments collapse predictably. A heap with stale-entry skipping
    orders the candidates; sizes, color sums, and adjacency sets are
    updated in place, and labels are rewritten once at the end.
    """
    flat = rgb.reshape(-1, 3)
    sizes = np.bincount(labels.ravel(), minlength=n_seg).astype(np.int64)
    sums = np.stack(
        [np.bincount(labels.ravel(), weights=flat[:, c], minlength=n_seg) for c in range(3)],
        axis=1,
    )
    neighbors: dict[int, set[int]] = {s: set() for s in range(n_seg) if sizes[s] > 0}
    for i, j in _neighbor_pairs(labels):
        neighbors[i].add(j)
        neighbors[j].add(i)

    heap = [(int(sizes[s]), s) for s in neighbors if sizes[s] < min_pixels]
    heapq.heapify(heap)
    parent = np.arange(n_seg)
    while heap:
        size_s, s = heapq.heappop(heap)
        if s not in neighbors or sizes[s] != size_s or sizes[s] >= min_pixels:
            continue  # merged away, grown, or superseded by a newer entry
        cand = neighbors[s]
        if not cand:
            continue  # a segment with no neighbors covers the whole image
        mean_s = sums[s] / sizes[s]
        target = min(
            cand,
            key=lambda t: (float(((mean_s - sums[t] / sizes[t]) ** 2).sum()), -sizes[t], t),
        )
        sizes[target] += sizes[s]
        sums[target] += sums[s]
        sizes[s] = 0
        for u in cand:
            neighbors[u].discard(s)
            if u != target:
                neighbors[u].add(target)
                neighbors[target].add(u)
        neighbors[target].discard(target)
        del neighbors[s]
        parent[s] = target
        if sizes[target] < min_pixels:
            heapq.heappush(heap, (int(sizes[target]), target))

    # Resolve merge chains (s -> t -> u) to their final segment.
    while True:
        resolved = parent[parent]
        if np.array_equal(resolved, parent):
            break
        parent = resolved
    labels = parent[labels]
    # Compact ids to 0..n-1 (uniq is sorted, so searchsorted is the remap).
    uniq = np.unique(labels)
    return np.searchsorted(uniq, labels), len(uniq)
