"""Region adjacency graph features: similarity merging and normalized cuts.

Segments sharing a 4-neighborhood boundary become graph nodes joined by
color-similarity weights. Highly similar neighbors are contracted first;
the merged graph is then recursively bipartitioned by two-way normalized
cut (sweep over the Fiedler vector of the normalized Laplacian) until the
best cut value exceeds a stop threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .segmentation import Segmentation, _neighbor_pairs


@dataclass(frozen=True)
class RegionAdjacencyGraph:
    """Merged segment graph with its normalized-cut statistics."""

    node_mean_rgb: np.ndarray  # (n, 3) mean color per merged node
    weights: np.ndarray  # (n, n) symmetric, zero diagonal
    merged_segment_count: int
    best_ncut: float
    cut_depth: int

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_edges(self) -> int:
        return int((self.weights > 0).sum() // 2)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _edge_weights(seg: Segmentation, sigma_color: float) -> np.ndarray:
    n = seg.n_segments
    mean_rgb = np.array([seg.by_id(i).mean_rgb for i in range(n)])
    w = np.zeros((n, n))
    for i, j in _neighbor_pairs(seg.labels):
        d2 = float(((mean_rgb[i] - mean_rgb[j]) ** 2).sum())
        w[i, j] = w[j, i] = np.exp(-d2 / sigma_color**2)
    return w


def ncut_value(weights: np.ndarray, mask: np.ndarray) -> float:
    """Two-way normalized cut value of the bipartition (mask, ~mask).

    cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V); degenerate partitions (an
    empty side or a side with zero association) value 2.0, the maximum.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any() or mask.all():
        return 2.0
    cut = float(weights[np.ix_(mask, ~mask)].sum())
    assoc_a = float(weights[mask].sum())
    assoc_b = float(weights[~mask].sum())
    if assoc_a <= 0 or assoc_b <= 0:
        return 2.0
    return cut / assoc_a + cut / assoc_b


def best_bipartition(weights: np.ndarray) -> tuple[np.ndarray, float]:
    """Best two-way cut by sweeping thresholds along the Fiedler vector.

    Two-node graphs have a single bipartition (value 2 when connected);
    single nodes cannot be cut at all and also value 2.
    """
    n = weights.shape[0]
    if n < 2:
        return np.zeros(n, dtype=bool), 2.0
    if n == 2:
        mask = np.array([True, False])
        return mask, ncut_value(weights, mask)
    d = weights.sum(axis=1)
    d_safe = np.where(d > 0, d, 1.0)
    inv_sqrt = 1.0 / np.sqrt(d_safe)
    lap = np.eye(n) - inv_sqrt[:, None] * weights * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0
    _, vecs = np.linalg.eigh(lap)
    fiedler = inv_sqrt * vecs[:, 1]  # generalized eigenvector, 2nd smallest
    order = np.argsort(fiedler, kind="stable")
    best_mask = np.zeros(n, dtype=bool)
    best_val = 2.0
    mask = np.zeros(n, dtype=bool)
    for idx in order[:-1]:
        mask = mask.copy()
        mask[idx] = True
        val = ncut_value(weights, mask)
        if val < best_val:
            best_val, best_mask = val, mask
    return best_mask, best_val


def exhaustive_best_ncut(weights: np.ndarray) -> float:
    """Minimum ncut over all bipartitions; O(2^n), for small-graph checks."""
    n = weights.shape[0]
    if n < 2:
        return 2.0
    best = 2.0
    for bits in range(1, 2 ** (n - 1)):
        mask = np.array([(bits >> i) & 1 == 1 for i in range(n)])
        best = min(best, ncut_value(weights, mask))
    return best


def _recursive_depth(weights: np.ndarray, stop_ncut: float) -> tuple[float, int]:
    """(first-level best ncut, recursion depth before cuts are refused)."""
    first: float = 2.0

    def recurse(w: np.ndarray, depth: int) -> int:
        nonlocal first
        if w.shape[0] < 2:
            return depth
        mask, val = best_bipartition(w)
        if depth == 0:
            first = val
        if val > stop_ncut:
            return depth
        return max(
            recurse(w[np.ix_(mask, mask)], depth + 1),
            recurse(w[np.ix_(~mask, ~mask)], depth + 1),
        )

    depth = recurse(weights, 0)
    return first, depth


def build_rag(
    seg: Segmentation,
    merge_threshold: float = 0.9,
    sigma_color: float = 0.1,
    stop_ncut: float = 0.2,
) -> RegionAdjacencyGraph:
    """Build the adjacency graph and compute its cut statistics.

    Edges join segments sharing a boundary with weight
    exp(-||mean_rgb_i - mean_rgb_j||^2 / sigma_color^2). Edges strictly
    above merge_threshold are contracted (union-find) before the cut
    analysis; inter-group weights keep the maximum original edge weight.
    """
    n = seg.n_segments
    mean_rgb = np.array([seg.by_id(i).mean_rgb for i in range(n)])
    areas = np.array([seg.by_id(i).area for i in range(n)], dtype=float)
    w0 = _edge_weights(seg, sigma_color)

    uf = _UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if w0[i, j] > merge_threshold:
                uf.union(i, j)
    roots = sorted({uf.find(i) for i in range(n)})
    remap = {r: idx for idx, r in enumerate(roots)}
    group = np.array([remap[uf.find(i)] for i in range(n)], dtype=int)
    m = len(roots)

    weights = np.zeros((m, m))
    node_rgb = np.zeros((m, 3))
    node_area = np.zeros(m)
    for i in range(n):
        node_rgb[group[i]] += mean_rgb[i] * areas[i]
        node_area[group[i]] += areas[i]
    node_rgb /= np.maximum(node_area[:, None], 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = group[i], group[j]
            if a != b and w0[i, j] > 0:
                weights[a, b] = weights[b, a] = max(weights[a, b], w0[i, j])

    best, depth = _recursive_depth(weights, stop_ncut)
    return RegionAdjacencyGraph(
        node_mean_rgb=node_rgb,
        weights=weights,
        merged_segment_count=m,
        best_ncut=best,
        cut_depth=depth,
    )
