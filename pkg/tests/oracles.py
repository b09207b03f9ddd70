"""Independent reference implementations used to validate derived numerics.

Everything here is written loop-wise from the textbook definitions (or a
different linear-algebra formulation entirely), sharing no code with the
package, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import colorsys
import math
from itertools import combinations, product

import numpy as np

# ---------------------------------------------------------------------------
# Local outlier factor, straight from the reachability-density definition.


def lof_reference(points, k: int) -> np.ndarray:
    """Raw LOF_k per point; tie-inclusive neighborhoods, pure-python loops."""
    pts = [tuple(float(c) for c in p) for p in points]
    n = len(pts)
    dmat = [[math.dist(a, b) for b in pts] for a in pts]
    k_dist = []
    neigh = []
    for i in range(n):
        others = sorted(dmat[i][j] for j in range(n) if j != i)
        kd = others[k - 1]
        k_dist.append(kd)
        neigh.append([j for j in range(n) if j != i and dmat[i][j] <= kd])
    lrd = []
    for i in range(n):
        reach = [max(k_dist[j], dmat[i][j]) for j in neigh[i]]
        lrd.append(len(reach) / sum(reach))
    out = []
    for i in range(n):
        out.append(sum(lrd[j] for j in neigh[i]) / (len(neigh[i]) * lrd[i]))
    return np.array(out)


# ---------------------------------------------------------------------------
# Central finite differences for gradient checks.


def fd_gradient(func, w: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient; step scales with each coordinate."""
    w = np.asarray(w, dtype=float)
    grad = np.empty_like(w)
    for p in range(w.size):
        h = rel_step * max(1.0, abs(w[p]))
        wp, wm = w.copy(), w.copy()
        wp[p] += h
        wm[p] -= h
        grad[p] = (func(wp) - func(wm)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Normalized cut from the cut/association definition, all subsets.


def ncut_reference(weights: np.ndarray, side_a) -> float:
    n = weights.shape[0]
    a = set(side_a)
    b = set(range(n)) - a
    if not a or not b:
        return 2.0
    cut = sum(weights[i][j] for i in a for j in b)
    assoc_a = sum(weights[i][j] for i in a for j in range(n))
    assoc_b = sum(weights[i][j] for i in b for j in range(n))
    if assoc_a <= 0 or assoc_b <= 0:
        return 2.0
    return cut / assoc_a + cut / assoc_b


def exhaustive_ncut_reference(weights: np.ndarray) -> float:
    """Minimum two-way normalized cut by subset enumeration (node 0 fixed
    to one side, halving the space)."""
    n = weights.shape[0]
    if n < 2:
        return 2.0
    rest = list(range(1, n))
    best = 2.0
    for size in range(0, n - 1):
        for extra in combinations(rest, size):
            best = min(best, ncut_reference(weights, {0, *extra}))
    return best


# ---------------------------------------------------------------------------
# HSV conversion via the standard library, pixel by pixel.


def hsv_reference(rgb: np.ndarray) -> np.ndarray:
    """colorsys-based HSV (hue in [0, 1)) for a (h, w, 3) float image."""
    rgb = np.asarray(rgb, dtype=float)
    out = np.empty_like(rgb)
    for i in range(rgb.shape[0]):
        for j in range(rgb.shape[1]):
            out[i, j] = colorsys.rgb_to_hsv(*rgb[i, j])
    return out


# ---------------------------------------------------------------------------
# Spearman rank correlation, textbook formula (distinct values only).


def spearman_reference(a, b) -> float:
    a = list(map(float, a))
    b = list(map(float, b))
    n = len(a)
    assert len(set(a)) == n and len(set(b)) == n, "formula assumes no ties"
    rank_a = {v: r for r, v in enumerate(sorted(a))}
    rank_b = {v: r for r, v in enumerate(sorted(b))}
    d2 = sum((rank_a[x] - rank_b[y]) ** 2 for x, y in zip(a, b))
    return 1.0 - 6.0 * d2 / (n * (n**2 - 1))


# ---------------------------------------------------------------------------
# Orthonormal Haar pyramid via explicit transform matrices.


def _haar_matrix(n: int) -> np.ndarray:
    """n x n single-level orthonormal Haar analysis matrix."""
    m = np.zeros((n, n))
    inv = 1.0 / math.sqrt(2.0)
    for i in range(n // 2):
        m[i, 2 * i] = m[i, 2 * i + 1] = inv
        m[n // 2 + i, 2 * i] = inv
        m[n // 2 + i, 2 * i + 1] = -inv
    return m


def haar_reference(channel: np.ndarray, levels: int):
    """(approx, [(vlow_hhigh, vhigh_hlow, vhigh_hhigh), ...]) per level.

    Each level applies B = H A H^T and splits quadrants: rows filter the
    vertical direction, columns the horizontal one.
    """
    a = np.asarray(channel, dtype=float)
    details = []
    for _ in range(levels):
        hr = _haar_matrix(a.shape[0])
        hc = _haar_matrix(a.shape[1])
        b = hr @ a @ hc.T
        h2, w2 = a.shape[0] // 2, a.shape[1] // 2
        details.append((b[:h2, w2:], b[h2:, :w2], b[h2:, w2:]))
        a = b[:h2, :w2]
    return a, details


# ---------------------------------------------------------------------------
# Exhaustive bounded feature tuning (mirrors the documented contract: best
# score, ties toward fewer changes, then smaller total percent magnitude,
# then lexicographically-first feature subset, then enumeration order).


def tuner_grid_reference(s: float, t: float) -> list[float]:
    steps = int(s / t)
    vals = {round(i * t, 12) for i in range(-steps, steps + 1)}
    vals.update({s, -s})
    return sorted(v for v in vals if abs(v) <= s + 1e-12)


def adjust_reference(value, percent, std, lower, upper) -> float:
    if abs(value) < 1e-9:
        new = value + percent / 100.0 * std
    else:
        new = value * (1.0 + percent / 100.0)
    return float(min(max(new, lower), upper))


def tuner_reference(predict_fn, values, registry, feature_stds, k, s, t):
    """(deltas dict, predicted_after) of the exhaustive search winner."""
    values = np.asarray(values, dtype=float)
    tunable = [d.id for d in registry if d.tunable]
    k = min(k, len(tunable))
    nonzero = [g for g in tuner_grid_reference(s, t) if g != 0.0]
    candidates = [((-float(predict_fn(values)), 0, 0.0, ()), {})]
    for j in range(1, k + 1):
        for subset in combinations(tunable, j):
            for steps in product(nonzero, repeat=j):
                adjusted = values.copy()
                for fid, pct in zip(subset, steps):
                    idx = registry.index(fid)
                    d = registry.descriptors[idx]
                    adjusted[idx] = adjust_reference(
                        values[idx], pct, feature_stds[idx], d.lower, d.upper
                    )
                key = (
                    -float(predict_fn(adjusted)),
                    j,
                    float(sum(abs(p) for p in steps)),
                    subset,
                )
                candidates.append((key, dict(zip(subset, steps))))
    best_key, best_deltas = min(candidates, key=lambda c: c[0])
    return best_deltas, -best_key[0]
