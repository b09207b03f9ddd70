"""Distribution alignment for biased engagement scores.

Fits a monotone polynomial tau_W with non-negative coefficients that maps a
biased group's normalized scores onto the unbiased score distribution by
minimizing KL(P_unbiased || Q_transformed) over soft histograms.

Both score sets are first sent through a shared affine premap u = (y - a)/b
onto [0, 1] (a, b computed from the union of both sets), tau_W acts there,
and the result is mapped back with y' = a + b * tau_W(u). Non-negative
coefficients with W_1 bounded away from zero make tau_W strictly increasing
on [0, 1], so the composed transform is order-preserving on the original
score scale.

The histograms entering the fit objective carry two extra open tail bins
(mass below the first and above the last edge), so all kernel mass is
accounted for and transforms that push scores outside the reference range
are penalized instead of silently renormalized away.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .errors import NonFiniteLoss, SupportMismatch, TooFewScores

log = logging.getLogger(__name__)

W1_FLOOR = 1e-6  # lower bound on the linear coefficient (strict monotonicity)
MASS_EPS = 1e-9  # histogram smoothing mass added to every bin


@dataclass(frozen=True)
class ScoreDistribution:
    """A soft (Gaussian-kernel) histogram of scores on fixed bin edges."""

    edges: np.ndarray  # (n_bins + 1,)
    probs: np.ndarray  # (n_bins,), sums to 1
    bandwidth: float

    def __post_init__(self):
        if self.edges.ndim != 1 or self.probs.ndim != 1:
            raise ValueError("edges and probs must be 1-D")
        if self.edges.size != self.probs.size + 1:
            raise ValueError("need len(edges) == len(probs) + 1")


def silverman_bandwidth(values: np.ndarray) -> float:
    """Silverman's rule of thumb, floored to stay strictly positive."""
    values = np.asarray(values, dtype=float)
    n = values.size
    sd = float(np.std(values))
    iqr = float(np.quantile(values, 0.75) - np.quantile(values, 0.25))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        spread = max(abs(float(values.mean())), 1.0) * 1e-3
    return max(0.9 * spread * n ** (-0.2), 1e-6)


def soft_histogram_masses(
    values: np.ndarray, edges: np.ndarray, bandwidth: float
) -> np.ndarray:
    """Mean Gaussian-kernel mass per bin (before smoothing/renormalization).

    Each value contributes Phi((e_{j+1}-v)/h) - Phi((e_j-v)/h) to bin j; the
    per-bin masses are averaged over values. Rows need not sum to one (tail
    mass can fall outside the edge range).
    """
    values = np.asarray(values, dtype=float)
    z = (edges[None, :] - values[:, None]) / bandwidth  # (n, n_bins + 1)
    cdf = ndtr(z)
    return (cdf[:, 1:] - cdf[:, :-1]).mean(axis=0)


def build_distribution(
    scores: Sequence[float] | np.ndarray,
    n_bins: int = 50,
    bandwidth: float | None = None,
    edges: np.ndarray | None = None,
) -> ScoreDistribution:
    """Soft histogram of `scores` with smoothing mass and renormalization.

    When `edges` is omitted they span [min - 3h, max + 3h] so nearly all
    kernel mass lands inside the range.
    """
    values = np.asarray(scores, dtype=float)
    if values.size < 2:
        raise TooFewScores(f"need at least 2 scores, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise ValueError("scores must be finite")
    h = silverman_bandwidth(values) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    if edges is None:
        lo = float(values.min()) - 3.0 * h
        hi = float(values.max()) + 3.0 * h
        edges = np.linspace(lo, hi, n_bins + 1)
    masses = soft_histogram_masses(values, edges, h) + MASS_EPS
    return ScoreDistribution(edges=edges, probs=masses / masses.sum(), bandwidth=h)


def kl_divergence(p: ScoreDistribution, q: ScoreDistribution) -> float:
    """KL(P || Q) in nats. Requires identical bin edges."""
    if p.edges.shape != q.edges.shape or not np.allclose(p.edges, q.edges):
        raise SupportMismatch("distributions must share bin edges")
    return float(np.sum(p.probs * (np.log(p.probs) - np.log(q.probs))))


@dataclass(frozen=True)
class PolynomialTransform:
    """y -> shift + scale * tau_W((y - shift)/scale) with tau_W(u) = sum W_p u^p."""

    coefficients: np.ndarray  # (degree + 1,), all >= 0, W_1 >= W1_FLOOR
    shift: float  # premap offset a
    scale: float  # premap span b, > 0

    def __post_init__(self):
        w = np.asarray(self.coefficients, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("need at least degree 1 (two coefficients)")
        if np.any(w < 0):
            raise ValueError("coefficients must be non-negative")
        if w[1] < W1_FLOOR:
            raise ValueError(f"linear coefficient must be >= {W1_FLOOR}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def degree(self) -> int:
        return self.coefficients.size - 1

    def premap(self, y: np.ndarray | float) -> np.ndarray | float:
        return (np.asarray(y, dtype=float) - self.shift) / self.scale

    def tau(self, u: np.ndarray | float) -> np.ndarray | float:
        u = np.asarray(u, dtype=float)
        return np.polynomial.polynomial.polyval(u, self.coefficients)


def design_matrix(u: np.ndarray, degree: int) -> np.ndarray:
    """Vandermonde X with X[p, i] = u_i ** p, shape (degree + 1, n)."""
    u = np.asarray(u, dtype=float)
    return np.vander(u, degree + 1, increasing=True).T


def apply_transform(t: PolynomialTransform, scores: Sequence[float] | np.ndarray) -> np.ndarray:
    """Debias scores: premap, polynomial, unmap back to the original scale."""
    y = np.asarray(scores, dtype=float)
    return t.shift + t.scale * np.asarray(t.tau(t.premap(y)))


@dataclass
class FitReport:
    """Record of one transform fit."""

    initial_kl: float
    identity_kl: float
    final_kl: float
    kl_history: list[float]
    iterations: int
    converged: bool
    degree: int

    @property
    def no_worse_than_identity(self) -> bool:
        return self.final_kl <= self.identity_kl + 1e-12


def tailed_masses(values: np.ndarray, edges: np.ndarray, bandwidth: float) -> np.ndarray:
    """Soft-histogram masses with two open tail bins, (n_bins + 2,).

    Index 0 collects kernel mass below the first edge and the last index
    mass above the last edge, so the entries always sum to exactly one.
    Without the tails, mass pushed outside the edge range simply vanishes
    and renormalization hides it -- making "expel everything" look like a
    decent fit instead of the worst possible one.
    """
    values = np.asarray(values, dtype=float)
    z = (edges[None, :] - values[:, None]) / bandwidth  # (n, n_bins + 1)
    cdf = ndtr(z)
    inner = (cdf[:, 1:] - cdf[:, :-1]).mean(axis=0)
    left = cdf[:, 0].mean()
    right = (1.0 - cdf[:, -1]).mean()
    return np.concatenate([[left], inner, [right]])


def transformed_kl_and_grad(
    w: np.ndarray,
    x_design: np.ndarray,
    p_ref: np.ndarray,
    edges: np.ndarray,
    bandwidth: float,
) -> tuple[float, np.ndarray]:
    """KL(P || Q(w)) and its gradient in the polynomial coefficients.

    Q(w) is the smoothed, renormalized tailed soft histogram of O = w @ X
    (`p_ref` must be the matching tailed reference, n_bins + 2 entries).
    With raw masses m_j and S = sum(m + eps):

        J = sum_j p_j ln p_j - sum_j p_j ln(m_j + eps) + ln S
        dJ/dm_j = -p_j / (m_j + eps) + 1/S
        dm_j/dO_i = (phi(z_{j,i}) - phi(z_{j+1,i})) / (n h)

    and dO_i/dw_p = X[p, i], so grad = X @ (dm/dO)^T @ dJ/dm. The tail
    bins fit the same telescoping pattern with virtual edges at -inf/+inf
    where the kernel cdf is 0/1 and its pdf vanishes.
    """
    out = w @ x_design  # transformed premapped scores, (n,)
    n = out.size
    masses = tailed_masses(out, edges, bandwidth)  # (n_bins + 2,)
    smoothed = masses + MASS_EPS
    s = smoothed.sum()
    q = smoothed / s
    j = float(np.sum(p_ref * (np.log(p_ref) - np.log(q))))

    dj_dm = -p_ref / smoothed + 1.0 / s  # (n_bins + 2,)
    z = (edges[None, :] - out[:, None]) / bandwidth  # (n, n_bins + 1)
    pdf = np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
    zeros = np.zeros((n, 1))
    pdf_full = np.hstack([zeros, pdf, zeros])  # (n, n_bins + 3)
    # dm_j/dO_i = (pdf_full[i, j] - pdf_full[i, j + 1]) / (n h)
    dj_do = (pdf_full[:, :-1] - pdf_full[:, 1:]) @ dj_dm / (n * bandwidth)  # (n,)
    grad = x_design @ dj_do  # (degree + 1,)
    if not (math.isfinite(j) and np.all(np.isfinite(grad))):
        raise NonFiniteLoss("non-finite objective or gradient during fit")
    return j, grad


def _project(w: np.ndarray) -> np.ndarray:
    w = np.maximum(w, 0.0)
    w[1] = max(w[1], W1_FLOOR)
    return w


def _identity_coefficients(degree: int) -> np.ndarray:
    w = np.zeros(degree + 1)
    w[1] = 1.0
    return w


def _moment_match_coefficients(u: np.ndarray, v: np.ndarray, degree: int) -> np.ndarray:
    """Affine start matching mean/std of the premapped unbiased scores.

    When the matching intercept would be negative (not representable with
    non-negative coefficients), fall back to a pure scaling that matches
    the means; clamping the intercept alone would strand the start far
    outside the reference histogram where the gradient underflows to zero.
    """
    w = np.zeros(degree + 1)
    su, sv = float(np.std(u)), float(np.std(v))
    w[1] = sv / su if su > 0 else 1.0
    w[0] = float(np.mean(v)) - w[1] * float(np.mean(u))
    if w[0] < 0:
        w[0] = 0.0
        mu = float(np.mean(u))
        w[1] = float(np.mean(v)) / mu if mu > 0 else 1.0
    return _project(w)


def _power_match_coefficients(u: np.ndarray, v: np.ndarray, degree: int) -> np.ndarray:
    """Pure top-degree start matching the mean: W_d = mean(v) / mean(u^d).

    A narrow cluster sitting high in the premap range needs its *relative*
    spread amplified to match the reference, and a non-negative affine map
    can only shrink it further (it cannot lower mean/spread). Raising to
    the d-th power multiplies relative spread by roughly d, so this start
    lands the cluster on the reference mean with a much healthier spread.
    """
    w = np.zeros(degree + 1)
    m = float(np.mean(u**degree))
    w[degree] = float(np.mean(v)) / m if m > 0 else 1.0
    return _project(w)


def _descend(
    w0: np.ndarray,
    x_design: np.ndarray,
    p_ref: np.ndarray,
    edges: np.ndarray,
    bandwidth: float,
    max_iters: int,
    tol: float,
) -> tuple[np.ndarray, float, list[float], int, bool]:
    """Projected gradient descent with backtracking from one start.

    Returns (w, final_kl, kl_history, iterations, converged); the history is
    monotone non-increasing by construction.
    """
    w = w0.copy()
    j, grad = transformed_kl_and_grad(w, x_design, p_ref, edges, bandwidth)
    history = [j]
    converged = False
    step = 1.0
    iterations = 0
    for iterations in range(1, max_iters + 1):
        proj_grad = w - _project(w - grad)
        if float(np.linalg.norm(proj_grad)) < tol:
            converged = True
            iterations -= 1
            break
        # Backtracking line search on the projected step.
        improved = False
        trial_step = step
        for _ in range(60):
            w_new = _project(w - trial_step * grad)
            if np.allclose(w_new, w):
                trial_step *= 0.5
                continue
            j_new, grad_new = transformed_kl_and_grad(
                w_new, x_design, p_ref, edges, bandwidth
            )
            if j_new <= j - 1e-4 * trial_step * float(grad @ (w - w_new)) or j_new < j:
                improved = True
                break
            trial_step *= 0.5
        if not improved:
            converged = True
            break
        w, j, grad = w_new, j_new, grad_new
        step = min(trial_step * 2.0, 1e3)
        history.append(j)
    return w, j, history, iterations, converged


def fit_transform(
    unbiased: Sequence[float] | np.ndarray,
    biased: Sequence[float] | np.ndarray,
    degree: int = 3,
    n_bins: int = 50,
    max_iters: int = 500,
    tol: float = 1e-6,
    aligned_kl: float = 0.05,
) -> tuple[PolynomialTransform, FitReport]:
    """Fit the debiasing transform for one bias group.

    Runs projected gradient descent with backtracking line search on
    KL(P_unbiased || Q_transformed) from up to three starts in order --
    a moment-matching affine, a pure top-degree power, and the identity --
    stopping early once a run ends essentially aligned (final KL <=
    `aligned_kl` nats) and at or below the untransformed KL; the lowest
    final wins. The histograms carry open tail bins (see `tailed_masses`)
    so the objective cannot be gamed by pushing mass outside the reference
    range, and keeping the identity start in reserve guarantees the fit
    never ends worse than leaving the (premapped) scores alone.
    """
    yu = np.asarray(unbiased, dtype=float)
    yb = np.asarray(biased, dtype=float)
    if yu.size < 2 or yb.size < 2:
        raise TooFewScores(
            f"need >= 2 scores on both sides, got {yu.size} unbiased / {yb.size} biased"
        )
    if not (np.all(np.isfinite(yu)) and np.all(np.isfinite(yb))):
        raise ValueError("scores must be finite")

    # Shared affine premap from the union, so both sets live in [0, 1].
    union = np.concatenate([yu, yb])
    a = float(union.min())
    b = float(union.max() - a)
    if b <= 0:
        b = 1.0
    u_ref = (yu - a) / b
    u_bias = (yb - a) / b

    ref = build_distribution(u_ref, n_bins=n_bins)
    p_raw = tailed_masses(u_ref, ref.edges, ref.bandwidth) + MASS_EPS
    p_ref = p_raw / p_raw.sum()
    x_design = design_matrix(u_bias, degree)

    identity = _identity_coefficients(degree)
    identity_kl, _ = transformed_kl_and_grad(
        identity, x_design, p_ref, ref.edges, ref.bandwidth
    )
    starts = [_moment_match_coefficients(u_bias, u_ref, degree)]
    for extra in (_power_match_coefficients(u_bias, u_ref, degree), identity):
        if not any(np.allclose(extra, s) for s in starts):
            starts.append(extra)
    runs = []
    for w0 in starts:
        runs.append(
            _descend(w0, x_design, p_ref, ref.edges, ref.bandwidth, max_iters, tol)
        )
        if runs[-1][1] <= min(aligned_kl, identity_kl):
            break
    # Ties go to the later (identity-start) run for stability.
    w, j, history, iterations, converged = min(reversed(runs), key=lambda r: r[1])

    transform = PolynomialTransform(coefficients=w, shift=a, scale=b)
    report = FitReport(
        initial_kl=history[0],
        identity_kl=identity_kl,
        final_kl=j,
        kl_history=history,
        iterations=iterations,
        converged=converged,
        degree=degree,
    )
    if not report.no_worse_than_identity:  # pragma: no cover - by construction
        log.warning("fit ended above identity KL: %.6g > %.6g", j, identity_kl)
    return transform, report


def fit_transform_auto_degree(
    unbiased: Sequence[float] | np.ndarray,
    biased: Sequence[float] | np.ndarray,
    max_degree: int = 6,
    min_improvement: float = 1e-3,
    **kwargs,
) -> tuple[PolynomialTransform, FitReport]:
    """Increase the polynomial degree while the final KL keeps improving.

    Starts at degree 1 and stops when a degree fails to improve on the
    previous one by more than `min_improvement` (the previous fit is kept).
    """
    best: tuple[PolynomialTransform, FitReport] | None = None
    for degree in range(1, max_degree + 1):
        t, rep = fit_transform(unbiased, biased, degree=degree, **kwargs)
        if best is not None and rep.final_kl > best[1].final_kl - min_improvement:
            break
        best = (t, rep)
    assert best is not None
    return best


def save_transform(
    t: PolynomialTransform, report: FitReport, bias: str, path: str | Path
) -> None:
    """Write a transform artifact as deterministic JSON."""
    payload = {
        "bias": bias,
        "degree": t.degree,
        "W": [float(c) for c in t.coefficients],
        "shift": float(t.shift),
        "scale": float(t.scale),
        "initial_kl": float(report.initial_kl),
        "final_kl": float(report.final_kl),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_transform(path: str | Path) -> tuple[PolynomialTransform, dict]:
    """Read a transform artifact; returns (transform, full payload)."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    t = PolynomialTransform(
        coefficients=np.asarray(payload["W"], dtype=float),
        shift=float(payload["shift"]),
        scale=float(payload["scale"]),
    )
    if t.degree != int(payload["degree"]):
        raise ValueError(f"degree mismatch in {path}: {t.degree} != {payload['degree']}")
    return t, payload
