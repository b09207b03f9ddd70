"""Kernel SVR/SVC trained by SMO, plus the quartile evaluation protocol.

The dual solver is generic: minimize 1/2 theta' (zz' o K) theta + p' theta
subject to z' theta = 0 and 0 <= theta <= C, using maximal-violating-pair
working-set selection. Epsilon-SVR poses each training point twice (alpha,
alpha*); C-SVC poses it once. Convergence is the standard KKT gap
m(theta) - M(theta) < tol, which stays auditable after the fact.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateQuartiles,
    DimensionMismatch,
    EmptyTestSet,
    RegistryMismatch,
    SingleClass,
    TooFewScores,
)
from .aesthetics.features import FeatureRegistry, FeatureVector

log = logging.getLogger(__name__)

STD_FLOOR = 1e-12
DEFAULT_C = 10.0
DEFAULT_EPSILON = 0.1
DEFAULT_TOL = 1e-3
_BOUND_EPS = 1e-12  # slack when deciding whether theta sits at a box bound

# The linear significance twin uses stronger regularization than the main
# model: near-duplicate rows make the weakly regularized linear dual
# degenerate (slow to solve exactly) and the ranking it produces noisier.
SIGNIFICANCE_C = 1.0


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and scale. gamma is ignored by the linear kernel."""

    kind: str  # "rbf" | "linear"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf gamma must be positive")

    def matrix(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        if self.kind == "linear":
            return a @ b.T
        d2 = (
            (a**2).sum(axis=1)[:, None]
            + (b**2).sum(axis=1)[None, :]
            - 2.0 * (a @ b.T)
        )
        return np.exp(-self.gamma * np.maximum(d2, 0.0))


@dataclass
class SmoResult:
    theta: np.ndarray
    gradient: np.ndarray  # g = Q theta + p at the solution
    b: float
    iterations: int
    kkt_violation: float  # final m - M
    converged: bool
    objective_history: list[float] = field(default_factory=list)


def kkt_gap(
    theta: np.ndarray, gradient: np.ndarray, z: np.ndarray, c: float
) -> tuple[float, int, int]:
    """(m - M, argmax index, argmin index) of the KKT optimality gap.

    v = -z*g; m is the largest v over indices that can still increase along
    +z (I_up), M the smallest over those that can decrease (I_low). The
    solution is optimal when every lower bound on the offset b sits below
    every upper bound, i.e. m - M <= 0.
    """
    v = -z * gradient
    up = ((z > 0) & (theta < c - _BOUND_EPS)) | ((z < 0) & (theta > _BOUND_EPS))
    low = ((z > 0) & (theta > _BOUND_EPS)) | ((z < 0) & (theta < c - _BOUND_EPS))
    if not up.any() or not low.any():
        return -np.inf, -1, -1
    vi = np.where(up, v, -np.inf)
    vj = np.where(low, v, np.inf)
    i = int(vi.argmax())
    j = int(vj.argmin())
    return float(vi[i] - vj[j]), i, j


def smo_solve(
    kmat: np.ndarray,
    p: np.ndarray,
    z: np.ndarray,
    c: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = 200_000,
) -> SmoResult:
    """Solve the box-constrained dual QP by second-order working-set SMO.

    kmat is the PSD kernel matrix over the theta indices (points may repeat,
    as in SVR). Each iteration picks i as the most KKT-violating ascent
    index and j as the descent index with the largest guaranteed objective
    decrease (v_i - v_j)^2 / a_ij -- first-order j selection zigzags badly
    when the kernel matrix is rank-deficient, e.g. linear kernels with more
    points than features. The pair is then optimized exactly along the
    feasible direction, so the objective never increases.
    """
    n = p.size
    if kmat.shape != (n, n) or z.size != n:
        raise DimensionMismatch("kmat/p/z sizes disagree")
    diag = np.ascontiguousarray(np.diag(kmat))
    theta = np.zeros(n)
    g = p.astype(float).copy()
    history: list[float] = []
    iterations = 0
    converged = False
    gap = -np.inf
    for iterations in range(1, max_iter + 1):
        gap, i, j = kkt_gap(theta, g, z, c)
        if gap < tol:
            converged = True
            iterations -= 1
            break
        v = -z * g
        low = ((z > 0) & (theta > _BOUND_EPS)) | ((z < 0) & (theta < c - _BOUND_EPS))
        diff = v[i] - v
        a_vec = np.maximum(diag[i] + diag - 2.0 * kmat[i], 1e-12)
        decrease = np.where(low & (diff > 0), diff * diff / a_vec, -np.inf)
        j = int(decrease.argmax())
        a = kmat[i, i] + kmat[j, j] - 2.0 * kmat[i, j]
        d_star = (v[i] - v[j]) / max(a, 1e-12)
        cap_i = (c - theta[i]) if z[i] > 0 else theta[i]
        cap_j = theta[j] if z[j] > 0 else (c - theta[j])
        d = min(d_star, cap_i, cap_j)
        theta[i] = np.clip(theta[i] + z[i] * d, 0.0, c)
        theta[j] = np.clip(theta[j] - z[j] * d, 0.0, c)
        g += d * z * (kmat[:, i] - kmat[:, j])
        history.append(0.5 * float(theta @ g) + 0.5 * float(theta @ p))
    else:
        log.warning("SMO hit max_iter=%d with KKT gap %.3g", max_iter, gap)

    # Offset from free variables when present, else the midpoint of the
    # tightest KKT bracket.
    v = -z * g
    free = (theta > _BOUND_EPS) & (theta < c - _BOUND_EPS)
    if free.any():
        b = float(v[free].mean())
    else:
        up = ((z > 0) & (theta < c - _BOUND_EPS)) | ((z < 0) & (theta > _BOUND_EPS))
        low = ((z > 0) & (theta > _BOUND_EPS)) | ((z < 0) & (theta < c - _BOUND_EPS))
        if up.any() and low.any():
            b = float((np.where(up, v, -np.inf).max() + np.where(low, v, np.inf).min()) / 2.0)
        else:
            b = 0.0
    final_gap, _, _ = kkt_gap(theta, g, z, c)
    return SmoResult(
        theta=theta,
        gradient=g,
        b=b,
        iterations=iterations,
        kkt_violation=final_gap,
        converged=converged,
        objective_history=history,
    )


@dataclass(frozen=True)
class EngagementModel:
    """Trained kernel expansion with its standardization constants."""

    kind: str  # "svr" | "svc"
    kernel: KernelSpec
    c: float
    epsilon: float
    support_vectors: np.ndarray  # (m, d), standardized
    dual_coefs: np.ndarray  # (m,), |coef| <= C
    bias_term: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    registry_hash: str

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_means) / self.feature_stds


@dataclass
class TrainReport:
    iterations: int
    kkt_violation: float
    converged: bool
    objective_history: list[float]
    n_support: int


@dataclass(frozen=True)
class SuccessLabeling:
    successful_ids: tuple[str, ...]
    unsuccessful_ids: tuple[str, ...]
    lower_threshold: float
    upper_threshold: float


def _as_matrix(
    x: Sequence[FeatureVector] | Sequence[Sequence[float]] | np.ndarray,
) -> tuple[np.ndarray, str]:
    """Stack inputs into (n, d); returns the registry hash when present."""
    if isinstance(x, np.ndarray):
        return np.atleast_2d(np.asarray(x, dtype=float)), ""
    items = list(x)
    if items and isinstance(items[0], FeatureVector):
        hashes = {fv.registry_hash for fv in items}
        if len(hashes) > 1:
            raise RegistryMismatch("feature vectors from different registries")
        return np.stack([fv.values for fv in items]), items[0].registry_hash
    return np.atleast_2d(np.asarray(items, dtype=float)), ""


def _standardization(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), STD_FLOOR)
    return mean, std


def _default_gamma(x_std: np.ndarray) -> float:
    var = float(x_std.var())
    return 1.0 / (x_std.shape[1] * max(var, STD_FLOOR))


def train_svr(
    x: Sequence[FeatureVector] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    c: float = DEFAULT_C,
    epsilon: float = DEFAULT_EPSILON,
    gamma: float | None = None,
    kernel: str = "rbf",
    tol: float = DEFAULT_TOL,
    registry_hash: str | None = None,
    return_report: bool = False,
):
    """Epsilon-insensitive SVR. Constant labels yield a constant model."""
    xm, inferred_hash = _as_matrix(x)
    y = np.asarray(y, dtype=float)
    if xm.shape[0] != y.size or y.size < 1:
        raise DimensionMismatch(f"need matching X/y with n >= 1, got {xm.shape[0]}/{y.size}")
    if not (np.all(np.isfinite(xm)) and np.all(np.isfinite(y))):
        raise ValueError("features and labels must be finite")
    rhash = registry_hash if registry_hash is not None else inferred_hash
    mean, std = _standardization(xm)
    xs = (xm - mean) / std
    spec = KernelSpec(kind=kernel, gamma=gamma if gamma is not None else _default_gamma(xs))

    if float(y.max() - y.min()) == 0.0:
        log.warning("train_svr: all labels equal (%g); returning constant model", y[0])
        model = EngagementModel(
            kind="svr",
            kernel=spec,
            c=c,
            epsilon=epsilon,
            support_vectors=np.empty((0, xm.shape[1])),
            dual_coefs=np.empty(0),
            bias_term=float(y[0]),
            feature_means=mean,
            feature_stds=std,
            registry_hash=rhash,
        )
        report = TrainReport(0, 0.0, True, [], 0)
        return (model, report) if return_report else model

    n = y.size
    kbase = spec.matrix(xs, xs)
    kmat = np.tile(kbase, (2, 2))  # each point appears as alpha and alpha*
    z = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    res = smo_solve(kmat, p, z, c, tol=tol)
    beta = res.theta[:n] - res.theta[n:]  # alpha - alpha*
    keep = np.abs(beta) > 1e-12
    model = EngagementModel(
        kind="svr",
        kernel=spec,
        c=c,
        epsilon=epsilon,
        support_vectors=xs[keep],
        dual_coefs=beta[keep],
        bias_term=res.b,
        feature_means=mean,
        feature_stds=std,
        registry_hash=rhash,
    )
    report = TrainReport(
        res.iterations, res.kkt_violation, res.converged, res.objective_history, int(keep.sum())
    )
    return (model, report) if return_report else model


def train_svc(
    x: Sequence[FeatureVector] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    c: float = DEFAULT_C,
    gamma: float | None = None,
    kernel: str = "rbf",
    tol: float = DEFAULT_TOL,
    registry_hash: str | None = None,
    return_report: bool = False,
):
    """C-SVM classifier; decision is the sign of the kernel expansion."""
    xm, inferred_hash = _as_matrix(x)
    yraw = np.asarray(labels)
    y = np.where(yraw.astype(float) > 0, 1.0, -1.0)
    if xm.shape[0] != y.size:
        raise DimensionMismatch(f"need matching X/labels, got {xm.shape[0]}/{y.size}")
    if len(np.unique(y)) < 2:
        raise SingleClass("both classes must be present")
    rhash = registry_hash if registry_hash is not None else inferred_hash
    mean, std = _standardization(xm)
    xs = (xm - mean) / std
    spec = KernelSpec(kind=kernel, gamma=gamma if gamma is not None else _default_gamma(xs))

    kmat = spec.matrix(xs, xs)
    res = smo_solve(kmat, -np.ones(y.size), y, c, tol=tol)
    coef = res.theta * y  # y_i alpha_i
    keep = np.abs(coef) > 1e-12
    model = EngagementModel(
        kind="svc",
        kernel=spec,
        c=c,
        epsilon=0.0,
        support_vectors=xs[keep],
        dual_coefs=coef[keep],
        bias_term=res.b,
        feature_means=mean,
        feature_stds=std,
        registry_hash=rhash,
    )
    report = TrainReport(
        res.iterations, res.kkt_violation, res.converged, res.objective_history, int(keep.sum())
    )
    return (model, report) if return_report else model


def predict(model: EngagementModel, x) -> float | np.ndarray:
    """Kernel-expansion value(s) for one vector or a batch.

    For classifiers this is the decision value; use its sign as the label.
    FeatureVector inputs are checked against the model's registry hash.
    """
    single = False
    if isinstance(x, FeatureVector):
        if model.registry_hash and x.registry_hash != model.registry_hash:
            raise RegistryMismatch("feature vector registry does not match model")
        x = x.values
        single = True
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        single = True
        x = x[None, :]
    if x.shape[1] != model.feature_means.size:
        raise DimensionMismatch(
            f"expected {model.feature_means.size} features, got {x.shape[1]}"
        )
    xs = model.standardize(x)
    if model.support_vectors.shape[0] == 0:
        out = np.full(x.shape[0], model.bias_term)
    else:
        out = model.dual_coefs @ model.kernel.matrix(model.support_vectors, xs) + model.bias_term
    return float(out[0]) if single else out


def classify(model: EngagementModel, x) -> int | np.ndarray:
    val = predict(model, x)
    if isinstance(val, float):
        return 1 if val >= 0 else -1
    return np.where(val >= 0, 1, -1)


def quartile_labels(scores: Mapping[str, float]) -> SuccessLabeling:
    """Top-quartile posts are successful, bottom-quartile unsuccessful.

    Thresholds are the linearly interpolated 25th/75th percentiles; scores
    exactly at a threshold are excluded (conservative tie rule).
    """
    if len(scores) < 8:
        raise TooFewScores(f"need >= 8 scores, got {len(scores)}")
    values = np.array(list(scores.values()), dtype=float)
    lower, upper = np.quantile(values, [0.25, 0.75])
    successful = tuple(sorted(k for k, v in scores.items() if v > upper))
    unsuccessful = tuple(sorted(k for k, v in scores.items() if v < lower))
    if not successful or not unsuccessful:
        raise DegenerateQuartiles("tie exclusion emptied a quartile class")
    return SuccessLabeling(
        successful_ids=successful,
        unsuccessful_ids=unsuccessful,
        lower_threshold=float(lower),
        upper_threshold=float(upper),
    )


@dataclass
class EvaluationReport:
    kind: str
    accuracy: float | None
    rmse: float | None
    confusion: dict[str, int] | None
    top_features: list[tuple[str, float]]  # (feature id, |linear weight|)


def linear_significance(
    x, y, kind: str, c: float = SIGNIFICANCE_C, epsilon: float = DEFAULT_EPSILON, top_n: int = 5,
    registry: FeatureRegistry | None = None,
) -> list[tuple[str, float]]:
    """Top features by |weight| of a linear-kernel twin trained on (x, y)."""
    if kind == "svr":
        lin = train_svr(x, y, c=c, epsilon=epsilon, kernel="linear")
    else:
        lin = train_svc(x, y, c=c, kernel="linear")
    if lin.support_vectors.shape[0] == 0:
        return []
    w = lin.dual_coefs @ lin.support_vectors
    order = np.argsort(-np.abs(w), kind="stable")[:top_n]
    names = registry.ids if registry is not None else None
    return [
        (names[i] if names else f"feature_{i}", float(abs(w[i]))) for i in order
    ]


def evaluate(
    model: EngagementModel,
    x,
    y,
    registry: FeatureRegistry | None = None,
    significance: bool = True,
    top_n: int = 5,
) -> EvaluationReport:
    """Test metrics plus the linear-kernel significance ranking."""
    xm, _ = _as_matrix(x)
    y = np.asarray(y, dtype=float)
    if xm.shape[0] == 0 or y.size == 0:
        raise EmptyTestSet("evaluation requires a non-empty test set")
    preds = predict(model, xm)
    top = (
        linear_significance(xm, y, model.kind, top_n=top_n, registry=registry)
        if significance
        else []
    )
    if model.kind == "svc":
        yhat = np.where(preds >= 0, 1.0, -1.0)
        ybin = np.where(y > 0, 1.0, -1.0)
        confusion = {
            "tp": int(((yhat == 1) & (ybin == 1)).sum()),
            "tn": int(((yhat == -1) & (ybin == -1)).sum()),
            "fp": int(((yhat == 1) & (ybin == -1)).sum()),
            "fn": int(((yhat == -1) & (ybin == 1)).sum()),
        }
        return EvaluationReport(
            kind="svc",
            accuracy=float((yhat == ybin).mean()),
            rmse=None,
            confusion=confusion,
            top_features=top,
        )
    rmse = float(np.sqrt(((preds - y) ** 2).mean()))
    return EvaluationReport(kind="svr", accuracy=None, rmse=rmse, confusion=None, top_features=top)


def cross_validated_grid_search(
    x,
    y,
    kind: str,
    grid: Mapping[str, Sequence[float]],
    folds: int = 5,
    seed: int = 42,
) -> dict[str, float]:
    """Pick hyperparameters by k-fold CV (RMSE for svr, accuracy for svc).

    Grid keys may be c, epsilon, gamma. Deterministic: fixed fold split and
    lexicographic tie-breaking over parameter combinations.
    """
    from itertools import product

    xm, _ = _as_matrix(x)
    y = np.asarray(y, dtype=float)
    n = y.size
    folds = min(folds, n)
    order = np.random.default_rng(seed).permutation(n)
    fold_ids = np.array_split(order, folds)

    keys = sorted(grid)
    best: tuple[float, tuple[float, ...]] | None = None
    for combo in product(*(sorted(grid[k]) for k in keys)):
        hp = dict(zip(keys, combo))
        scores = []
        for i in range(folds):
            test_idx = fold_ids[i]
            train_idx = np.concatenate([fold_ids[j] for j in range(folds) if j != i])
            if train_idx.size == 0 or test_idx.size == 0:
                continue
            try:
                if kind == "svr":
                    m = train_svr(xm[train_idx], y[train_idx], **hp)
                    p = predict(m, xm[test_idx])
                    scores.append(-float(np.sqrt(((p - y[test_idx]) ** 2).mean())))
                else:
                    m = train_svc(xm[train_idx], y[train_idx], **hp)
                    p = np.asarray(predict(m, xm[test_idx]))
                    yhat = np.where(p >= 0, 1.0, -1.0)
                    ybin = np.where(y[test_idx] > 0, 1.0, -1.0)
                    scores.append(float((yhat == ybin).mean()))
            except SingleClass:
                continue
        mean_score = float(np.mean(scores)) if scores else -np.inf
        if best is None or mean_score > best[0]:
            best = (mean_score, combo)
    assert best is not None
    return dict(zip(keys, best[1]))


def save_model(model: EngagementModel, path: str | Path) -> None:
    """Write the versioned JSON model artifact."""
    payload = {
        "version": 1,
        "kind": model.kind,
        "kernel": {"kind": model.kernel.kind, "gamma": float(model.kernel.gamma)},
        "C": float(model.c),
        "epsilon": float(model.epsilon),
        "sv": [[float(v) for v in row] for row in model.support_vectors],
        "alpha": [float(v) for v in model.dual_coefs],
        "b": float(model.bias_term),
        "standardize": {
            "mean": [float(v) for v in model.feature_means],
            "std": [float(v) for v in model.feature_stds],
        },
        "registry_hash": model.registry_hash,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> EngagementModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != 1:
        raise ValueError(f"unsupported model artifact version in {path}")
    mean = np.asarray(payload["standardize"]["mean"], dtype=float)
    sv = np.asarray(payload["sv"], dtype=float)
    if sv.size == 0:
        sv = np.empty((0, mean.size))
    return EngagementModel(
        kind=payload["kind"],
        kernel=KernelSpec(
            kind=payload["kernel"]["kind"], gamma=float(payload["kernel"]["gamma"]) or 1.0
        ),
        c=float(payload["C"]),
        epsilon=float(payload["epsilon"]),
        support_vectors=sv,
        dual_coefs=np.asarray(payload["alpha"], dtype=float),
        bias_term=float(payload["b"]),
        feature_means=mean,
        feature_stds=np.asarray(payload["standardize"]["std"], dtype=float),
        registry_hash=payload["registry_hash"],
    )
