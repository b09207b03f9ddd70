"""Bounded feature tuning: exhaustive what-if search over percent grids.

Searches every subset of at most k tunable features and every combination
of grid steps on that subset for the highest predicted engagement. The
search is exact (no heuristics), so a brute-force enumeration oracle can
verify it; a budget cap keeps the combinatorics honest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations, product
from math import comb
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .aesthetics.features import FeatureRegistry, FeatureVector
from .errors import BudgetExceeded, RegistryMismatch, UnknownFeature
from .model import EngagementModel, predict

DEFAULT_BUDGET = 10_000_000
ZERO_VALUE_EPS = 1e-9  # below this magnitude percent changes turn additive


@dataclass(frozen=True)
class TunerParams:
    """Search bounds: at most k features, each within +-s percent, step t."""

    k: int = 2
    s: float = 24.0
    t: float = 4.0
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if not 0 < self.t <= self.s:
            raise ValueError("need 0 < t <= s")

    def grid(self) -> tuple[float, ...]:
        """Percent steps {0, +-t, +-2t, ...} capped and closed at +-s."""
        steps = int(self.s / self.t)
        vals = {0.0, self.s, -self.s}
        for i in range(1, steps + 1):
            vals.add(round(i * self.t, 12))
            vals.add(round(-i * self.t, 12))
        return tuple(sorted(v for v in vals if abs(v) <= self.s + 1e-12))


@dataclass(frozen=True)
class FeatureChange:
    feature_id: str
    human_name: str
    percent: float
    old_value: float
    new_value: float


@dataclass(frozen=True)
class TuningSuggestion:
    changes: tuple[FeatureChange, ...]
    predicted_before: float
    predicted_after: float

    def deltas(self) -> dict[str, float]:
        return {c.feature_id: c.percent for c in self.changes}


def adjust_value(
    value: float, percent: float, feature_std: float, lower: float, upper: float
) -> float:
    """One tuned feature value: multiplicative step with additive fallback.

    Values at (numerical) zero cannot move multiplicatively, so the step
    becomes percent/100 of the feature's training standard deviation. The
    result clamps to the registry bounds.
    """
    if abs(value) < ZERO_VALUE_EPS:
        new = value + percent / 100.0 * feature_std
    else:
        new = value * (1.0 + percent / 100.0)
    return float(min(max(new, lower), upper))


def _adjusted_vector(
    x: np.ndarray,
    deltas: Mapping[str, float],
    registry: FeatureRegistry,
    feature_stds: np.ndarray,
) -> np.ndarray:
    out = x.copy()
    for fid, pct in deltas.items():
        idx = registry.index(fid)
        d = registry.descriptors[idx]
        out[idx] = adjust_value(float(x[idx]), float(pct), float(feature_stds[idx]), d.lower, d.upper)
    return out


def _check_vector(model: EngagementModel, x: FeatureVector, registry: FeatureRegistry) -> np.ndarray:
    if model.registry_hash and x.registry_hash != model.registry_hash:
        raise RegistryMismatch("feature vector registry does not match model")
    if x.registry_hash != registry.hash:
        raise RegistryMismatch("feature vector registry does not match registry")
    return np.asarray(x.values, dtype=float)


def whatif(
    model: EngagementModel,
    x: FeatureVector,
    deltas: Mapping[str, float],
    registry: FeatureRegistry,
) -> tuple[float, FeatureVector]:
    """Predicted score and adjusted vector after applying percent deltas."""
    values = _check_vector(model, x, registry)
    known = set(registry.ids)
    for fid in deltas:
        if fid not in known:
            raise UnknownFeature(f"unknown feature id: {fid}")
    adjusted = _adjusted_vector(values, deltas, registry, model.feature_stds)
    vec = FeatureVector(registry_hash=x.registry_hash, values=adjusted)
    return float(predict(model, adjusted)), vec


def combination_count(n_tunable: int, k: int, grid_size: int) -> int:
    """Search-space size: the empty combination plus every subset of at
    most k features assigned non-zero grid steps."""
    nonzero = grid_size - 1
    return 1 + sum(comb(n_tunable, j) * nonzero**j for j in range(1, k + 1))


def suggest(
    model: EngagementModel,
    x: FeatureVector,
    params: TunerParams,
    registry: FeatureRegistry,
) -> TuningSuggestion:
    """Exhaustive argmax over bounded feature perturbations.

    Ties break toward fewer changed features, then smaller total percent
    magnitude, then lexicographic feature ids; the unchanged vector is
    always a candidate, so the result never predicts below the baseline.
    """
    values = _check_vector(model, x, registry)
    tunable = [d.id for d in registry if d.tunable]
    k = min(params.k, len(tunable))
    grid = params.grid()
    nonzero = tuple(g for g in grid if g != 0.0)
    total = combination_count(len(tunable), k, len(grid))
    if total > params.budget:
        raise BudgetExceeded(
            f"{total} combinations exceed budget {params.budget}; lower k or raise t"
        )

    before = float(predict(model, values))
    # Candidate key: (-score, n_changes, L1 percent, ids) — min() picks the
    # best score with deterministic tie-breaking.
    best_key = (-before, 0, 0.0, ())
    best_deltas: dict[str, float] = {}
    for j in range(1, k + 1):
        for subset in combinations(tunable, j):
            for steps in product(nonzero, repeat=j):
                deltas = dict(zip(subset, steps))
                adjusted = _adjusted_vector(values, deltas, registry, model.feature_stds)
                score = float(predict(model, adjusted))
                key = (
                    -score,
                    j,
                    float(sum(abs(s) for s in steps)),
                    subset,
                )
                if key < best_key:
                    best_key = key
                    best_deltas = deltas

    after = -best_key[0]
    changes = []
    for fid in sorted(best_deltas):
        idx = registry.index(fid)
        d = registry.descriptors[idx]
        new = adjust_value(
            float(values[idx]),
            best_deltas[fid],
            float(model.feature_stds[idx]),
            d.lower,
            d.upper,
        )
        changes.append(
            FeatureChange(
                feature_id=fid,
                human_name=d.human_name,
                percent=float(best_deltas[fid]),
                old_value=float(values[idx]),
                new_value=new,
            )
        )
    return TuningSuggestion(
        changes=tuple(changes), predicted_before=before, predicted_after=float(after)
    )


def suggestion_to_json(s: TuningSuggestion) -> dict:
    return {
        "changes": [
            {
                "feature": c.feature_id,
                "name": c.human_name,
                "percent": c.percent,
                "old": c.old_value,
                "new": c.new_value,
            }
            for c in s.changes
        ],
        "before": s.predicted_before,
        "after": s.predicted_after,
    }


def save_suggestion(s: TuningSuggestion, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(suggestion_to_json(s), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
