"""Bias labeling: LOF outlier mining, lexicon text classifiers, holiday windows.

Each post receives at most one bias label. Visual biases (human/animal
presence) arrive as externally supplied labels; holiday and discount biases
are detected from the post text via seed lexicons expanded with embedding
nearest neighbors. Posts with two or more labels are excluded entirely.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import ScoredPost
from .errors import BadK, DimensionMismatch, NoSeedInVocabulary, SchemaError

log = logging.getLogger(__name__)

LRD_FLOOR = 1e-12  # reachability-density floor for coincident points


class BiasKind(str, Enum):
    """The four machine-assignable bias categories."""

    HUMAN_PRESENCE = "HumanPresence"
    ANIMAL_PRESENCE = "AnimalPresence"
    HOLIDAY = "Holiday"
    DISCOUNT = "Discount"


# Text can only assert these two; the visual kinds come from external labels.
TEXT_KINDS = (BiasKind.DISCOUNT, BiasKind.HOLIDAY)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Unicode-lowercase tokens split on non-alphanumerics. No stemming."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class HolidayWindow:
    """A yearly holiday with a detection window around its date."""

    name: str
    month: int
    day: int
    pre_days: int = 7
    post_days: int = 7

    def window_for_year(self, year: int) -> tuple[date, date]:
        day = self.day
        while True:
            try:
                anchor = date(year, self.month, day)
                break
            except ValueError:  # e.g. Feb 29 in a non-leap year
                day -= 1
        return anchor - timedelta(days=self.pre_days), anchor + timedelta(days=self.post_days)

    def contains(self, when: date) -> bool:
        # Windows may span a year boundary (e.g. Christmas +7 days), so the
        # anchor year is not necessarily the timestamp's year.
        for year in (when.year - 1, when.year, when.year + 1):
            start, end = self.window_for_year(year)
            if start <= when <= end:
                return True
        return False


@dataclass
class Lexicon:
    """Seed words plus their embedding expansion for one bias kind."""

    kind: BiasKind
    seed_words: list[str]
    expanded_words: list[str] = field(default_factory=list)
    holiday_windows: list[HolidayWindow] = field(default_factory=list)

    def __post_init__(self):
        self.seed_words = sorted({w.lower() for w in self.seed_words})
        if not self.expanded_words:
            self.expanded_words = list(self.seed_words)
        else:
            self.expanded_words = sorted({w.lower() for w in self.expanded_words} | set(self.seed_words))

    @property
    def word_set(self) -> frozenset[str]:
        return frozenset(self.expanded_words)


@dataclass
class EmbeddingTable:
    """Pretrained word vectors, all of one dimension."""

    dimension: int
    entries: dict[str, np.ndarray]
    _vocab: list[str] = field(default_factory=list, repr=False)
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("embedding table must not be empty")
        self._vocab = sorted(self.entries)
        self._matrix = np.stack([self.entries[w] for w in self._vocab])

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def vector(self, word: str) -> np.ndarray:
        return self.entries[word]

    def nearest(self, word: str, m: int) -> list[str]:
        """The m vocabulary words most cosine-similar to `word` (excluded
        itself); ties broken lexicographically."""
        if m <= 0:
            return []
        v = self.entries[word]
        mat = self._matrix
        norms = np.linalg.norm(mat, axis=1) * max(float(np.linalg.norm(v)), 1e-300)
        sims = mat @ v / np.maximum(norms, 1e-300)
        order = sorted(
            (i for i, w in enumerate(self._vocab) if w != word),
            key=lambda i: (-sims[i], self._vocab[i]),
        )
        return [self._vocab[i] for i in order[:m]]


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load a text embedding file: one `word v1 v2 ... vd` line per word.

    Duplicate words keep the last occurrence (with a warning). Mixed vector
    dimensions raise DimensionMismatch.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"embedding file not found: {path}")
    entries: dict[str, np.ndarray] = {}
    dim: int | None = None
    dupes = 0
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2 or not parts[0]:
                continue
            word = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:] if x != ""], dtype=float)
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: bad vector component: {exc}") from exc
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DimensionMismatch(
                    f"{path}:{line_no}: dimension {vec.size} != {dim}"
                )
            if word in entries:
                dupes += 1
            entries[word] = vec
    if dim is None:
        raise SchemaError(f"{path}: no embedding lines found")
    if dupes:
        log.warning("load_embeddings: %d duplicate word(s), last occurrence kept", dupes)
    return EmbeddingTable(dimension=dim, entries=entries)


def expand_keywords(
    seeds: Sequence[str],
    table: EmbeddingTable,
    m: int = 20,
    stoplist: Iterable[str] = (),
) -> tuple[list[str], list[str]]:
    """Union the seeds with each seed's m nearest vocabulary words.

    Returns (expanded words sorted, seeds missing from the vocabulary). The
    stoplist stands in for the manual filtering pass: stop-listed words are
    removed from the expansion (seeds themselves are never removed).
    """
    seeds = [s.lower() for s in seeds]
    present = [s for s in seeds if s in table]
    if not present:
        raise NoSeedInVocabulary(f"none of {len(seeds)} seed(s) found in vocabulary")
    missing = [s for s in seeds if s not in table]
    if missing:
        log.warning("expand_keywords: seeds absent from vocabulary: %s", ", ".join(missing))
    stop = {w.lower() for w in stoplist}
    words = set(seeds)
    for seed in present:
        words.update(w for w in table.nearest(seed, m) if w not in stop)
    return sorted(words), missing


def classify_text_bias(
    text: str, timestamp: datetime, lexicons: Sequence[Lexicon]
) -> set[BiasKind]:
    """Text-detectable bias kinds present in a post.

    Discount: any lexicon word matches a whole token. Holiday: a word match
    AND the timestamp inside one of the holiday windows (both required).
    """
    kinds_seen = [lx.kind for lx in lexicons]
    if len(kinds_seen) != len(set(kinds_seen)):
        raise ValueError("at most one lexicon per bias kind")
    tokens = set(tokenize(text))
    found: set[BiasKind] = set()
    for lx in lexicons:
        if lx.kind not in TEXT_KINDS:
            continue
        if not (tokens & lx.word_set):
            continue
        if lx.kind is BiasKind.HOLIDAY:
            when = timestamp.date()
            if any(w.contains(when) for w in lx.holiday_windows):
                found.add(BiasKind.HOLIDAY)
        else:
            found.add(lx.kind)
    return found


@dataclass
class LabeledCorpus:
    """Partition of a scored corpus into unbiased / per-bias / excluded."""

    unbiased: list[ScoredPost]
    biased: dict[BiasKind, list[ScoredPost]]
    excluded_multibias: list[ScoredPost]

    def counts(self) -> dict[str, int]:
        out = {"unbiased": len(self.unbiased), "excluded_multibias": len(self.excluded_multibias)}
        for kind, posts in self.biased.items():
            out[kind.value] = len(posts)
        return out


def assign_bias_labels(
    posts: Sequence[ScoredPost], lexicons: Sequence[Lexicon]
) -> LabeledCorpus:
    """Partition posts by their combined external + text bias labels.

    Zero labels -> unbiased; exactly one -> that bias set; two or more ->
    excluded (the at-most-one-bias restriction).
    """
    unbiased: list[ScoredPost] = []
    biased: dict[BiasKind, list[ScoredPost]] = {k: [] for k in BiasKind}
    excluded: list[ScoredPost] = []
    for sp in posts:
        labels = {BiasKind(v) for v in sp.post.external_bias_labels}
        labels |= classify_text_bias(sp.post.text, sp.post.timestamp, lexicons)
        if not labels:
            unbiased.append(sp)
        elif len(labels) == 1:
            biased[next(iter(labels))].append(sp)
        else:
            excluded.append(sp)
    return LabeledCorpus(
        unbiased=unbiased,
        biased={k: v for k, v in biased.items() if v},
        excluded_multibias=excluded,
    )


def lof_scores(points: Sequence[Sequence[float]] | np.ndarray, k: int) -> np.ndarray:
    """Classic LOF_k per point, min-max normalized to [0, 1] over the batch.

    Follows the reachability-distance / local-reachability-density
    formulation with tie-inclusive neighborhoods: the k-neighborhood is
    every other point within the k-distance, so it can exceed k under ties.
    Coincident points are handled by flooring the reachability density.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D array (n, d)")
    n = pts.shape[0]
    if k < 1 or k >= n:
        raise BadK(f"need 1 <= k < n; got k={k}, n={n}")

    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)

    sorted_d = np.sort(dist, axis=1)
    k_dist = sorted_d[:, k - 1]  # distance to the k-th nearest neighbor
    # Tie-inclusive neighborhoods as boolean masks.
    neigh = dist <= k_dist[:, None]
    sizes = neigh.sum(axis=1)

    # reach-dist_k(p, o) = max(k-distance(o), d(p, o))
    reach = np.maximum(k_dist[None, :], dist)
    lrd = np.empty(n)
    for i in range(n):
        mean_reach = reach[i, neigh[i]].mean()
        lrd[i] = 1.0 / max(mean_reach, LRD_FLOOR)
    raw = np.array([lrd[neigh[i]].mean() / lrd[i] for i in range(n)])

    lo, hi = raw.min(), raw.max()
    if hi - lo <= 0.0:
        return np.zeros(n)
    return (raw - lo) / (hi - lo)


def lof_raw(points: Sequence[Sequence[float]] | np.ndarray, k: int) -> np.ndarray:
    """Raw (un-normalized) LOF_k values; same definition as lof_scores."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if k < 1 or k >= n:
        raise BadK(f"need 1 <= k < n; got k={k}, n={n}")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    k_dist = np.sort(dist, axis=1)[:, k - 1]
    neigh = dist <= k_dist[:, None]
    reach = np.maximum(k_dist[None, :], dist)
    lrd = np.array(
        [1.0 / max(reach[i, neigh[i]].mean(), LRD_FLOOR) for i in range(n)]
    )
    return np.array([lrd[neigh[i]].mean() / lrd[i] for i in range(n)])


def mine_page_outliers(
    scored: Sequence[ScoredPost], k: int = 20
) -> dict[str, list[tuple[str, float]]]:
    """Normalized LOF of raw engagement per page, for taxonomy review.

    k is capped at n-1 per page; pages with a single post are skipped.
    """
    by_page: dict[str, list[ScoredPost]] = {}
    for sp in scored:
        by_page.setdefault(sp.post.page_id, []).append(sp)
    out: dict[str, list[tuple[str, float]]] = {}
    for page_id, posts in sorted(by_page.items()):
        if len(posts) < 2:
            continue
        kk = min(k, len(posts) - 1)
        scores = lof_scores([[sp.epsilon] for sp in posts], kk)
        ranked = sorted(
            zip((sp.post.post_id for sp in posts), scores.tolist()),
            key=lambda t: (-t[1], t[0]),
        )
        out[page_id] = ranked
    return out


def load_lexicon_configs(path: str | Path) -> list[dict]:
    """Read the lexicon config file (a JSON list of per-kind objects)."""
    with Path(path).open("r", encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, Mapping):
        data = [data]
    if not isinstance(data, list):
        raise SchemaError("lexicon config must be a JSON object or list")
    return data


def build_lexicons(
    configs: Sequence[Mapping], table: EmbeddingTable | None = None, m: int = 20
) -> list[Lexicon]:
    """Materialize lexicons from config objects, expanding seeds when an
    embedding table is available; otherwise the seeds are used as-is."""
    lexicons = []
    for cfg in configs:
        kind = BiasKind(cfg["kind"])
        seeds = [str(w) for w in cfg.get("seeds", [])]
        stop = [str(w) for w in cfg.get("stoplist", [])]
        windows = [
            HolidayWindow(
                name=str(h["name"]),
                month=int(str(h["date"]).split("-")[0]),
                day=int(str(h["date"]).split("-")[1]),
                pre_days=int(h.get("pre_days", 7)),
                post_days=int(h.get("post_days", 7)),
            )
            for h in cfg.get("holidays", [])
        ]
        expanded: list[str] = []
        if seeds and table is not None:
            try:
                expanded, _ = expand_keywords(seeds, table, m=m, stoplist=stop)
            except NoSeedInVocabulary:
                log.warning("no %s seed in vocabulary; using seeds unexpanded", kind.value)
        lexicons.append(
            Lexicon(kind=kind, seed_words=seeds, expanded_words=expanded, holiday_windows=windows)
        )
    return lexicons
