"""Corpus ingestion and engagement scoring.

A post's raw engagement is likes + retweets; scores are then z-scored per
page (population convention) so that pages of very different sizes become
comparable. Pages with fewer than two posts or zero variance cannot be
normalized and are excluded from downstream training.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import DegeneratePage, InsufficientData, SchemaError

log = logging.getLogger(__name__)

# Machine-assignable bias label names accepted in corpus files.
VALID_BIAS_LABELS = frozenset(
    {"HumanPresence", "AnimalPresence", "Holiday", "Discount"}
)

_REQUIRED_FIELDS = ("post_id", "page_id", "image", "likes", "retweets", "timestamp", "text")


@dataclass(frozen=True)
class PostRecord:
    """One promotional image post as ingested from a corpus file."""

    post_id: str
    page_id: str
    image_path: str
    likes: int
    retweets: int
    timestamp: datetime  # always UTC
    text: str
    external_bias_labels: frozenset[str] = frozenset()
    followers: int | None = None

    def __post_init__(self):
        if self.likes < 0 or self.retweets < 0:
            raise ValueError("likes and retweets must be non-negative")


@dataclass(frozen=True)
class PageStats:
    """Per-page moments of raw engagement scores."""

    page_id: str
    mu: float
    sigma: float  # population convention (divide by n)
    n_posts: int
    followers: int | None = None


@dataclass
class ScoredPost:
    """A post with its raw, normalized, and (optionally) debiased scores."""

    post: PostRecord
    epsilon: float
    epsilon_n: float
    epsilon_nt: float | None = None

    @property
    def training_score(self) -> float:
        """Debiased score when present, otherwise the normalized score."""
        return self.epsilon_n if self.epsilon_nt is None else self.epsilon_nt


@dataclass
class RejectedRow:
    line: int
    reason: str


@dataclass
class LoadResult:
    records: list[PostRecord]
    rejects: list[RejectedRow] = field(default_factory=list)


def compute_engagement(likes: int, retweets: int) -> int:
    """Raw engagement: the sum of likes and retweets."""
    if likes < 0 or retweets < 0:
        raise ValueError("likes and retweets must be non-negative")
    return likes + retweets


def normalize_page(
    scores: Sequence[float], page_id: str = "", followers: int | None = None
) -> tuple[PageStats, list[float]]:
    """Z-score one page's raw engagement scores.

    Uses the population standard deviation (divide by n): the output is a
    within-page z-score, not an estimator. Raises DegeneratePage for pages
    that cannot be normalized (n < 2 or zero variance); such pages must be
    excluded from training.
    """
    n = len(scores)
    if n < 2:
        raise DegeneratePage(f"page {page_id!r}: {n} post(s), need at least 2")
    arr = np.asarray(scores, dtype=float)
    mu = float(arr.mean())
    sigma = float(arr.std())  # ddof=0
    if sigma == 0.0:
        raise DegeneratePage(f"page {page_id!r}: zero score variance")
    stats_ = PageStats(page_id=page_id, mu=mu, sigma=sigma, n_posts=n, followers=followers)
    return stats_, [(s - mu) / sigma for s in arr.tolist()]


def _parse_timestamp(raw: str) -> datetime:
    """Parse an RFC 3339 timestamp and normalize it to UTC."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _record_from_mapping(obj: dict, line: int) -> PostRecord:
    missing = [k for k in _REQUIRED_FIELDS if obj.get(k) in (None, "")]
    if missing:
        raise SchemaError(f"missing required field(s): {', '.join(missing)}")
    try:
        likes = int(obj["likes"])
        retweets = int(obj["retweets"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"likes/retweets not integers: {exc}") from exc
    if likes < 0 or retweets < 0:
        raise SchemaError("likes/retweets must be non-negative")
    try:
        ts = _parse_timestamp(str(obj["timestamp"]))
    except ValueError as exc:
        raise SchemaError(f"bad timestamp: {exc}") from exc

    labels_raw = obj.get("bias_labels") or []
    if isinstance(labels_raw, str):
        labels_raw = [s for s in labels_raw.split(";") if s]
    labels = frozenset(str(s).strip() for s in labels_raw if str(s).strip())
    unknown = labels - VALID_BIAS_LABELS
    if unknown:
        raise SchemaError(f"unknown bias label(s): {', '.join(sorted(unknown))}")

    followers = obj.get("followers")
    if followers in (None, ""):
        followers = None
    else:
        try:
            followers = int(followers)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"followers not an integer: {exc}") from exc
        if followers < 0:
            raise SchemaError("followers must be non-negative")

    return PostRecord(
        post_id=str(obj["post_id"]),
        page_id=str(obj["page_id"]),
        image_path=str(obj["image"]),
        likes=likes,
        retweets=retweets,
        timestamp=ts,
        text=str(obj["text"]),
        external_bias_labels=labels,
        followers=followers,
    )


def load_corpus(path: str | Path, format: str = "jsonlines") -> LoadResult:
    """Load a corpus file; malformed rows go to the rejects report.

    JSON-lines: one object per line. CSV: header row with the same field
    names, bias_labels semicolon-separated. Duplicate post_ids reject the
    later occurrence.
    """
    path = Path(path)
    if format not in ("csv", "jsonlines"):
        raise ValueError(f"unknown corpus format {format!r}")
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")

    result = LoadResult(records=[])
    seen_ids: set[str] = set()

    def admit(obj: dict, line: int):
        try:
            rec = _record_from_mapping(obj, line)
        except SchemaError as exc:
            result.rejects.append(RejectedRow(line=line, reason=str(exc)))
            return
        if rec.post_id in seen_ids:
            result.rejects.append(
                RejectedRow(line=line, reason=f"duplicate post_id {rec.post_id!r}")
            )
            return
        seen_ids.add(rec.post_id)
        result.records.append(rec)

    if format == "jsonlines":
        with path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    result.rejects.append(RejectedRow(line=line_no, reason=f"bad json: {exc}"))
                    continue
                if not isinstance(obj, dict):
                    result.rejects.append(RejectedRow(line=line_no, reason="line is not an object"))
                    continue
                admit(obj, line_no)
    else:
        with path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise SchemaError("csv file has no header row")
            missing = [k for k in _REQUIRED_FIELDS if k not in reader.fieldnames]
            if missing:
                raise SchemaError(f"csv header missing column(s): {', '.join(missing)}")
            for line_no, row in enumerate(reader, start=2):  # header is line 1
                admit({k: v for k, v in row.items() if k is not None}, line_no)

    if result.rejects:
        log.warning("load_corpus: %d row(s) rejected from %s", len(result.rejects), path)
    return result


def write_rejects(rejects: Iterable[RejectedRow], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in rejects:
            fh.write(json.dumps({"line": r.line, "reason": r.reason}) + "\n")


def score_corpus(records: Sequence[PostRecord]) -> tuple[list[ScoredPost], dict[str, PageStats]]:
    """Group posts by page, z-score each page, drop degenerate pages.

    Returns scored posts (input order preserved within the survivors) and
    the per-page stats of every admitted page.
    """
    by_page: dict[str, list[PostRecord]] = {}
    for rec in records:
        by_page.setdefault(rec.page_id, []).append(rec)

    page_stats: dict[str, PageStats] = {}
    normalized: dict[str, float] = {}
    for page_id, posts in by_page.items():
        raw = [float(compute_engagement(p.likes, p.retweets)) for p in posts]
        followers = next((p.followers for p in posts if p.followers is not None), None)
        try:
            stats_, zs = normalize_page(raw, page_id=page_id, followers=followers)
        except DegeneratePage as exc:
            log.warning("excluding page: %s", exc)
            continue
        page_stats[page_id] = stats_
        for post, z in zip(posts, zs):
            normalized[post.post_id] = z

    scored = [
        ScoredPost(
            post=rec,
            epsilon=float(compute_engagement(rec.likes, rec.retweets)),
            epsilon_n=normalized[rec.post_id],
        )
        for rec in records
        if rec.post_id in normalized
    ]
    return scored, page_stats


@dataclass
class CorrelationReport:
    pearson: float
    spearman: float
    pages: list[dict]  # per-page followers, mean, median, variance


def page_correlation_report(
    pages: Sequence[tuple[int, Sequence[float]]]
) -> CorrelationReport:
    """Correlate follower counts with mean page engagement.

    `pages` holds (followers, raw engagement scores) per page. Also returns
    the per-page medians and variances used for the distribution plot.
    """
    usable = [(f, list(s)) for f, s in pages if f is not None and len(s) > 0]
    if len(usable) < 3:
        raise InsufficientData(f"need at least 3 pages with followers, got {len(usable)}")
    followers = np.array([f for f, _ in usable], dtype=float)
    means = np.array([float(np.mean(s)) for _, s in usable])
    pearson = float(stats.pearsonr(followers, means).statistic)
    spearman = float(stats.spearmanr(followers, means).statistic)
    table = [
        {
            "followers": int(f),
            "mean": float(np.mean(s)),
            "median": float(np.median(s)),
            "variance": float(np.var(s)),
        }
        for f, s in usable
    ]
    return CorrelationReport(pearson=pearson, spearman=spearman, pages=table)
