"""Corpus loading, engagement scoring, and per-page normalization."""

from __future__ import annotations

import json
import statistics
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adlens.corpus import (
    PostRecord,
    compute_engagement,
    load_corpus,
    normalize_page,
    page_correlation_report,
    score_corpus,
)
from adlens.errors import DegeneratePage, InsufficientData


def make_record(post_id="a1", page_id="pg", likes=10, retweets=5, **kw):
    return PostRecord(
        post_id=post_id,
        page_id=page_id,
        image_path=f"images/{post_id}.png",
        likes=likes,
        retweets=retweets,
        timestamp=datetime(2024, 3, 1, 12, 0, tzinfo=timezone.utc),
        text="spring shoes",
        **kw,
    )


def test_engagement_is_likes_plus_retweets():
    assert compute_engagement(10, 5) == 15
    assert compute_engagement(0, 0) == 0
    with pytest.raises(ValueError):
        compute_engagement(-1, 0)
    with pytest.raises(ValueError):
        compute_engagement(3, -2)


def test_normalize_page_exact_values():
    stats, zs = normalize_page([1.0, 2.0, 3.0, 4.0], page_id="pg")
    sigma = statistics.pstdev([1.0, 2.0, 3.0, 4.0])
    assert stats.mu == 2.5
    assert stats.sigma == pytest.approx(sigma)
    assert stats.n_posts == 4
    expected = [(v - 2.5) / sigma for v in [1.0, 2.0, 3.0, 4.0]]
    assert zs == pytest.approx(expected)


@given(
    st.lists(
        st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        min_size=2,
        max_size=60,
    ).filter(lambda xs: statistics.pstdev(xs) > 1e-6)
)
@settings(max_examples=200, deadline=None)
def test_normalize_page_moments_property(scores):
    _, zs = normalize_page(scores)
    arr = np.asarray(zs)
    assert abs(arr.mean()) < 1e-9
    assert abs(arr.std() - 1.0) < 1e-9


def test_normalize_page_rejects_degenerate():
    with pytest.raises(DegeneratePage):
        normalize_page([3.0], page_id="solo")
    with pytest.raises(DegeneratePage):
        normalize_page([], page_id="empty")
    with pytest.raises(DegeneratePage):
        normalize_page([7.0, 7.0, 7.0], page_id="flat")


def test_normalize_page_keeps_followers():
    stats, _ = normalize_page([1.0, 5.0], page_id="pg", followers=1234)
    assert stats.followers == 1234
    assert stats.page_id == "pg"


# ---------------------------------------------------------------------------
# File loading


GOOD_ROW = {
    "post_id": "a1",
    "page_id": "pg1",
    "image": "images/a1.png",
    "likes": 10,
    "retweets": 3,
    "timestamp": "2024-03-01T10:00:00+02:00",
    "text": "new arrivals",
}


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


def test_load_jsonlines_parses_and_normalizes_timezone(tmp_path):
    p = tmp_path / "corpus.jsonl"
    write_jsonl(p, [GOOD_ROW, {**GOOD_ROW, "post_id": "a2", "timestamp": "2024-03-01T08:00:00Z"}])
    result = load_corpus(p)
    assert [r.post_id for r in result.records] == ["a1", "a2"]
    assert not result.rejects
    # +02:00 offset at 10:00 local and Z at 08:00 are the same instant
    assert result.records[0].timestamp == result.records[1].timestamp
    assert result.records[0].timestamp.tzinfo == timezone.utc


def test_load_jsonlines_rejects_are_line_accurate(tmp_path):
    rows = [
        json.dumps(GOOD_ROW),
        "{not json",
        json.dumps({**GOOD_ROW, "post_id": "a2", "likes": -4}),
        json.dumps({k: v for k, v in GOOD_ROW.items() if k != "text"} | {"post_id": "a3"}),
        json.dumps({**GOOD_ROW, "post_id": "a1"}),  # duplicate id
        json.dumps({**GOOD_ROW, "post_id": "a4", "bias_labels": ["Weather"]}),
        json.dumps({**GOOD_ROW, "post_id": "a5", "timestamp": "yesterday"}),
    ]
    p = tmp_path / "corpus.jsonl"
    p.write_text("\n".join(rows) + "\n", encoding="utf-8")
    result = load_corpus(p)
    assert [r.post_id for r in result.records] == ["a1"]
    assert [r.line for r in result.rejects] == [2, 3, 4, 5, 6, 7]
    reasons = " | ".join(r.reason for r in result.rejects)
    assert "duplicate post_id" in reasons
    assert "unknown bias label" in reasons


def test_load_jsonlines_bias_label_forms(tmp_path):
    p = tmp_path / "corpus.jsonl"
    write_jsonl(
        p,
        [
            {**GOOD_ROW, "bias_labels": ["Holiday", "Discount"]},
            {**GOOD_ROW, "post_id": "a2", "bias_labels": "HumanPresence;AnimalPresence"},
            {**GOOD_ROW, "post_id": "a3"},
        ],
    )
    result = load_corpus(p)
    assert result.records[0].external_bias_labels == frozenset({"Holiday", "Discount"})
    assert result.records[1].external_bias_labels == frozenset(
        {"HumanPresence", "AnimalPresence"}
    )
    assert result.records[2].external_bias_labels == frozenset()


def test_load_csv_round_trip(tmp_path):
    p = tmp_path / "corpus.csv"
    p.write_text(
        "post_id,page_id,image,likes,retweets,timestamp,text,bias_labels,followers\n"
        'a1,pg1,images/a1.png,10,3,2024-03-01T10:00:00Z,"big sale",Discount;Holiday,500\n'
        "a2,pg1,images/a2.png,7,0,2024-03-02T10:00:00Z,plain photo,,\n",
        encoding="utf-8",
    )
    result = load_corpus(p, format="csv")
    assert not result.rejects
    assert result.records[0].external_bias_labels == frozenset({"Discount", "Holiday"})
    assert result.records[0].followers == 500
    assert result.records[1].followers is None


def test_load_corpus_input_validation(tmp_path):
    with pytest.raises(ValueError):
        load_corpus(tmp_path / "x.jsonl", format="parquet")
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path / "missing.jsonl")


# ---------------------------------------------------------------------------
# Corpus-level scoring


def test_score_corpus_normalizes_within_each_page():
    records = [
        make_record("a1", "pg1", likes=10, retweets=0),
        make_record("a2", "pg1", likes=20, retweets=0),
        make_record("b1", "pg2", likes=1000, retweets=0),
        make_record("b2", "pg2", likes=3000, retweets=0),
        make_record("b3", "pg2", likes=2000, retweets=0),
    ]
    scored, pages = score_corpus(records)
    assert set(pages) == {"pg1", "pg2"}
    by_id = {sp.post.post_id: sp for sp in scored}
    assert by_id["a1"].epsilon == 10
    assert by_id["a1"].epsilon_n == pytest.approx(-1.0)
    assert by_id["a2"].epsilon_n == pytest.approx(1.0)
    # same z-scores despite a 100x raw scale difference
    assert by_id["b1"].epsilon_n == pytest.approx(-np.sqrt(1.5))
    assert by_id["b3"].epsilon_n == pytest.approx(0.0)


def test_score_corpus_drops_degenerate_pages():
    records = [
        make_record("a1", "pg1", likes=10),
        make_record("a2", "pg1", likes=20),
        make_record("solo", "pg2", likes=5),
        make_record("f1", "pg3", likes=9),
        make_record("f2", "pg3", likes=9),
    ]
    scored, pages = score_corpus(records)
    assert set(pages) == {"pg1"}
    assert {sp.post.post_id for sp in scored} == {"a1", "a2"}


def test_training_score_prefers_debiased():
    sp = score_corpus([make_record("a1", likes=1), make_record("a2", likes=9)])[0][0]
    assert sp.training_score == sp.epsilon_n
    sp.epsilon_nt = 0.25
    assert sp.training_score == 0.25


def test_page_correlation_report():
    rng = np.random.default_rng(5)
    pages = []
    for i in range(8):
        followers = 1000 * (i + 1)
        # engagement grows with followers, with noise
        scores = rng.normal(loc=followers * 0.01, scale=2.0, size=30)
        pages.append((followers, scores.tolist()))
    report = page_correlation_report(pages)
    assert report.pearson > 0.9
    assert report.spearman > 0.9
    assert len(report.pages) == 8
    assert report.pages[0]["followers"] == 1000
    with pytest.raises(InsufficientData):
        page_correlation_report(pages[:2])
