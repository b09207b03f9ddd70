"""Procedural test corpus: images with planted feature structure.

Generates small PNG posts whose "true" aesthetic score is an exact linear
function of five catalog features, then injects engagement bias effects
(holiday/discount text, external human/animal labels) so the debiasing
pipeline has something real to undo. Every construction detail is chosen
so a planted feature maps to exactly one generator knob:

  * contrast   — value gap between the top and bottom halves (mean kept)
  * saturation — uniform saturation outside the fixed central ninth
  * texture    — 2 px value checkerboard (Haar energy exactly at level 2)
               plus a 4 px square wave (exactly level 3) driving the
               depth-of-field bands
  * size       — rendered side length varies, all multiples of 8
  * hue count  — 60-degree-spaced hue stripes
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from .aesthetics.features import FeatureRegistry, default_registry, extract_features
from .aesthetics.image import buffer_from_rgb, hsv_to_rgb

IMAGE_SIZE = 96  # divisible by 16, so halves and wavelet levels align
IMAGE_SIZES = (80, 96, 112, 128, 144)  # multiples of 16: size//2 stays 8-aligned

PLANTED_FEATURES = (
    ("ke_contrast", 0.30),
    ("color_mean_saturation", 0.24),
    ("size_sum", 0.22),
    ("wavelet_value_l2", 0.16),
    ("ke_hue_count", 0.08),
)

# Per-kind engagement boosts applied to the true score z as gamma*z + delta.
# Small gamma means a biased post's engagement is driven by the bias, not
# by its aesthetics; the staggered additive deltas drop boosted posts into
# quartiles that conflict with unbiased posts of the same true score, which
# is what makes skipping the debias stage costly.
BIAS_BOOSTS = {
    "HumanPresence": (0.35, 2.6),
    "AnimalPresence": (0.30, 2.1),
    "Holiday": (0.30, 1.6),
    "Discount": (0.35, 1.1),
}

DISCOUNT_SEEDS = ("free", "discount", "sale", "offer")
HOLIDAY_SEED = "christmas"

# Words that never collide with the discount/holiday lexicons or their
# embedding expansions (the embedding vocabulary is disjoint from these).
_NEUTRAL_WORDS = (
    "studio shot of the latest collection",
    "behind the scenes at the workshop",
    "our team put this together yesterday",
    "another look from the archive",
    "fresh from the drawing board",
    "a quiet moment from the field",
    "details we keep coming back to",
    "prototype photos from the bench",
)

_DISCOUNT_TEMPLATES = (
    "big {w} on everything this week",
    "weekend {w} you should not miss",
    "grab the {w} while it lasts",
)

_HOLIDAY_TEMPLATES = (
    "merry christmas from all of us",
    "christmas wishes and warm lights",
    "counting down to christmas together",
)


@dataclass
class SynthConfig:
    out_dir: Path
    n_pages: int = 25
    posts_per_page: int = 24
    bias_fraction: float = 0.45
    seed: int = 42


@dataclass
class SynthTruth:
    """Ground truth kept outside the pipeline's inputs, for assertions."""

    planted: dict[str, float]
    z: dict[str, float]  # post_id -> true aesthetic score
    bias: dict[str, str | None]  # post_id -> bias kind or None
    knobs: dict[str, dict[str, float]] = field(default_factory=dict)


def _stripe_bounds(size: int, n: int) -> list[int]:
    """Column boundaries for n stripes, snapped to 8 px multiples.

    Alignment matters: value/hue/saturation steps that sit on 8 px
    boundaries contribute exactly zero energy to a 3-level Haar transform,
    so stripe edges stay out of the wavelet features.
    """
    nb = size // 8
    bounds = [0]
    for i in range(1, n):
        bounds.append(max(bounds[-1] + 1, round(nb * i / n)))
    bounds.append(nb)
    return [8 * b for b in bounds]


def render_image(
    hue0: float,
    n_hues: int,
    saturation: float,
    contrast: float,
    checker_amp: float,
    dof_amp: float,
    size: int = IMAGE_SIZE,
    sat_jitter: np.ndarray | None = None,
) -> np.ndarray:
    """One procedural post image as an RGB float array in [0, 1].

    Every structural edge (stripes, central square, texture bands) is
    snapped to 8 px so the only wavelet detail energy comes from the
    planted textures themselves.
    """
    h = np.zeros((size, size))
    s = np.full((size, size), saturation)
    v = np.full((size, size), 0.55)

    # Hue stripes, 60 degrees apart so each lands in its own 20-degree bin.
    # Per-stripe saturation jitter keeps segment-level saturation from
    # being an exact copy of the image mean.
    bounds = _stripe_bounds(size, n_hues)
    for i in range(n_hues):
        cols = slice(bounds[i], bounds[i + 1])
        h[:, cols] = (hue0 + 60.0 * i) % 360.0
        if sat_jitter is not None:
            s[:, cols] = np.clip(saturation + sat_jitter[i], 0.05, 1.0)

    # Value halves: mean-preserving contrast (size is even and 8-aligned).
    v[: size // 2, :] -= contrast / 2.0
    v[size // 2 :, :] += contrast / 2.0

    # Fixed central square covering the middle ninth (8-aligned bounds):
    # anchors the rule-of-thirds features to constants.
    lo = (size // 3) // 8 * 8
    hi = (2 * size // 3 + 7) // 8 * 8
    ctr = slice(lo, hi)
    h[ctr, ctr] = hue0
    s[ctr, ctr] = 0.5
    v[ctr, ctr] = 0.55

    # 2 px checkerboard on value: all of its Haar energy sits at level 2.
    yy, xx = np.indices((size, size))
    checker = np.where(((yy // 2) + (xx // 2)) % 2 == 0, 1.0, -1.0)
    v += checker_amp * checker

    # 4 px vertical square waves (all of their energy sits at level 3): an
    # 8-aligned band inside the central 25% region scaled by dof_amp, plus
    # a fixed top band outside it so the depth-of-field ratio stays off 0/1.
    wave = np.where((xx // 4) % 2 == 0, 1.0, -1.0)
    edge = (size // 4 + 7) // 8 * 8
    for rows, amp in ((slice(edge, edge + 8), dof_amp), (slice(0, 8), 0.015)):
        v[rows, edge : size - edge] += amp * wave[rows, edge : size - edge]

    hsv = np.stack([(h % 360.0) / 360.0, s, np.clip(v, 0.0, 1.0)], axis=-1)
    return hsv_to_rgb(hsv)


def _save_png(rgb: np.ndarray, path: Path) -> None:
    arr = np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def _write_embeddings(path: Path, rng: np.random.Generator) -> None:
    """A small vector file whose neighborhoods mirror the seed lexicons."""
    dim = 16
    clusters = {
        "discount": (DISCOUNT_SEEDS, ("deal", "promo", "bargain", "coupon", "clearance")),
        "holiday": ((HOLIDAY_SEED,), ("festive", "xmas", "yuletide", "noel")),
    }
    lines = []
    for ci, (name, (seeds, friends)) in enumerate(sorted(clusters.items())):
        center = np.zeros(dim)
        center[ci] = 5.0
        for word in (*seeds, *friends):
            vec = center + rng.normal(0.0, 0.05, size=dim)
            lines.append(word + " " + " ".join(f"{x:.6f}" for x in vec))
    for i in range(40):  # unrelated filler vocabulary, far from both clusters
        vec = rng.normal(0.0, 1.0, size=dim)
        vec[:2] -= 4.0
        lines.append(f"filler{i:02d} " + " ".join(f"{x:.6f}" for x in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_lexicons(path: Path) -> None:
    # Cross-cluster stoplists keep each expansion from swallowing the other
    # lexicon's vocabulary (which would manufacture multi-bias posts).
    holiday_words = [HOLIDAY_SEED, "festive", "xmas", "yuletide", "noel"]
    discount_words = [*DISCOUNT_SEEDS, "deal", "promo", "bargain", "coupon", "clearance"]
    payload = [
        {"kind": "Discount", "seeds": list(DISCOUNT_SEEDS), "stoplist": holiday_words},
        {
            "kind": "Holiday",
            "seeds": [HOLIDAY_SEED],
            "stoplist": discount_words,
            "holidays": [
                {"name": "Christmas", "date": "12-25", "pre_days": 7, "post_days": 7}
            ],
        },
    ]
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _timestamp(rng: np.random.Generator, holiday: bool) -> str:
    if holiday:
        base = datetime(2024, 12, 18, 12, 0, tzinfo=timezone.utc)
        day = int(rng.integers(0, 13))
    else:
        base = datetime(2024, 3, 1, 12, 0, tzinfo=timezone.utc)
        day = int(rng.integers(0, 120))
    return (base + timedelta(days=day)).strftime("%Y-%m-%dT%H:%M:%SZ")


def _text_for(kind: str | None, rng: np.random.Generator) -> str:
    if kind == "Discount":
        template = _DISCOUNT_TEMPLATES[int(rng.integers(len(_DISCOUNT_TEMPLATES)))]
        return template.format(w=DISCOUNT_SEEDS[int(rng.integers(len(DISCOUNT_SEEDS)))])
    if kind == "Holiday":
        return _HOLIDAY_TEMPLATES[int(rng.integers(len(_HOLIDAY_TEMPLATES)))]
    return _NEUTRAL_WORDS[int(rng.integers(len(_NEUTRAL_WORDS)))]


def generate_corpus(
    cfg: SynthConfig, registry: FeatureRegistry | None = None
) -> SynthTruth:
    """Render images, plant scores, inject biases, and write corpus files.

    Writes into cfg.out_dir: images/*.png, corpus.jsonl, embeddings.txt,
    lexicons.json, and truth.json (ground truth for assertions only — the
    pipeline never reads it).
    """
    registry = registry if registry is not None else default_registry()
    rng = np.random.default_rng(cfg.seed)
    out = Path(cfg.out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    n_total = cfg.n_pages * cfg.posts_per_page
    post_ids = [
        f"p{p:02d}_{i:02d}" for p in range(cfg.n_pages) for i in range(cfg.posts_per_page)
    ]

    # Render every image and extract the planted feature values.
    knobs: dict[str, dict[str, float]] = {}
    planted_ids = [fid for fid, _ in PLANTED_FEATURES]
    planted_vals = np.zeros((n_total, len(planted_ids)))
    for idx, pid in enumerate(post_ids):
        kn = {
            "hue0": float(rng.uniform(0.0, 360.0)),
            "n_hues": int(rng.integers(1, 7)),
            "saturation": float(rng.uniform(0.25, 0.9)),
            "contrast": float(rng.uniform(0.08, 0.4)),
            "checker_amp": float(rng.uniform(0.005, 0.05)),
            "dof_amp": float(rng.uniform(0.0, 0.06)),
            "size": int(IMAGE_SIZES[int(rng.integers(len(IMAGE_SIZES)))]),
        }
        sat_jitter = rng.uniform(-0.12, 0.12, size=kn["n_hues"])
        knobs[pid] = kn
        rgb = render_image(
            kn["hue0"],
            kn["n_hues"],
            kn["saturation"],
            kn["contrast"],
            kn["checker_amp"],
            kn["dof_amp"],
            size=kn["size"],
            sat_jitter=sat_jitter,
        )
        _save_png(rgb, out / "images" / f"{pid}.png")
        vec = extract_features(buffer_from_rgb(rgb), registry)
        vals = vec.as_dict(registry)
        planted_vals[idx] = [vals[fid] for fid in planted_ids]

    # True score: exact linear function of the standardized planted features.
    mu = planted_vals.mean(axis=0)
    sd = planted_vals.std(axis=0)
    std_vals = (planted_vals - mu) / np.maximum(sd, 1e-12)
    weights = np.array([w for _, w in PLANTED_FEATURES])
    z_raw = std_vals @ weights
    z = (z_raw - z_raw.mean()) / z_raw.std()

    # Random page composition, bias assignment, and engagement synthesis.
    order = rng.permutation(n_total)
    kinds_cycle = sorted(BIAS_BOOSTS)
    bias_of: dict[str, str | None] = {pid: None for pid in post_ids}
    rows = []
    truth_z: dict[str, float] = {}
    for page in range(cfg.n_pages):
        page_id = f"page{page:02d}"
        members = order[page * cfg.posts_per_page : (page + 1) * cfg.posts_per_page]
        mu_p = float(rng.uniform(20000.0, 60000.0))
        sigma_p = mu_p / 10.0
        followers = int(mu_p * rng.uniform(2.0, 3.0))
        n_biased = int(round(cfg.bias_fraction * len(members)))
        biased_slots = rng.choice(len(members), size=n_biased, replace=False)
        kind_order = rng.permutation(len(kinds_cycle))
        for slot, member in enumerate(members):
            pid = post_ids[member]
            kind: str | None = None
            if slot in biased_slots:
                kind = kinds_cycle[kind_order[list(biased_slots).index(slot) % 4]]
            bias_of[pid] = kind
            v = z[member]
            if kind is not None:
                gamma, delta = BIAS_BOOSTS[kind]
                v = gamma * v + delta
            eps = max(int(round(mu_p + sigma_p * v)), 1)
            likes = int(round(eps * 0.8))
            rows.append(
                {
                    "post_id": pid,
                    "page_id": page_id,
                    "image": f"images/{pid}.png",
                    "likes": likes,
                    "retweets": eps - likes,
                    "timestamp": _timestamp(rng, holiday=(kind == "Holiday")),
                    "text": _text_for(kind, rng),
                    "bias_labels": [kind] if kind in ("HumanPresence", "AnimalPresence") else [],
                    "followers": followers,
                }
            )
            truth_z[pid] = float(z[member])

    rows.sort(key=lambda r: r["post_id"])
    with (out / "corpus.jsonl").open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _write_embeddings(out / "embeddings.txt", rng)
    _write_lexicons(out / "lexicons.json")

    truth = SynthTruth(
        planted={fid: w for fid, w in PLANTED_FEATURES},
        z=truth_z,
        bias=bias_of,
        knobs=knobs,
    )
    (out / "truth.json").write_text(
        json.dumps(
            {"planted": truth.planted, "z": truth.z, "bias": truth.bias, "knobs": truth.knobs},
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return truth
