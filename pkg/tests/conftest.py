"""Shared fixtures: a suite-wide KKT audit of every SMO solve, a small
procedural corpus with trained artifacts, and collection ordering that runs
the acceptance suite last (it reports after everything else is known-good).
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

import adlens.model as model_mod
from adlens.config import PipelineConfig
from adlens.model import kkt_gap
from adlens.pipeline import run_pipeline
from adlens.synth import SynthConfig, generate_corpus

# Every smo_solve call in the whole suite lands here: (n, tol, fresh KKT gap,
# converged). The acceptance suite asserts the log is non-empty and clean.
KKT_AUDIT_LOG: list[tuple[int, float, float, bool]] = []


@pytest.fixture(scope="session", autouse=True)
def _audit_every_smo_solve():
    """Re-derive the KKT gap of every solver result from scratch.

    The gradient is recomputed from (kmat, p, z, theta) rather than trusting
    the one the solver maintained incrementally, so a bookkeeping bug in the
    solver cannot hide its own violation.
    """
    original = model_mod.smo_solve

    def audited(kmat, p, z, c, tol=1e-3, max_iter=200_000):
        result = original(kmat, p, z, c, tol=tol, max_iter=max_iter)
        fresh = np.asarray(p, dtype=float) + z * (kmat @ (z * result.theta))
        gap, _, _ = kkt_gap(result.theta, fresh, z, c)
        KKT_AUDIT_LOG.append((int(np.size(p)), float(tol), float(gap), result.converged))
        assert gap < tol + 1e-9, (
            f"solver returned a KKT-violating solution: gap={gap:.3e} tol={tol:g}"
        )
        return result

    mp = pytest.MonkeyPatch()
    mp.setattr(model_mod, "smo_solve", audited)
    yield
    mp.undo()


@pytest.fixture(scope="session")
def kkt_audit_log():
    return KKT_AUDIT_LOG


def pytest_collection_modifyitems(config, items):
    items.sort(key=lambda item: item.path.name == "test_acceptance.py")


# ---------------------------------------------------------------------------
# Small procedural corpus + one full pipeline run, shared across test files.


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """60-post rendered corpus (5 pages x 12), with ground truth."""
    out = tmp_path_factory.mktemp("small_corpus")
    truth = generate_corpus(SynthConfig(out_dir=out, n_pages=5, posts_per_page=12, seed=7))
    return out, truth


def config_for(corpus_dir: Path, artifact_dir: Path, **overrides) -> PipelineConfig:
    cfg = PipelineConfig(
        corpus_path=corpus_dir / "corpus.jsonl",
        lexicon_config_path=corpus_dir / "lexicons.json",
        embedding_path=corpus_dir / "embeddings.txt",
        artifact_dir=artifact_dir,
        seed=7,
    )
    for key, val in overrides.items():
        setattr(cfg, key, val)
    cfg.validate()
    return cfg


def write_config_json(path: Path, cfg: PipelineConfig) -> Path:
    """Serialize a PipelineConfig back to the JSON shape load_config reads."""
    payload = {
        "corpus_path": str(cfg.corpus_path),
        "lexicon_config_path": str(cfg.lexicon_config_path),
        "artifact_dir": str(cfg.artifact_dir),
        "corpus_format": cfg.corpus_format,
        "seed": cfg.seed,
        "expansion_m": cfg.expansion_m,
        "segmentation_k": cfg.segmentation_k,
        "test_fraction": cfg.test_fraction,
        "debias": dataclasses.asdict(cfg.debias),
        "model": dataclasses.asdict(cfg.model),
        "tuner": dataclasses.asdict(cfg.tuner),
        "service": dataclasses.asdict(cfg.service),
    }
    if cfg.embedding_path is not None:
        payload["embedding_path"] = str(cfg.embedding_path)
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def small_pipeline(small_corpus, tmp_path_factory):
    """(config, PipelineResult) of a full run over the small corpus."""
    corpus_dir, _ = small_corpus
    artifact_dir = tmp_path_factory.mktemp("small_artifacts")
    cfg = config_for(corpus_dir, artifact_dir)
    result = run_pipeline(cfg)
    return cfg, result
