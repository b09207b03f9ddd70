"""End-to-end pipeline tests: artifact layout, stage cuts, failure status,
and byte-identical reruns."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from adlens.errors import StageFailure
from adlens.pipeline import STAGE_CUTS, STAGES, run_pipeline
from conftest import config_for


def read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def doctored_corpus(small_corpus, tmp_path: Path, mutate) -> Path:
    """Copy the small corpus jsonl through a per-row mutation."""
    corpus_dir, _ = small_corpus
    rows = [
        json.loads(line)
        for line in (corpus_dir / "corpus.jsonl").read_text().splitlines()
        if line.strip()
    ]
    out = tmp_path / "corpus.jsonl"
    out.write_text("\n".join(json.dumps(mutate(dict(r))) for r in rows) + "\n")
    return out


class TestFullRun:
    def test_artifact_layout(self, small_pipeline):
        _, result = small_pipeline
        store = result.store
        for path in (
            store.rejects_path,
            store.summary_path,
            store.registry_path,
            store.features_path,
            store.model_path,
            store.evaluation_path,
            store.status_path,
        ):
            assert path.exists(), path
        assert read_json(store.status_path) == {"state": "complete", "stage": "evaluate"}

    def test_report_covers_every_stage(self, small_pipeline):
        _, result = small_pipeline
        assert set(result.report["stages"]) == set(STAGES)
        assert result.report["seed"] == 7
        assert result.report["registry_hash"] == read_json(result.store.registry_path)["hash"]

    def test_ingest_and_normalize_counts(self, small_pipeline):
        _, result = small_pipeline
        stages = result.report["stages"]
        assert stages["ingest"]["records"] == 60
        assert stages["ingest"]["rejects"] == 0
        assert stages["normalize"]["pages"] == 5
        assert (
            stages["normalize"]["posts"] + stages["normalize"]["excluded_posts"]
            == stages["ingest"]["records"]
        )

    def test_page_summary_artifact(self, small_pipeline):
        _, result = small_pipeline
        summary = read_json(result.store.summary_path)
        assert set(summary) == {"ingest", "normalize", "pages"}
        assert len(summary["pages"]) == 5
        for stats in summary["pages"].values():
            assert stats["n_posts"] >= 2
            assert stats["sigma"] > 0

    def test_debias_transforms_written_and_improving(self, small_pipeline):
        _, result = small_pipeline
        info = result.report["stages"]["debias"]
        assert info["enabled"] is True
        assert info["transforms"], "expected at least one fitted transform"
        for kind, entry in info["transforms"].items():
            assert entry["final_kl"] <= entry["initial_kl"] + 1e-12
            payload = read_json(result.store.transform_path(kind))
            assert set(payload) == {
                "bias", "degree", "W", "shift", "scale", "initial_kl", "final_kl",
            }
            assert payload["bias"] == kind

    def test_feature_csv_matches_training_count(self, small_pipeline):
        _, result = small_pipeline
        stages = result.report["stages"]
        n_rows = len(
            [l for l in result.store.features_path.read_text().splitlines() if l.strip()]
        )
        assert n_rows - 1 == stages["features"]["extracted"]  # header line
        assert stages["train"]["n_train"] == stages["features"]["extracted"]
        assert stages["train"]["converged"] is True

    def test_evaluation_artifact_mirrors_report(self, small_pipeline):
        _, result = small_pipeline
        payload = read_json(result.store.evaluation_path)
        assert payload == result.report
        ev = payload["stages"]["evaluate"]
        assert ev["svr_rmse_test"] >= 0
        assert ev["n_test"] >= 1
        assert len(ev["top_features"]) == 5


class TestStageCuts:
    def test_cut_table_targets_real_stages(self):
        assert set(STAGE_CUTS.values()) <= set(STAGES)
        assert STAGE_CUTS["ingest"] == "normalize"

    def test_until_normalize_stops_early(self, small_corpus, tmp_path):
        corpus_dir, _ = small_corpus
        cfg = config_for(corpus_dir, tmp_path / "artifacts")
        result = run_pipeline(cfg, until="normalize")
        assert set(result.report["stages"]) == {"ingest", "normalize"}
        store = result.store
        assert read_json(store.status_path) == {"state": "complete", "stage": "normalize"}
        assert store.summary_path.exists()
        assert not store.features_path.exists()
        assert not store.model_path.exists()

    def test_until_debias_skips_feature_extraction(self, small_corpus, tmp_path):
        corpus_dir, _ = small_corpus
        cfg = config_for(corpus_dir, tmp_path / "artifacts")
        result = run_pipeline(cfg, until="debias")
        assert set(result.report["stages"]) == {"ingest", "normalize", "bias_label", "debias"}
        assert not result.store.features_path.exists()

    def test_unknown_stage_rejected(self, small_corpus, tmp_path):
        corpus_dir, _ = small_corpus
        cfg = config_for(corpus_dir, tmp_path / "artifacts")
        with pytest.raises(ValueError, match="unknown stage"):
            run_pipeline(cfg, until="deploy")

    def test_debias_disabled_fits_nothing(self, small_corpus, tmp_path):
        corpus_dir, _ = small_corpus
        cfg = config_for(corpus_dir, tmp_path / "artifacts")
        cfg.debias.enabled = False
        result = run_pipeline(cfg, until="debias")
        info = result.report["stages"]["debias"]
        assert info == {"enabled": False, "transforms": {}}


class TestFailures:
    def test_bad_rows_land_in_rejects_file(self, small_corpus, tmp_path):
        corpus_dir, _ = small_corpus

        def spoil_first(row):
            if row["post_id"] == "p00_00":
                row["likes"] = -5
            return row

        corpus_path = doctored_corpus(small_corpus, tmp_path, spoil_first)
        cfg = config_for(corpus_dir, tmp_path / "artifacts")
        cfg.corpus_path = corpus_path
        result = run_pipeline(cfg, until="normalize")
        assert result.report["stages"]["ingest"]["rejects"] == 1
        lines = result.store.rejects_path.read_text().splitlines()
        assert len(lines) == 1
        assert "likes" in json.loads(lines[0])["reason"]

    def test_empty_corpus_fails_ingest_and_marks_stale(self, small_corpus, tmp_path):
        corpus_dir, _ = small_corpus
        empty = tmp_path / "corpus.jsonl"
        empty.write_text("")
        cfg = config_for(corpus_dir, tmp_path / "artifacts")
        cfg.corpus_path = empty
        with pytest.raises(StageFailure) as exc_info:
            run_pipeline(cfg)
        assert exc_info.value.stage == "ingest"
        status = read_json(tmp_path / "artifacts" / "status.json")
        assert status == {"state": "stale", "stage": "ingest"}

    def test_all_images_missing_fails_train_and_marks_stale(self, small_corpus, tmp_path):
        corpus_dir, _ = small_corpus

        def lose_image(row):
            row["image"] = "missing/" + row["image"]
            return row

        corpus_path = doctored_corpus(small_corpus, tmp_path, lose_image)
        cfg = config_for(corpus_dir, tmp_path / "artifacts")
        cfg.corpus_path = corpus_path
        with pytest.raises(StageFailure) as exc_info:
            run_pipeline(cfg)
        assert exc_info.value.stage == "train"
        status = read_json(tmp_path / "artifacts" / "status.json")
        assert status == {"state": "stale", "stage": "train"}
        # Every post was rejected at feature extraction, not silently dropped.
        features_header_only = (tmp_path / "artifacts" / "features.csv").read_text().splitlines()
        assert len([l for l in features_header_only if l.strip()]) == 1


class TestDeterminism:
    def test_rerun_is_byte_identical(self, small_corpus, small_pipeline, tmp_path):
        corpus_dir, _ = small_corpus
        _, first = small_pipeline
        cfg = config_for(corpus_dir, tmp_path / "artifacts")
        second = run_pipeline(cfg)

        first_files = {
            p.relative_to(first.store.dir): p
            for p in sorted(first.store.dir.rglob("*"))
            if p.is_file()
        }
        second_files = {
            p.relative_to(second.store.dir): p
            for p in sorted(second.store.dir.rglob("*"))
            if p.is_file()
        }
        assert set(first_files) == set(second_files)
        for rel, path in first_files.items():
            assert path.read_bytes() == second_files[rel].read_bytes(), rel
