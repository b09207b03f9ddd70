"""The end-to-end pipeline: ingest -> normalize -> label -> debias ->
features -> train -> evaluate, with artifact persistence.

Every stage is deterministic given the config seed, and artifacts are
written with sorted keys and stable float formatting so identical runs
produce byte-identical files. A status artifact marks partial output as
stale when a stage fails.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import biasdetect, corpus, debias
from .aesthetics.features import (
    FeatureRegistry,
    FeatureVector,
    default_registry,
    extract_features,
    write_feature_csv,
    write_registry_manifest,
)
from .aesthetics.image import decode_image
from .config import PipelineConfig
from .errors import AdlensError, DecodeError, StageFailure, TooFewScores, UnsupportedFormat
from .model import (
    evaluate as model_evaluate,
    linear_significance,
    predict,
    quartile_labels,
    save_model,
    train_svc,
    train_svr,
)

log = logging.getLogger(__name__)

STAGES = ("ingest", "normalize", "bias_label", "debias", "features", "train", "evaluate")
# CLI subcommand -> last stage to run.
STAGE_CUTS = {
    "ingest": "normalize",
    "debias": "debias",
    "features": "features",
    "train": "train",
    "evaluate": "evaluate",
}


class ArtifactStore:
    """Fixed artifact layout under one directory, with a status marker."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "transforms").mkdir(exist_ok=True)

    @property
    def rejects_path(self) -> Path:
        return self.dir / "rejects.jsonl"

    @property
    def summary_path(self) -> Path:
        return self.dir / "corpus_summary.json"

    @property
    def registry_path(self) -> Path:
        return self.dir / "registry.json"

    @property
    def features_path(self) -> Path:
        return self.dir / "features.csv"

    @property
    def model_path(self) -> Path:
        return self.dir / "model.json"

    @property
    def evaluation_path(self) -> Path:
        return self.dir / "evaluation.json"

    @property
    def status_path(self) -> Path:
        return self.dir / "status.json"

    def transform_path(self, bias: str) -> Path:
        return self.dir / "transforms" / f"{bias}.json"

    def write_json(self, path: Path, payload) -> None:
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    def set_status(self, state: str, stage: str | None = None) -> None:
        payload = {"state": state}
        if stage is not None:
            payload["stage"] = stage
        self.write_json(self.status_path, payload)


@dataclass
class PipelineResult:
    report: dict
    store: ArtifactStore


def _run_stage(store: ArtifactStore, name: str, fn, *args, **kwargs):
    store.set_status("running", stage=name)
    try:
        return fn(*args, **kwargs)
    except AdlensError as exc:
        store.set_status("stale", stage=name)
        raise StageFailure(name, exc) from exc
    except Exception as exc:  # pragma: no cover - defensive
        store.set_status("stale", stage=name)
        raise StageFailure(name, exc) from exc


def _stage_features(
    scored: Sequence[corpus.ScoredPost],
    corpus_dir: Path,
    registry: FeatureRegistry,
    seg_seed: int,
) -> tuple[dict[str, FeatureVector], list[dict]]:
    """Extract features for every post; unreadable images become rejects."""
    vectors: dict[str, FeatureVector] = {}
    rejects: list[dict] = []
    for sp in scored:
        image_path = corpus_dir / sp.post.image_path
        try:
            buf = decode_image(image_path)
            vectors[sp.post.post_id] = extract_features(buf, registry, seed=seg_seed)
        except (DecodeError, UnsupportedFormat) as exc:
            log.warning("skipping %s: %s", sp.post.post_id, exc)
            rejects.append({"post_id": sp.post.post_id, "reason": str(exc)})
    return vectors, rejects


def run_pipeline(config: PipelineConfig, until: str = "evaluate") -> PipelineResult:
    """Execute pipeline stages through `until` (inclusive), persisting
    artifacts along the way. Raises StageFailure with the failing stage."""
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}")
    config.validate()
    store = ArtifactStore(config.artifact_dir)
    cut = STAGES.index(until)
    report: dict = {"seed": config.seed, "stages": {}}

    # ingest
    loaded = _run_stage(
        store, "ingest", corpus.load_corpus, config.corpus_path, config.corpus_format
    )
    corpus.write_rejects(loaded.rejects, store.rejects_path)
    report["stages"]["ingest"] = {
        "records": len(loaded.records),
        "rejects": len(loaded.rejects),
    }
    if not loaded.records:
        store.set_status("stale", stage="ingest")
        raise StageFailure("ingest", TooFewScores("no admissible corpus rows"))

    # normalize
    scored, pages = _run_stage(store, "normalize", corpus.score_corpus, loaded.records)
    report["stages"]["normalize"] = {
        "posts": len(scored),
        "pages": len(pages),
        "excluded_posts": len(loaded.records) - len(scored),
    }
    store.write_json(
        store.summary_path,
        {
            "ingest": report["stages"]["ingest"],
            "normalize": report["stages"]["normalize"],
            "pages": {
                pid: {"mu": ps.mu, "sigma": ps.sigma, "n_posts": ps.n_posts}
                for pid, ps in sorted(pages.items())
            },
        },
    )
    if STAGES.index("normalize") >= cut:
        store.set_status("complete", stage=until)
        return PipelineResult(report=report, store=store)

    # bias_label
    def _label():
        table = (
            biasdetect.load_embeddings(config.embedding_path)
            if config.embedding_path is not None
            else None
        )
        configs = biasdetect.load_lexicon_configs(config.lexicon_config_path)
        lexicons = biasdetect.build_lexicons(configs, table, m=config.expansion_m)
        return biasdetect.assign_bias_labels(scored, lexicons)

    labeled = _run_stage(store, "bias_label", _label)
    report["stages"]["bias_label"] = labeled.counts()

    # debias
    def _debias():
        info: dict[str, dict] = {}
        if not config.debias.enabled:
            return info
        unbiased_scores = [sp.epsilon_n for sp in labeled.unbiased]
        for kind in sorted(labeled.biased, key=lambda k: k.value):
            posts = labeled.biased[kind]
            scores_b = [sp.epsilon_n for sp in posts]
            if len(scores_b) < 2 or len(unbiased_scores) < 2:
                log.warning("debias: skipping %s (too few scores)", kind.value)
                continue
            if config.debias.auto_degree:
                transform, fit = debias.fit_transform_auto_degree(
                    unbiased_scores,
                    scores_b,
                    n_bins=config.debias.n_bins,
                    max_iters=config.debias.max_iters,
                    tol=config.debias.tol,
                )
            else:
                transform, fit = debias.fit_transform(
                    unbiased_scores,
                    scores_b,
                    degree=config.debias.degree,
                    n_bins=config.debias.n_bins,
                    max_iters=config.debias.max_iters,
                    tol=config.debias.tol,
                )
            debias.save_transform(transform, fit, kind.value, store.transform_path(kind.value))
            adjusted = debias.apply_transform(transform, scores_b)
            for sp, val in zip(posts, adjusted):
                sp.epsilon_nt = float(val)
            info[kind.value] = {
                "n": len(posts),
                "degree": transform.degree,
                "initial_kl": fit.initial_kl,
                "final_kl": fit.final_kl,
                "iterations": fit.iterations,
            }
        return info

    debias_info = _run_stage(store, "debias", _debias)
    report["stages"]["debias"] = {
        "enabled": config.debias.enabled,
        "transforms": debias_info,
    }
    if STAGES.index("debias") >= cut:
        store.set_status("complete", stage=until)
        return PipelineResult(report=report, store=store)

    # features (multi-bias posts are excluded from training entirely)
    registry = default_registry()
    usable = labeled.unbiased + [sp for kind in sorted(labeled.biased, key=lambda k: k.value) for sp in labeled.biased[kind]]
    usable.sort(key=lambda sp: sp.post.post_id)
    corpus_dir = config.corpus_path.parent
    vectors, feature_rejects = _run_stage(
        store, "features", _stage_features, usable, corpus_dir, registry, config.seed
    )
    write_registry_manifest(registry, store.registry_path)
    write_feature_csv(
        [(pid, vectors[pid]) for pid in sorted(vectors)], registry, store.features_path
    )
    report["stages"]["features"] = {
        "extracted": len(vectors),
        "rejected_images": len(feature_rejects),
        "registry_hash": registry.hash,
    }
    if STAGES.index("features") >= cut:
        store.set_status("complete", stage=until)
        return PipelineResult(report=report, store=store)

    # train
    trainable = [sp for sp in usable if sp.post.post_id in vectors]
    if not trainable:
        store.set_status("stale", stage="train")
        raise StageFailure("train", TooFewScores("no feature vectors available for training"))
    x_all = np.stack([vectors[sp.post.post_id].values for sp in trainable])
    y_all = np.array([sp.training_score for sp in trainable])

    def _train():
        opts = config.model
        hp = {"c": opts.c, "epsilon": opts.epsilon, "gamma": opts.gamma}
        if opts.grid:
            from .model import cross_validated_grid_search

            hp.update(
                cross_validated_grid_search(
                    x_all, y_all, "svr", opts.grid, folds=opts.cv_folds, seed=config.seed
                )
            )
        model, rep = train_svr(
            x_all,
            y_all,
            c=hp["c"],
            epsilon=hp["epsilon"],
            gamma=hp.get("gamma"),
            tol=opts.tol,
            registry_hash=registry.hash,
            return_report=True,
        )
        return model, rep, hp

    model, train_report, used_hp = _run_stage(store, "train", _train)
    save_model(model, store.model_path)
    report["stages"]["train"] = {
        "n_train": len(trainable),
        "iterations": train_report.iterations,
        "kkt_violation": train_report.kkt_violation,
        "converged": train_report.converged,
        "n_support": train_report.n_support,
        "hyperparams": {k: v for k, v in used_hp.items() if v is not None},
    }
    if STAGES.index("train") >= cut:
        store.set_status("complete", stage=until)
        return PipelineResult(report=report, store=store)

    # evaluate
    def _evaluate():
        rng = np.random.default_rng(config.seed)
        ids = [sp.post.post_id for sp in trainable]
        perm = rng.permutation(len(ids))
        n_test = max(1, int(round(config.test_fraction * len(ids))))
        test_idx = set(perm[:n_test].tolist())
        train_idx = [i for i in range(len(ids)) if i not in test_idx]
        test_list = sorted(test_idx)

        preds_test = predict(model, x_all[test_list])
        rmse = float(np.sqrt(((preds_test - y_all[test_list]) ** 2).mean()))

        labeling = quartile_labels({ids[i]: float(y_all[i]) for i in range(len(ids))})
        cls_of = {pid: 1.0 for pid in labeling.successful_ids}
        cls_of.update({pid: -1.0 for pid in labeling.unsuccessful_ids})
        tr = [i for i in train_idx if ids[i] in cls_of]
        te = [i for i in test_list if ids[i] in cls_of]
        quartile = {}
        if tr and te and len({cls_of[ids[i]] for i in tr}) == 2:
            svc = train_svc(
                x_all[tr],
                np.array([cls_of[ids[i]] for i in tr]),
                c=config.model.c,
                tol=config.model.tol,
                registry_hash=registry.hash,
            )
            rep = model_evaluate(
                svc, x_all[te], np.array([cls_of[ids[i]] for i in te]), significance=False
            )
            quartile = {"accuracy": rep.accuracy, "confusion": rep.confusion,
                        "n_train": len(tr), "n_test": len(te)}
        else:
            log.warning("quartile evaluation skipped: empty class or split")

        top = linear_significance(x_all, y_all, "svr", top_n=5, registry=registry)
        return {
            "svr_rmse_test": rmse,
            "n_test": len(test_list),
            "quartile": quartile,
            "top_features": [{"feature": fid, "weight": w} for fid, w in top],
        }

    evaluation = _run_stage(store, "evaluate", _evaluate)
    report["stages"]["evaluate"] = evaluation
    full_report = {
        "seed": config.seed,
        "registry_hash": registry.hash,
        "stages": report["stages"],
    }
    store.write_json(store.evaluation_path, full_report)
    store.set_status("complete", stage="evaluate")
    return PipelineResult(report=full_report, store=store)
