"""Pipeline configuration: JSON file -> validated dataclasses."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError


@dataclass
class DebiasOptions:
    enabled: bool = True
    degree: int = 3
    auto_degree: bool = False
    n_bins: int = 50
    max_iters: int = 500
    tol: float = 1e-6

    def validate(self) -> None:
        if self.degree < 1:
            raise ConfigError("debias.degree must be >= 1")
        if self.n_bins < 2:
            raise ConfigError("debias.n_bins must be >= 2")
        if self.max_iters < 1:
            raise ConfigError("debias.max_iters must be >= 1")


@dataclass
class ModelOptions:
    c: float = 10.0
    epsilon: float = 0.1
    gamma: float | None = None
    tol: float = 1e-3
    grid: dict[str, list[float]] = field(default_factory=dict)
    cv_folds: int = 5

    def validate(self) -> None:
        if self.c <= 0:
            raise ConfigError("model.c must be positive")
        if self.epsilon < 0:
            raise ConfigError("model.epsilon must be >= 0")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError("model.gamma must be positive when set")


@dataclass
class TunerOptions:
    k: int = 2
    s: float = 24.0
    t: float = 4.0
    budget: int = 10_000_000

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError("tuner.k must be >= 1")
        if not 0 < self.t <= self.s:
            raise ConfigError("tuner requires 0 < t <= s")


@dataclass
class ServiceOptions:
    host: str = "127.0.0.1"
    port: int = 8423

    def validate(self) -> None:
        if not 0 < self.port < 65536:
            raise ConfigError("service.port out of range")


@dataclass
class PipelineConfig:
    corpus_path: Path
    lexicon_config_path: Path
    embedding_path: Path | None
    artifact_dir: Path
    corpus_format: str = "jsonlines"
    seed: int = 42
    expansion_m: int = 20
    segmentation_k: int = 6
    test_fraction: float = 0.3
    debias: DebiasOptions = field(default_factory=DebiasOptions)
    model: ModelOptions = field(default_factory=ModelOptions)
    tuner: TunerOptions = field(default_factory=TunerOptions)
    service: ServiceOptions = field(default_factory=ServiceOptions)

    def validate(self) -> None:
        if self.corpus_format not in ("jsonlines", "csv"):
            raise ConfigError(f"unknown corpus format {self.corpus_format!r}")
        if not self.corpus_path.exists():
            raise ConfigError(f"corpus file not found: {self.corpus_path}")
        if not self.lexicon_config_path.exists():
            raise ConfigError(f"lexicon config not found: {self.lexicon_config_path}")
        if self.embedding_path is not None and not self.embedding_path.exists():
            raise ConfigError(f"embedding file not found: {self.embedding_path}")
        if not 0.05 <= self.test_fraction <= 0.9:
            raise ConfigError("test_fraction must be in [0.05, 0.9]")
        if self.expansion_m < 0:
            raise ConfigError("expansion_m must be >= 0")
        if self.segmentation_k < 2:
            raise ConfigError("segmentation_k must be >= 2")
        self.debias.validate()
        self.model.validate()
        self.tuner.validate()
        self.service.validate()


def _take(obj: Mapping[str, Any], cls, **overrides):
    """Build a dataclass from a mapping, rejecting unknown keys."""
    names = {f for f in cls.__dataclass_fields__}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} option(s): {', '.join(sorted(unknown))}")
    kwargs = dict(obj)
    kwargs.update(overrides)
    return cls(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    """Read and validate a JSON pipeline config.

    Paths are resolved relative to the config file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    base = path.parent

    def respath(key: str, required: bool = True) -> Path | None:
        val = raw.pop(key, None)
        if val is None:
            if required:
                raise ConfigError(f"config missing required key {key!r}")
            return None
        return (base / str(val)).resolve() if not Path(str(val)).is_absolute() else Path(str(val))

    corpus_path = respath("corpus_path")
    lexicon_config_path = respath("lexicon_config_path")
    embedding_path = respath("embedding_path", required=False)
    artifact_dir = respath("artifact_dir")

    sections = {
        "debias": _take(raw.pop("debias", {}), DebiasOptions),
        "model": _take(raw.pop("model", {}), ModelOptions),
        "tuner": _take(raw.pop("tuner", {}), TunerOptions),
        "service": _take(raw.pop("service", {}), ServiceOptions),
    }
    simple = {}
    for key in ("corpus_format", "seed", "expansion_m", "segmentation_k", "test_fraction"):
        if key in raw:
            simple[key] = raw.pop(key)
    if raw:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(raw))}")

    cfg = PipelineConfig(
        corpus_path=corpus_path,
        lexicon_config_path=lexicon_config_path,
        embedding_path=embedding_path,
        artifact_dir=artifact_dir,
        **simple,
        **sections,
    )
    cfg.validate()
    return cfg
