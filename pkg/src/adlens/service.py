"""HTTP service over a trained model and feature registry.

Stateless JSON endpoints: score an uploaded image, run what-if feature
perturbations, request bounded tuning suggestions, and expose the registry
manifest. Artifacts are loaded once at startup and never mutated; a model
whose registry hash disagrees with the manifest is refused up front.
"""

from __future__ import annotations

import base64
import binascii
import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .aesthetics.features import FeatureRegistry, FeatureVector, extract_features, load_registry_manifest
from .aesthetics.image import decode_image
from .config import TunerOptions
from .errors import (
    AdlensError,
    BudgetExceeded,
    DecodeError,
    RegistryMismatch,
    UnknownFeature,
    UnsupportedFormat,
)
from .model import EngagementModel, load_model, predict
from .tuner import TunerParams, suggest, suggestion_to_json, whatif

log = logging.getLogger(__name__)

_STATUS_CODES = {
    "unknown_feature": 422,
    "missing_feature": 422,
    "budget_exceeded": 422,
    "bad_image": 400,
    "bad_request": 422,
    "registry_mismatch": 409,
}


class ServiceError(Exception):
    """Request-level failure with a stable error code."""

    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def _error_response(code: str, detail: str) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_CODES.get(code, 400),
        content={"error": code, "detail": detail},
    )


class ScoreRequest(BaseModel):
    image: str  # base64-encoded image bytes


class WhatIfRequest(BaseModel):
    features: dict[str, float]
    deltas: dict[str, float]


class TuneRequest(BaseModel):
    image: str | None = None
    features: dict[str, float] | None = None
    k: int | None = None
    s: float | None = None
    t: float | None = None


def load_service_artifacts(artifact_dir: str | Path) -> tuple[EngagementModel, FeatureRegistry]:
    """Load model + registry, failing fast on a hash mismatch."""
    directory = Path(artifact_dir)
    registry = load_registry_manifest(directory / "registry.json")
    model = load_model(directory / "model.json")
    if model.registry_hash and model.registry_hash != registry.hash:
        raise RegistryMismatch(
            f"model was trained under registry {model.registry_hash[:12]}..., "
            f"manifest is {registry.hash[:12]}..."
        )
    return model, registry


def _decode_b64_image(data: str):
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ServiceError("bad_image", f"invalid base64 payload: {exc}") from exc
    try:
        return decode_image(raw)
    except (UnsupportedFormat, DecodeError) as exc:
        raise ServiceError("bad_image", str(exc)) from exc


def _vector_from_mapping(features: dict[str, float], registry: FeatureRegistry) -> FeatureVector:
    known = set(registry.ids)
    unknown = sorted(set(features) - known)
    if unknown:
        raise UnknownFeature(f"unknown feature id: {', '.join(unknown)}")
    missing = sorted(known - set(features))
    if missing:
        raise ServiceError(
            "missing_feature", f"feature id(s) absent from request: {', '.join(missing)}"
        )
    values = np.array([float(features[fid]) for fid in registry.ids])
    if not np.all(np.isfinite(values)):
        raise ServiceError("bad_request", "feature values must be finite")
    return FeatureVector(registry_hash=registry.hash, values=values)


def create_app(
    model: EngagementModel,
    registry: FeatureRegistry,
    tuner_defaults: TunerOptions | None = None,
    seed: int = 42,
) -> FastAPI:
    """Build the service over already-loaded artifacts."""
    if model.registry_hash and model.registry_hash != registry.hash:
        raise RegistryMismatch("model and registry artifacts disagree")
    defaults = tuner_defaults if tuner_defaults is not None else TunerOptions()
    manifest = {
        "hash": registry.hash,
        "features": [
            {
                "id": d.id,
                "family": d.family,
                "human_name": d.human_name,
                "tunable": d.tunable,
                "lower": d.lower,
                "upper": d.upper,
            }
            for d in registry
        ],
    }

    app = FastAPI(title="adlens", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return _error_response(exc.code, exc.detail)

    @app.exception_handler(UnknownFeature)
    async def _unknown_feature(_req: Request, exc: UnknownFeature):
        return _error_response("unknown_feature", str(exc))

    @app.exception_handler(BudgetExceeded)
    async def _budget(_req: Request, exc: BudgetExceeded):
        return _error_response("budget_exceeded", str(exc))

    @app.exception_handler(AdlensError)
    async def _domain_error(_req: Request, exc: AdlensError):
        return _error_response("bad_request", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation(_req: Request, exc: RequestValidationError):
        return _error_response("bad_request", str(exc))

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.get("/v1/registry")
    async def get_registry():
        return manifest

    @app.post("/v1/score")
    async def score(req: ScoreRequest):
        img = _decode_b64_image(req.image)
        vec = extract_features(img, registry, seed=seed)
        predicted = float(predict(model, vec))
        return {"features": vec.as_dict(registry), "predicted": predicted}

    @app.post("/v1/whatif")
    async def what_if(req: WhatIfRequest):
        vec = _vector_from_mapping(req.features, registry)
        predicted, adjusted = whatif(model, vec, req.deltas, registry)
        return {"predicted": predicted, "adjusted": adjusted.as_dict(registry)}

    @app.post("/v1/tune")
    async def tune(req: TuneRequest):
        if (req.image is None) == (req.features is None):
            raise ServiceError("bad_request", "provide exactly one of image or features")
        if req.image is not None:
            img = _decode_b64_image(req.image)
            vec = extract_features(img, registry, seed=seed)
        else:
            vec = _vector_from_mapping(req.features, registry)
        try:
            params = TunerParams(
                k=req.k if req.k is not None else defaults.k,
                s=req.s if req.s is not None else defaults.s,
                t=req.t if req.t is not None else defaults.t,
                budget=defaults.budget,
            )
        except ValueError as exc:
            raise ServiceError("bad_request", str(exc)) from exc
        suggestion = suggest(model, vec, params, registry)
        return suggestion_to_json(suggestion)

    return app


def create_app_from_artifacts(
    artifact_dir: str | Path,
    tuner_defaults: TunerOptions | None = None,
    seed: int = 42,
) -> FastAPI:
    model, registry = load_service_artifacts(artifact_dir)
    return create_app(model, registry, tuner_defaults=tuner_defaults, seed=seed)
