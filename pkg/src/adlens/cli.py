"""Command-line entry point.

Subcommands run the pipeline up to a stage (`ingest`, `debias`, `features`,
`train`, `evaluate`), tune a single image against a trained model (`tune`),
or serve the HTTP API (`serve`). Exit codes: 0 success, 2 configuration
error, 3 data error, 4 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .errors import AdlensError, StageFailure
from .pipeline import STAGE_CUTS, run_pipeline

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STAGE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adlens", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("ingest", "load and normalize the corpus; write rejects and summary"),
        ("debias", "additionally fit and apply per-bias score transforms"),
        ("features", "additionally extract image features"),
        ("train", "additionally train the engagement model"),
        ("evaluate", "run the full pipeline and write the evaluation report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config JSON")

    tune = sub.add_parser("tune", help="suggest bounded feature changes for one image")
    tune.add_argument("--config", required=True, help="pipeline config JSON (locates artifacts)")
    tune.add_argument("--image", required=True, help="image file to tune")
    tune.add_argument("--k", type=int, default=None, help="max features to change")
    tune.add_argument("--s", type=float, default=None, help="max percent change per feature")
    tune.add_argument("--t", type=float, default=None, help="percent step size")

    serve = sub.add_parser("serve", help="serve the HTTP API over trained artifacts")
    serve.add_argument("--config", required=True, help="pipeline config JSON")
    return parser


def _run_stage_command(args) -> int:
    config = load_config(args.config)
    result = run_pipeline(config, until=STAGE_CUTS[args.command])
    print(json.dumps(result.report, sort_keys=True, indent=2))
    return EXIT_OK


def _run_tune(args) -> int:
    from .aesthetics.features import extract_features
    from .aesthetics.image import decode_image
    from .service import load_service_artifacts
    from .tuner import TunerParams, suggest, suggestion_to_json

    config = load_config(args.config)
    image_path = Path(args.image)
    if not image_path.exists():
        raise FileNotFoundError(f"image not found: {image_path}")
    model, registry = load_service_artifacts(config.artifact_dir)
    img = decode_image(image_path)
    vec = extract_features(img, registry, seed=config.seed)
    params = TunerParams(
        k=args.k if args.k is not None else config.tuner.k,
        s=args.s if args.s is not None else config.tuner.s,
        t=args.t if args.t is not None else config.tuner.t,
        budget=config.tuner.budget,
    )
    suggestion = suggest(model, vec, params, registry)
    print(json.dumps(suggestion_to_json(suggestion), sort_keys=True, indent=2))
    return EXIT_OK


def _run_serve(args) -> int:
    import uvicorn

    from .service import create_app_from_artifacts

    config = load_config(args.config)
    app = create_app_from_artifacts(
        config.artifact_dir, tuner_defaults=config.tuner, seed=config.seed
    )
    uvicorn.run(app, host=config.service.host, port=config.service.port, log_level="info")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command in STAGE_CUTS:
            return _run_stage_command(args)
        if args.command == "tune":
            return _run_tune(args)
        if args.command == "serve":
            return _run_serve(args)
        raise ValueError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ValueError as exc:
        log.error("bad arguments: %s", exc)
        return EXIT_CONFIG
    except StageFailure as exc:
        log.error("%s", exc)
        return EXIT_STAGE
    except FileNotFoundError as exc:
        log.error("missing input: %s", exc)
        return EXIT_DATA
    except AdlensError as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
