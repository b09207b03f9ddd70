"""Build a small trained artifact set ready to serve.

Generates a compact synthetic corpus, trains the full pipeline on it, and
writes a config file next to the artifacts so the result can be served
directly:

    python scripts/make_fixture_artifacts.py --out fixture --port 8423
    adlens serve --config fixture/config.json

An existing complete fixture is reused unless --force is given; the browser
console's integration tests call this script to get a live service.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from adlens.config import load_config
from adlens.pipeline import run_pipeline
from adlens.synth import SynthConfig, generate_corpus


def fixture_is_complete(out: Path) -> bool:
    status_path = out / "artifacts" / "status.json"
    if not (out / "config.json").exists() or not status_path.exists():
        return False
    status = json.loads(status_path.read_text())
    return status.get("state") == "complete" and status.get("stage") == "evaluate"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("fixture"))
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--pages", type=int, default=5)
    parser.add_argument("--posts-per-page", type=int, default=12)
    parser.add_argument("--port", type=int, default=8423)
    parser.add_argument("--force", action="store_true", help="rebuild even if complete")
    args = parser.parse_args(argv)

    out = args.out.resolve()
    config_path = out / "config.json"
    if fixture_is_complete(out) and not args.force:
        print(f"fixture already complete: {config_path}")
        return 0

    corpus_dir = out / "corpus"
    generate_corpus(
        SynthConfig(
            out_dir=corpus_dir,
            seed=args.seed,
            n_pages=args.pages,
            posts_per_page=args.posts_per_page,
        )
    )

    out.mkdir(parents=True, exist_ok=True)
    config_path.write_text(
        json.dumps(
            {
                "corpus_path": str(corpus_dir / "corpus.jsonl"),
                "lexicon_config_path": str(corpus_dir / "lexicons.json"),
                "embedding_path": str(corpus_dir / "embeddings.txt"),
                "artifact_dir": str(out / "artifacts"),
                "seed": args.seed,
                "service": {"host": "127.0.0.1", "port": args.port},
            },
            indent=2,
        )
        + "\n"
    )

    cfg = load_config(config_path)
    result = run_pipeline(cfg)
    evaluation = result.report["stages"]["evaluate"]
    print(
        f"trained fixture on {args.pages * args.posts_per_page} posts: "
        f"rmse={evaluation['svr_rmse_test']:.4f} "
        f"quartile accuracy={evaluation['quartile']['accuracy']:.4f}"
    )
    print(f"serve with: adlens serve --config {config_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
