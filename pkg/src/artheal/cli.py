"""Command-line entry points for batch operations and the HTTP service.

Exit codes: 0 on success, 1 on a domain error (diagnostic on stderr),
2 on usage errors (click's default). Machine-readable output goes to
stdout only; everything else to stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .catalog import ingest_catalog, preprocess_catalog
from .errors import DomainError
from .registry import gate_engine, load_ratings
from .session import replay_log
from .similarity import dump_embeddings, load_embeddings
from .text_engines import LdaConfig, dump_lda, lda_embeddings, train_lda


def emit(payload: dict) -> None:
    click.echo(json.dumps(payload, sort_keys=True))


def domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DomainError as exc:
            click.echo(f"error [{exc.code}]: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Art recommendation and guided session tooling."""


@main.command()
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True, dir_okay=False))
@domain_errors
def ingest(catalog_path):
    """Validate a catalog file and print its size."""
    catalog = ingest_catalog(catalog_path)
    emit({"m": catalog.m, "ids": catalog.ids[:5]})


@main.command()
@click.option("--engine", "engine_id", required=True, type=click.Choice(["text_lda"]))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--k", default=20, show_default=True)
@click.option("--alpha", default=0.1, show_default=True)
@click.option("--beta", default=0.01, show_default=True)
@click.option("--iters", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@domain_errors
def build(engine_id, catalog_path, out_dir, k, alpha, beta, iters, seed):
    """Train a topic model over the catalog text and dump its artifacts."""
    catalog = ingest_catalog(catalog_path)
    tokens = preprocess_catalog(catalog)
    cfg = LdaConfig(k=k, alpha=alpha, beta=beta, iterations=iters, seed=seed)
    model = train_lda(tokens, cfg)
    out = Path(out_dir)
    model_dir = out / "lda"
    model_dir.mkdir(parents=True, exist_ok=True)
    dump_lda(model, model_dir)
    e = lda_embeddings(model, engine_id)
    dump_embeddings(e, out / f"{engine_id}.manifest.json", out / f"{engine_id}.f32")
    emit(
        {
            "engine_id": engine_id,
            "m": len(e.painting_ids),
            "dim": int(e.vectors.shape[1]),
            "model_dir": str(model_dir),
            "manifest": str(out / f"{engine_id}.manifest.json"),
        }
    )


@main.command("import-embeddings")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--blob", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@domain_errors
def import_embeddings(manifest, blob, catalog_path, out_dir):
    """Verify an externally produced embedding artifact; optionally re-dump it."""
    catalog = ingest_catalog(catalog_path)
    e = load_embeddings(manifest, blob, catalog)
    result = {"engine_id": e.engine_id, "m": len(e.painting_ids), "dim": int(e.vectors.shape[1])}
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dump_embeddings(e, out / f"{e.engine_id}.manifest.json", out / f"{e.engine_id}.f32")
        result["manifest"] = str(out / f"{e.engine_id}.manifest.json")
    emit(result)


@main.command()
@click.option("--ratings", "ratings_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", default=2.0, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False))
@domain_errors
def gate(ratings_path, threshold, out_path):
    """Decide engine eligibility from expert pilot ratings."""
    ratings = load_ratings(ratings_path)
    engine_ids = sorted({r.engine_id for r in ratings})
    decisions = [gate_engine(ratings, eid, threshold) for eid in engine_ids]
    doc = {"threshold": threshold, "decisions": [d.as_dict() for d in decisions]}
    rendered = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(rendered, encoding="utf-8")
    click.echo(rendered, nl=False)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@domain_errors
def serve(config_path, host):
    """Run the HTTP session service."""
    import uvicorn

    from .config import load_config
    from .server import create_app

    config = load_config(config_path)
    app = create_app(config)
    uvicorn.run(app, host=host, port=config.port, log_level="warning")


@main.command()
@click.option("--sessions", "log_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@domain_errors
def report(log_path, out_path):
    """Replay a session event log and write the analytics report plus a per-session table."""
    from .analytics import build_report, render_report, sessions_csv

    sessions = replay_log(log_path)
    completed = [s for s in sessions.values() if s.state == "completed"]
    doc = build_report(completed)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(render_report(doc))
    csv_path = out.with_suffix(".csv")
    csv_path.write_text(sessions_csv(completed), encoding="utf-8")
    emit(
        {
            "sessions": len(sessions),
            "completed": len(completed),
            "report": str(out),
            "table": str(csv_path),
        }
    )


if __name__ == "__main__":
    main()
