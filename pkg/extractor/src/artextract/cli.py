"""CLI entry point: run extraction targets against a catalog."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .errors import ExtractError
from .job import WHICH, ExtractionJob
from .pipeline import run_job


@click.command()
@click.option(
    "--which",
    default=",".join(WHICH[:3]),
    show_default=True,
    help="Comma-separated subset of: " + ", ".join(WHICH),
)
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True)
@click.option(
    "--backend",
    default="auto",
    show_default=True,
    type=click.Choice(["auto", "offline", "pretrained"]),
)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--min-cluster-size", default=5, show_default=True)
@click.option(
    "--reflections",
    "reflections_path",
    default=None,
    type=click.Path(exists=True, dir_okay=False),
    help="Reflections source for the sentiment target (core event log or {group,text} lines)",
)
def main(which, catalog_path, output_dir, seed, backend, batch_size, min_cluster_size, reflections_path):
    """Emit embedding/pairwise artifacts and auxiliary files for the core."""
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    targets = tuple(w.strip() for w in which.split(",") if w.strip())
    try:
        job = ExtractionJob(
            catalog_path=Path(catalog_path),
            output_dir=Path(output_dir),
            which=targets,
            backend=backend,
            batch_size=batch_size,
            seed=seed,
            min_cluster_size=min_cluster_size,
            reflections_path=Path(reflections_path) if reflections_path else None,
        )
        results = run_job(job)
    except ExtractError as exc:
        click.echo(f"error [{exc.code}]: {exc}", err=True)
        sys.exit(1)
    # sentence lists can be large; the summary is what batch callers need
    for res in results.values():
        res.pop("sentences", None)
    click.echo(json.dumps(results, sort_keys=True))


if __name__ == "__main__":
    main()
