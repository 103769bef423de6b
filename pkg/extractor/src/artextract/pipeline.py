"""Extraction operations: image features, text features + clusters,
image-text matching scores, and reflection sentiment tagging."""

from __future__ import annotations

import json
import logging
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .backends import run_backend
from .errors import BadCatalog, EmptyDocument, EmptyInput
from .job import (
    ExtractionJob,
    read_catalog,
    require_images,
    write_cluster_labels,
    write_embedding_artifact,
    write_pairwise_artifact,
)

log = logging.getLogger(__name__)

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def extract_image(job: ExtractionJob) -> dict:
    entries = read_catalog(job.catalog_path)
    paths = require_images(entries)
    vectors = run_backend(job, "image_features", paths)
    ids = [e.painting_id for e in entries]
    manifest_path, blob_path = write_embedding_artifact(
        job.output_dir, "image_resnet", ids, vectors
    )
    return {
        "engine_id": "image_resnet",
        "m": len(ids),
        "dim": int(vectors.shape[1]),
        "manifest": str(manifest_path),
        "blob": str(blob_path),
    }


def _reduce_2d(vectors: np.ndarray, seed: int) -> tuple[np.ndarray, str]:
    try:
        import umap

        reducer = umap.UMAP(n_components=2, random_state=seed)
        return reducer.fit_transform(vectors), "umap"
    except ImportError:
        from sklearn.decomposition import PCA

        reduced = PCA(n_components=2, random_state=seed).fit_transform(vectors)
        return reduced, "pca"


def extract_text(job: ExtractionJob) -> dict:
    entries = read_catalog(job.catalog_path)
    for e in entries:
        if not e.text.strip():
            raise EmptyDocument(f"painting {e.painting_id!r} has no text", e.painting_id)
    texts = [e.text for e in entries]
    vectors = run_backend(job, "text_features", texts)
    ids = [e.painting_id for e in entries]
    manifest_path, blob_path = write_embedding_artifact(job.output_dir, "text_bert", ids, vectors)

    reduced, reducer = _reduce_2d(np.asarray(vectors, dtype=np.float64), job.seed)
    from sklearn.cluster import HDBSCAN

    size = min(job.min_cluster_size, len(ids))
    if size < 2:
        labels = np.full(len(ids), -1)  # a single document can never form a cluster
    else:
        labels = HDBSCAN(min_cluster_size=size).fit_predict(reduced)
    labels_path, meta_path = write_cluster_labels(
        job.output_dir,
        ids,
        labels,
        meta={
            "reducer": reducer,
            "min_cluster_size": size,
            "seed": job.seed,
            "text_model": job.text_model,
            "n_clusters": int(len(set(labels) - {-1})),
        },
    )
    return {
        "engine_id": "text_bert",
        "m": len(ids),
        "dim": int(vectors.shape[1]),
        "manifest": str(manifest_path),
        "blob": str(blob_path),
        "clusters": str(labels_path),
        "clusters_meta": str(meta_path),
    }


def extract_itm(job: ExtractionJob) -> dict:
    entries = read_catalog(job.catalog_path)
    paths = require_images(entries)
    for e in entries:
        if not e.text.strip():
            raise EmptyDocument(f"painting {e.painting_id!r} has no text", e.painting_id)
    scores = run_backend(job, "itm_scores", paths, [e.text for e in entries])
    ids = [e.painting_id for e in entries]
    manifest_path, blob_path = write_pairwise_artifact(job.output_dir, "fusion_blip", ids, scores)
    a = np.asarray(scores)
    diag = float(np.diag(a).mean())
    off = float((a.sum() - np.trace(a)) / (a.size - len(ids))) if len(ids) > 1 else 0.0
    if diag < off:
        log.warning("diagonal mean %.3f below off-diagonal mean %.3f", diag, off)
    return {
        "engine_id": "fusion_blip",
        "m": len(ids),
        "manifest": str(manifest_path),
        "blob": str(blob_path),
        "diagonal_mean": round(diag, 4),
        "off_diagonal_mean": round(off, 4),
    }


def _read_reflections(path: Path) -> list[dict]:
    """Accept either the core's event log or plain {group, text} records."""
    records = []
    group_of: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BadCatalog(f"line {lineno}: not valid JSON ({exc})", lineno)
            if "event_type" in rec:
                if rec["event_type"] == "group_assigned":
                    group_of[rec["session_id"]] = rec["payload"]["group"]
                elif rec["event_type"] == "reflection_recorded":
                    records.append(
                        {
                            "session_id": rec["session_id"],
                            "group": group_of.get(rec["session_id"], "unknown"),
                            "text": rec["payload"]["text"],
                        }
                    )
            elif "text" in rec:
                records.append(
                    {
                        "session_id": rec.get("session_id", f"row-{lineno}"),
                        "group": rec.get("group", "unknown"),
                        "text": rec["text"],
                    }
                )
            else:
                raise BadCatalog(f"line {lineno}: neither an event nor a reflection", lineno)
    return records


def sentiment_tag(job: ExtractionJob) -> dict:
    if job.reflections_path is None:
        raise EmptyInput("sentiment tagging needs --reflections")
    records = _read_reflections(Path(job.reflections_path))
    sentences = []
    for rec in records:
        for sentence in _SENTENCE_SPLIT.split(rec["text"].strip()):
            if sentence.strip():
                sentences.append({**rec, "text": sentence.strip()})
    if not sentences:
        raise EmptyInput("no reflection sentences to tag")
    labels = run_backend(job, "sentiment", [s["text"] for s in sentences])
    for s, (label, confidence) in zip(sentences, labels):
        s["label"] = label
        s["confidence"] = confidence
    groups: dict[str, list[str]] = defaultdict(list)
    for s in sentences:
        groups[s["group"]].append(s["label"])
    summary = {}
    for group, labs in sorted(groups.items()):
        positive_pct = round(100.0 * labs.count("positive") / len(labs), 1)
        summary[group] = {
            "n_sentences": len(labs),
            "positive_pct": positive_pct,
            "negative_pct": round(100.0 - positive_pct, 1),
        }
    doc = {"sentences": sentences, "groups": summary}
    out = Path(job.output_dir) / "sentiment.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    doc["output"] = str(out)
    return doc


OPERATIONS = {
    "image_resnet": extract_image,
    "text_bert": extract_text,
    "fusion_blip": extract_itm,
    "sentiment": sentiment_tag,
}


def run_job(job: ExtractionJob) -> dict:
    results = {}
    for which in job.which:
        results[which] = OPERATIONS[which](job)
    return results
