"""Job description, catalog access, and artifact emission.

The output format is the core's interchange contract: a JSON manifest
naming the engine, the painting ids in row order, and the sha256 of a
headerless row-major float32 little-endian blob. Writes are atomic
(temp file + rename) so a crashed job never leaves a half-artifact.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadCatalog, MissingImage, RangeViolation

WHICH = ("image_resnet", "text_bert", "fusion_blip", "sentiment")

TEXT_FIELDS = ("title", "artist", "date", "medium", "description")


@dataclass(frozen=True)
class ExtractionJob:
    catalog_path: Path
    output_dir: Path
    which: tuple[str, ...] = WHICH
    image_model: str = "resnet50-imagenet"
    text_model: str = "all-MiniLM-L6-v2"
    itm_model: str = "blip-itm-base"
    sentiment_model: str = "distilbert-sst2"
    backend: str = "auto"  # auto | offline | pretrained
    batch_size: int = 8
    device: str = "cpu"
    seed: int = 0
    min_cluster_size: int = 5
    reflections_path: Path | None = None

    def __post_init__(self):
        unknown = [w for w in self.which if w not in WHICH]
        if unknown:
            raise BadCatalog(f"unknown extraction targets {unknown}; valid: {WHICH}")


@dataclass(frozen=True)
class CatalogEntry:
    painting_id: str
    image_path: Path | None
    text: str
    raw: dict = field(repr=False, default_factory=dict)


def read_catalog(path: Path) -> list[CatalogEntry]:
    """Parse the core's line-delimited catalog into extraction entries."""
    entries: list[CatalogEntry] = []
    seen: set[str] = set()
    base = Path(path).parent
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BadCatalog(f"line {lineno}: not valid JSON ({exc})", lineno)
            pid = rec.get("id")
            if not pid or not isinstance(pid, str):
                raise BadCatalog(f"line {lineno}: record has no id", lineno)
            if pid in seen:
                raise BadCatalog(f"line {lineno}: duplicate id {pid!r}", pid)
            seen.add(pid)
            parts = [str(rec.get(name, "")) for name in TEXT_FIELDS]
            parts.extend(str(t) for t in rec.get("tags", []))
            text = " ".join(p for p in parts if p.strip())
            image = rec.get("image_path") or None
            entries.append(
                CatalogEntry(
                    painting_id=pid,
                    image_path=(base / image) if image else None,
                    text=text,
                    raw=rec,
                )
            )
    if not entries:
        raise BadCatalog("catalog has no records")
    return entries


def require_images(entries: list[CatalogEntry]) -> list[Path]:
    paths = []
    for e in entries:
        if e.image_path is None or not e.image_path.is_file():
            raise MissingImage(f"painting {e.painting_id!r} has no readable image", e.painting_id)
        paths.append(e.image_path)
    return paths


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_embedding_artifact(
    out_dir: Path, engine_id: str, painting_ids: list[str], vectors: np.ndarray
) -> tuple[Path, Path]:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    assert vectors.ndim == 2 and vectors.shape[0] == len(painting_ids)
    blob = vectors.tobytes()
    manifest = {
        "engine_id": engine_id,
        "kind": "embedding",
        "m": len(painting_ids),
        "dim": int(vectors.shape[1]),
        "dtype": "f32le",
        "painting_ids": list(painting_ids),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    manifest_path = out_dir / f"{engine_id}.manifest.json"
    blob_path = out_dir / f"{engine_id}.f32"
    _atomic_write(blob_path, blob)
    _atomic_write(manifest_path, (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode())
    return manifest_path, blob_path


def write_pairwise_artifact(
    out_dir: Path, engine_id: str, painting_ids: list[str], scores: np.ndarray
) -> tuple[Path, Path]:
    scores = np.ascontiguousarray(scores, dtype="<f4")
    m = len(painting_ids)
    assert scores.shape == (m, m)
    # probabilities only; refuse to write anything out of range
    if not (np.isfinite(scores).all() and scores.min() >= 0.0 and scores.max() <= 1.0):
        bad = float(scores.min()) if scores.min() < 0 else float(scores.max())
        raise RangeViolation(f"matching scores must lie in [0,1]; saw {bad}", bad)
    blob = scores.tobytes()
    manifest = {
        "engine_id": engine_id,
        "kind": "pairwise",
        "m": m,
        "dtype": "f32le",
        "painting_ids": list(painting_ids),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    manifest_path = out_dir / f"{engine_id}.manifest.json"
    blob_path = out_dir / f"{engine_id}.f32"
    _atomic_write(blob_path, blob)
    _atomic_write(manifest_path, (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode())
    return manifest_path, blob_path


def write_cluster_labels(
    out_dir: Path, painting_ids: list[str], labels, meta: dict
) -> tuple[Path, Path]:
    lines = "".join(
        json.dumps({"painting_id": pid, "cluster": int(lab)}) + "\n"
        for pid, lab in zip(painting_ids, labels)
    )
    labels_path = out_dir / "clusters.jsonl"
    meta_path = out_dir / "clusters.meta.json"
    _atomic_write(labels_path, lines.encode())
    _atomic_write(meta_path, (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode())
    return labels_path, meta_path
