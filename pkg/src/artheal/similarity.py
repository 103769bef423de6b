"""Embedding storage, similarity matrices, and deterministic top-r ranking.

Artifacts on disk come in two files: a JSON manifest and a headerless
binary blob of row-major float32 little-endian values. The manifest
carries the engine id, the painting ids in blob row order, and the
blob's sha256, so artifacts produced by any writer (including ones in
other languages) load bit-exactly or fail loudly.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import Catalog
from .errors import (
    ChecksumMismatch,
    IdMismatch,
    MalformedRecord,
    NonFiniteValue,
    OutOfRangeScore,
    SizeMismatch,
    UnknownAnchor,
    ZeroNormRow,
)

DTYPE_TAG = "f32le"

KIND_COSINE = "cosine"
KIND_MATCHING = "matching_score"


@dataclass(frozen=True)
class EmbeddingSet:
    """One vector per painting, rows aligned to catalog index order."""

    engine_id: str
    painting_ids: tuple[str, ...]
    dim: int
    vectors: np.ndarray

    @property
    def m(self) -> int:
        return len(self.painting_ids)


@dataclass(frozen=True)
class SimilarityMatrix:
    """m-by-m pairwise score matrix for one engine."""

    engine_id: str
    painting_ids: tuple[str, ...]
    a: np.ndarray
    kind: str

    @property
    def m(self) -> int:
        return len(self.painting_ids)

    def index_of(self, painting_id: str) -> int:
        try:
            return self.painting_ids.index(painting_id)
        except ValueError:
            raise UnknownAnchor(f"painting {painting_id!r} not in matrix", painting_id)


@dataclass(frozen=True)
class Scores:
    """Score vector over all paintings for one anchor."""

    engine_id: str
    anchor_id: str
    painting_ids: tuple[str, ...]
    values: np.ndarray


@dataclass(frozen=True)
class RankedList:
    anchor_id: str
    entries: tuple[tuple[str, float], ...]
    r: int


def _sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    # Write-then-rename so readers never observe a partial file.
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_manifest(path: Path, manifest: dict) -> None:
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    _atomic_write_bytes(path, text.encode("utf-8"))


def _read_manifest(path: Path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"manifest {path} is not valid JSON: {exc}")
    if not isinstance(manifest, dict):
        raise MalformedRecord(f"manifest {path} must hold a single JSON object")
    return manifest


def _require_keys(manifest: dict, keys: tuple[str, ...], path) -> None:
    missing = [k for k in keys if k not in manifest]
    if missing:
        raise MalformedRecord(f"manifest {path} missing keys {missing}", missing)


def _check_blob(blob: bytes, expected_len: int, expected_sha: str) -> None:
    if len(blob) != expected_len:
        raise SizeMismatch(
            f"blob holds {len(blob)} bytes, manifest implies {expected_len}",
            {"expected": expected_len, "actual": len(blob)},
        )
    actual_sha = _sha256_hex(blob)
    if actual_sha != expected_sha:
        raise ChecksumMismatch(
            f"blob sha256 {actual_sha} does not match manifest {expected_sha}",
            {"expected": expected_sha, "actual": actual_sha},
        )


def _catalog_permutation(manifest_ids: list, catalog: Catalog) -> np.ndarray:
    """Positions of catalog ids inside the manifest id list."""
    if len(set(manifest_ids)) != len(manifest_ids):
        dup = next(i for i in manifest_ids if manifest_ids.count(i) > 1)
        raise IdMismatch(f"manifest repeats painting id {dup!r}", dup)
    pos = {pid: i for i, pid in enumerate(manifest_ids)}
    for pid in catalog.ids:
        if pid not in pos:
            raise IdMismatch(f"manifest is missing catalog id {pid!r}", pid)
    for pid in manifest_ids:
        if pid not in catalog:
            raise IdMismatch(f"manifest id {pid!r} is not in the catalog", pid)
    return np.array([pos[pid] for pid in catalog.ids], dtype=np.int64)


def dump_embeddings(e: EmbeddingSet, manifest_path, blob_path) -> None:
    """Write an embedding manifest plus float32 little-endian blob."""
    manifest_path, blob_path = Path(manifest_path), Path(blob_path)
    blob = np.ascontiguousarray(e.vectors, dtype="<f4").tobytes()
    _atomic_write_bytes(blob_path, blob)
    _write_manifest(
        manifest_path,
        {
            "engine_id": e.engine_id,
            "kind": "embedding",
            "m": e.m,
            "dim": e.dim,
            "dtype": DTYPE_TAG,
            "painting_ids": list(e.painting_ids),
            "blob_sha256": _sha256_hex(blob),
        },
    )


def load_embeddings(manifest_path, blob_path, catalog: Catalog) -> EmbeddingSet:
    """Load, verify, and reorder an embedding artifact to catalog order."""
    manifest = _read_manifest(Path(manifest_path))
    _require_keys(
        manifest,
        ("engine_id", "kind", "m", "dim", "dtype", "painting_ids", "blob_sha256"),
        manifest_path,
    )
    if manifest["kind"] != "embedding":
        raise MalformedRecord(
            f"expected kind 'embedding', manifest says {manifest['kind']!r}"
        )
    if manifest["dtype"] != DTYPE_TAG:
        raise MalformedRecord(f"unsupported dtype {manifest['dtype']!r}")
    m, dim = int(manifest["m"]), int(manifest["dim"])
    ids = manifest["painting_ids"]
    if len(ids) != m:
        raise MalformedRecord(f"manifest m={m} but lists {len(ids)} painting ids")

    blob = Path(blob_path).read_bytes()
    _check_blob(blob, m * dim * 4, manifest["blob_sha256"])
    perm = _catalog_permutation(ids, catalog)

    vectors = np.frombuffer(blob, dtype="<f4").reshape(m, dim).astype(np.float64)
    bad = np.argwhere(~np.isfinite(vectors))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise NonFiniteValue(
            f"non-finite value at painting {ids[i]!r} component {j}", (ids[i], j)
        )
    return EmbeddingSet(
        engine_id=manifest["engine_id"],
        painting_ids=tuple(catalog.ids),
        dim=dim,
        vectors=vectors[perm],
    )


def cosine_matrix(e: EmbeddingSet) -> SimilarityMatrix:
    """All-pairs cosine similarity of the embedding rows."""
    norms = np.linalg.norm(e.vectors, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        pid = e.painting_ids[int(zero[0])]
        raise ZeroNormRow(f"painting {pid!r} has a zero-norm embedding", pid)
    normed = e.vectors / norms[:, None]
    a = normed @ normed.T
    return SimilarityMatrix(
        engine_id=e.engine_id, painting_ids=e.painting_ids, a=a, kind=KIND_COSINE
    )


def load_pairwise(manifest_path, blob_path, catalog: Catalog, symmetrize: bool = True) -> SimilarityMatrix:
    """Load a raw pairwise matching-score artifact (entries in [0, 1]).

    Scores of kind image-times-text are not symmetric in general; by
    default the matrix is averaged with its transpose so ranking reads
    a single pairwise score, matching the cosine contract. Values are
    quantized back through float32 so a later dump reproduces them
    bit-exactly.
    """
    manifest = _read_manifest(Path(manifest_path))
    _require_keys(
        manifest, ("engine_id", "kind", "m", "dtype", "painting_ids", "blob_sha256"), manifest_path
    )
    if manifest["kind"] != "pairwise":
        raise MalformedRecord(f"expected kind 'pairwise', manifest says {manifest['kind']!r}")
    if manifest["dtype"] != DTYPE_TAG:
        raise MalformedRecord(f"unsupported dtype {manifest['dtype']!r}")
    m = int(manifest["m"])
    ids = manifest["painting_ids"]
    if len(ids) != m:
        raise MalformedRecord(f"manifest m={m} but lists {len(ids)} painting ids")

    blob = Path(blob_path).read_bytes()
    _check_blob(blob, m * m * 4, manifest["blob_sha256"])
    raw = np.frombuffer(blob, dtype="<f4").reshape(m, m).astype(np.float64)

    ok = np.isfinite(raw) & (raw >= 0.0) & (raw <= 1.0)
    bad = np.argwhere(~ok)
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise OutOfRangeScore(
            f"score at ({ids[i]!r}, {ids[j]!r}) = {raw[i, j]} outside [0, 1]",
            (ids[i], ids[j], float(raw[i, j])),
        )

    perm = _catalog_permutation(ids, catalog)
    a = raw[np.ix_(perm, perm)]
    if symmetrize:
        a = ((a + a.T) / 2.0).astype("<f4").astype(np.float64)
    return SimilarityMatrix(
        engine_id=manifest["engine_id"],
        painting_ids=tuple(catalog.ids),
        a=a,
        kind=KIND_MATCHING,
    )


def dump_matrix(sim: SimilarityMatrix, manifest_path, blob_path) -> None:
    """Persist a similarity matrix in the pairwise artifact format.

    The extra manifest key matrix_kind records whether entries are
    cosines (range [-1, 1]) or matching scores (range [0, 1]).
    """
    manifest_path, blob_path = Path(manifest_path), Path(blob_path)
    blob = np.ascontiguousarray(sim.a, dtype="<f4").tobytes()
    _atomic_write_bytes(blob_path, blob)
    _write_manifest(
        manifest_path,
        {
            "engine_id": sim.engine_id,
            "kind": "pairwise",
            "matrix_kind": sim.kind,
            "m": sim.m,
            "dtype": DTYPE_TAG,
            "painting_ids": list(sim.painting_ids),
            "blob_sha256": _sha256_hex(blob),
        },
    )


def load_matrix(manifest_path, blob_path, catalog: Catalog) -> SimilarityMatrix:
    """Reload a matrix written by dump_matrix, without re-symmetrizing."""
    manifest = _read_manifest(Path(manifest_path))
    kind = manifest.get("matrix_kind", KIND_MATCHING)
    if kind == KIND_MATCHING:
        return load_pairwise(manifest_path, blob_path, catalog, symmetrize=False)
    _require_keys(
        manifest, ("engine_id", "kind", "m", "dtype", "painting_ids", "blob_sha256"), manifest_path
    )
    m = int(manifest["m"])
    ids = manifest["painting_ids"]
    blob = Path(blob_path).read_bytes()
    _check_blob(blob, m * m * 4, manifest["blob_sha256"])
    raw = np.frombuffer(blob, dtype="<f4").reshape(m, m).astype(np.float64)
    tol = 1e-6
    ok = np.isfinite(raw) & (raw >= -1.0 - tol) & (raw <= 1.0 + tol)
    bad = np.argwhere(~ok)
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise OutOfRangeScore(
            f"cosine at ({ids[i]!r}, {ids[j]!r}) = {raw[i, j]} outside [-1, 1]",
            (ids[i], ids[j], float(raw[i, j])),
        )
    perm = _catalog_permutation(ids, catalog)
    return SimilarityMatrix(
        engine_id=manifest["engine_id"],
        painting_ids=tuple(catalog.ids),
        a=raw[np.ix_(perm, perm)],
        kind=kind,
    )


def score_user(a: SimilarityMatrix, anchor: str) -> Scores:
    """Score every painting against the user's chosen anchor.

    The score of painting i is the matrix entry a[i, j] for the anchor's
    column j: similarity to the anchor is the whole of the user signal.
    """
    j = a.index_of(anchor)
    return Scores(
        engine_id=a.engine_id,
        anchor_id=anchor,
        painting_ids=a.painting_ids,
        values=a.a[:, j].copy(),
    )


def top_r(scores: Scores, r: int, exclusions: frozenset[str] | set[str] = frozenset()) -> RankedList:
    """Top r paintings by descending score, ties broken by ascending id.

    The anchor is always excluded, whether or not the caller lists it.
    """
    assert r >= 0
    excluded = set(exclusions) | {scores.anchor_id}
    ids = np.array(scores.painting_ids)
    keep = np.array([pid not in excluded for pid in scores.painting_ids], dtype=bool)
    ids, vals = ids[keep], scores.values[keep]
    order = np.lexsort((ids, -vals))[:r]
    entries = tuple((str(ids[i]), float(vals[i])) for i in order)
    return RankedList(anchor_id=scores.anchor_id, entries=entries, r=r)
