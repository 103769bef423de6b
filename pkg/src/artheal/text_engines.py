"""Text-based similarity engines: LDA topic model and c-TF-IDF labels.

The topic model is trained by collapsed Gibbs sampling and read out as
document-topic probability rows, which double as the text_lda engine's
embedding vectors. c-TF-IDF scores terms within document classes (topic
clusters) so each class can be described by its highest-weight words.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import TokenList
from .errors import (
    ChecksumMismatch,
    EmptyClass,
    EmptyCorpus,
    EmptyDocument,
    InvalidConfig,
    MalformedRecord,
    SizeMismatch,
    UnknownClass,
)
from .similarity import (
    DTYPE_TAG,
    EmbeddingSet,
    _atomic_write_bytes,
    _read_manifest,
    _require_keys,
    _sha256_hex,
    _write_manifest,
)

log = logging.getLogger(__name__)

# The deployed prior/size defaults. Topic count, priors, and iteration
# budget are all configurable; these are ordinary choices at catalog
# scale (a couple of thousand short documents), not tuned values.
DEFAULT_K = 20
DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 0.01
DEFAULT_ITERATIONS = 1000

# PRNG contract: PCG64, seeded with LdaConfig.seed; exactly one double
# is drawn per token per pass (including initialization), consumed in
# document-major, token-minor order. Any reimplementation that honors
# this stream produces bit-identical models.
RNG_ALGORITHM = "pcg64"


@dataclass(frozen=True)
class LdaConfig:
    k: int = DEFAULT_K
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    iterations: int = DEFAULT_ITERATIONS
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not (isinstance(self.k, int) and self.k >= 1):
            problems.append(f"k must be a positive integer, got {self.k!r}")
        if not self.alpha > 0:
            problems.append(f"alpha must be positive, got {self.alpha!r}")
        if not self.beta > 0:
            problems.append(f"beta must be positive, got {self.beta!r}")
        if not (isinstance(self.iterations, int) and self.iterations >= 1):
            problems.append(f"iterations must be a positive integer, got {self.iterations!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            problems.append(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if problems:
            raise InvalidConfig("; ".join(problems), problems)


@dataclass(frozen=True)
class LdaModel:
    """Trained topic model. assignments is None for reloaded models."""

    vocab: tuple[str, ...]
    painting_ids: tuple[str, ...]
    theta: np.ndarray
    phi: np.ndarray
    assignments: tuple[tuple[int, ...], ...] | None
    config: LdaConfig

    @property
    def m(self) -> int:
        return len(self.painting_ids)

    @property
    def k(self) -> int:
        return self.config.k


def _conservation_check(n_dt, n_tw, n_t, doc_len) -> None:
    # Token mass must be conserved by every sweep: each document keeps
    # its length, and per-topic word mass equals per-topic doc mass.
    assert (n_dt.sum(axis=1) == doc_len).all(), "document token mass drifted"
    assert (n_tw.sum(axis=1) == n_t).all(), "topic-word mass drifted"
    assert (n_dt.sum(axis=0) == n_t).all(), "topic-document mass drifted"


def train_lda(tokens: list[TokenList], cfg: LdaConfig) -> LdaModel:
    """Collapsed Gibbs sampling over the token lists.

    Runs cfg.iterations full sweeps and reads theta and phi from the
    final counts (no burn-in discard, no posterior averaging):
    theta[d, t] = (n_dt + alpha) / (n_d + k*alpha) and
    phi[t, w] = (n_tw + beta) / (n_t + V*beta).
    """
    if not tokens:
        raise EmptyCorpus("no documents to train on")
    for tl in tokens:
        if not tl.tokens:
            raise EmptyDocument(f"document {tl.painting_id!r} has no tokens", tl.painting_id)

    vocab: list[str] = []
    word_index: dict[str, int] = {}
    for tl in tokens:
        for w in tl.tokens:
            if w not in word_index:
                word_index[w] = len(vocab)
                vocab.append(w)
    V = len(vocab)
    k = cfg.k
    if V < k:
        log.warning("vocabulary size %d is below topic count %d", V, k)

    m = len(tokens)
    docs = [np.array([word_index[w] for w in tl.tokens], dtype=np.int64) for tl in tokens]
    doc_len = np.array([len(d) for d in docs], dtype=np.int64)

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n_dt = np.zeros((m, k), dtype=np.int64)
    n_tw = np.zeros((k, V), dtype=np.int64)
    n_t = np.zeros(k, dtype=np.int64)
    z: list[np.ndarray] = []
    for d, doc in enumerate(docs):
        u = rng.random(len(doc))
        zd = np.minimum((u * k).astype(np.int64), k - 1)
        z.append(zd)
        np.add.at(n_dt[d], zd, 1)
        np.add.at(n_tw, (zd, doc), 1)
        np.add.at(n_t, zd, 1)
    _conservation_check(n_dt, n_tw, n_t, doc_len)

    v_beta = V * cfg.beta
    for _ in range(cfg.iterations):
        for d, doc in enumerate(docs):
            zd = z[d]
            nd = n_dt[d]
            u = rng.random(len(doc))
            for pos in range(len(doc)):
                wi = doc[pos]
                told = zd[pos]
                nd[told] -= 1
                n_tw[told, wi] -= 1
                n_t[told] -= 1
                weights = (n_tw[:, wi] + cfg.beta) / (n_t + v_beta) * (nd + cfg.alpha)
                cum = np.cumsum(weights)
                tnew = int(np.searchsorted(cum, u[pos] * cum[-1], side="right"))
                if tnew == k:
                    tnew = k - 1
                zd[pos] = tnew
                nd[tnew] += 1
                n_tw[tnew, wi] += 1
                n_t[tnew] += 1
        _conservation_check(n_dt, n_tw, n_t, doc_len)

    theta = (n_dt + cfg.alpha) / (doc_len[:, None] + k * cfg.alpha)
    phi = (n_tw + cfg.beta) / (n_t + v_beta)[:, None]
    assert np.all(theta >= 0) and np.allclose(theta.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(phi >= 0) and np.allclose(phi.sum(axis=1), 1.0, atol=1e-9)

    return LdaModel(
        vocab=tuple(vocab),
        painting_ids=tuple(tl.painting_id for tl in tokens),
        theta=theta,
        phi=phi,
        assignments=tuple(tuple(int(t) for t in zd) for zd in z),
        config=cfg,
    )


def lda_embeddings(model: LdaModel, engine_id: str = "text_lda") -> EmbeddingSet:
    """Document-topic rows as embedding vectors, catalog order preserved."""
    return EmbeddingSet(
        engine_id=engine_id,
        painting_ids=model.painting_ids,
        dim=model.k,
        vectors=model.theta.copy(),
    )


def dump_lda(model: LdaModel, out_dir) -> None:
    """Write model.json plus theta.f32 and phi.f32 blobs into out_dir.

    Deterministic byte-for-byte given the same corpus and config; token
    assignments are not persisted (reloaded models serve embeddings and
    labels, not resumed training).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    theta_blob = np.ascontiguousarray(model.theta, dtype="<f4").tobytes()
    phi_blob = np.ascontiguousarray(model.phi, dtype="<f4").tobytes()
    _atomic_write_bytes(out_dir / "theta.f32", theta_blob)
    _atomic_write_bytes(out_dir / "phi.f32", phi_blob)
    _write_manifest(
        out_dir / "model.json",
        {
            "kind": "lda_model",
            "config": {
                "k": model.config.k,
                "alpha": model.config.alpha,
                "beta": model.config.beta,
                "iterations": model.config.iterations,
                "seed": model.config.seed,
                "rng": RNG_ALGORITHM,
            },
            "m": model.m,
            "k": model.k,
            "dtype": DTYPE_TAG,
            "vocab": list(model.vocab),
            "painting_ids": list(model.painting_ids),
            "theta_sha256": _sha256_hex(theta_blob),
            "phi_sha256": _sha256_hex(phi_blob),
        },
    )


def load_lda(model_dir) -> LdaModel:
    """Reload a dumped model, verifying sizes and checksums."""
    model_dir = Path(model_dir)
    manifest = _read_manifest(model_dir / "model.json")
    _require_keys(
        manifest,
        ("kind", "config", "m", "k", "dtype", "vocab", "painting_ids", "theta_sha256", "phi_sha256"),
        model_dir / "model.json",
    )
    if manifest["kind"] != "lda_model":
        raise MalformedRecord(f"expected kind 'lda_model', got {manifest['kind']!r}")
    if manifest["dtype"] != DTYPE_TAG:
        raise MalformedRecord(f"unsupported dtype {manifest['dtype']!r}")
    m, k = int(manifest["m"]), int(manifest["k"])
    vocab = tuple(manifest["vocab"])
    cfg_raw = dict(manifest["config"])
    cfg_raw.pop("rng", None)
    cfg = LdaConfig(**cfg_raw)

    def read_blob(name: str, rows: int, cols: int, sha: str) -> np.ndarray:
        blob = (model_dir / name).read_bytes()
        if len(blob) != rows * cols * 4:
            raise SizeMismatch(
                f"{name} holds {len(blob)} bytes, manifest implies {rows * cols * 4}",
                {"expected": rows * cols * 4, "actual": len(blob)},
            )
        if _sha256_hex(blob) != sha:
            raise ChecksumMismatch(f"{name} sha256 does not match manifest")
        return np.frombuffer(blob, dtype="<f4").reshape(rows, cols).astype(np.float64)

    theta = read_blob("theta.f32", m, k, manifest["theta_sha256"])
    phi = read_blob("phi.f32", k, len(vocab), manifest["phi_sha256"])
    return LdaModel(
        vocab=vocab,
        painting_ids=tuple(manifest["painting_ids"]),
        theta=theta,
        phi=phi,
        assignments=None,
        config=cfg,
    )


@dataclass(frozen=True)
class ClassTermWeights:
    """c-TF-IDF weights: one row per class, one column per term."""

    classes: tuple[str, ...]
    terms: tuple[str, ...]
    weights: np.ndarray

    def row(self, class_id: str) -> np.ndarray:
        try:
            ci = self.classes.index(class_id)
        except ValueError:
            raise UnknownClass(f"class {class_id!r} not present", class_id)
        return self.weights[ci]


def ctfidf(class_token_counts: dict[str, dict[str, int]]) -> ClassTermWeights:
    """Class-based TF-IDF: W[t, c] = tf(t, c) * ln(1 + A / f(t)).

    A is the mean token count per class and f(t) the corpus-wide count
    of term t. Classes keep their input order; terms are ordered by
    first appearance across classes.
    """
    if not class_token_counts:
        raise EmptyClass("no classes given")
    classes = tuple(class_token_counts)
    terms: list[str] = []
    term_index: dict[str, int] = {}
    for cid in classes:
        counts = class_token_counts[cid]
        if not counts or sum(counts.values()) == 0:
            raise EmptyClass(f"class {cid!r} has no tokens", cid)
        for term in counts:
            if term not in term_index:
                term_index[term] = len(terms)
                terms.append(term)

    tf = np.zeros((len(classes), len(terms)), dtype=np.float64)
    for ci, cid in enumerate(classes):
        for term, count in class_token_counts[cid].items():
            tf[ci, term_index[term]] = count
    f = tf.sum(axis=0)
    a_mean = tf.sum() / len(classes)
    weights = tf * np.log1p(a_mean / f)
    return ClassTermWeights(classes=classes, terms=tuple(terms), weights=weights)


def top_topic_words(w: ClassTermWeights, class_id: str, n: int) -> list[tuple[str, float]]:
    """n highest-weight terms of a class, ties broken alphabetically."""
    assert n >= 1
    row = w.row(class_id)
    ranked = sorted(zip(w.terms, row), key=lambda tw: (-tw[1], tw[0]))
    return [(term, float(weight)) for term, weight in ranked[:n]]
