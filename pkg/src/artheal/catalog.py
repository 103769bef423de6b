"""Painting catalog ingestion and text preprocessing.

The catalog file is UTF-8 JSON-lines: one flat object per painting with keys
id, title, artist, date, medium, description, image_path, tags. Unknown keys
are ignored with a warning. Indices are assigned in file order and are stable
for identical input bytes.

Text preprocessing for the text engines follows four deterministic rules:
punctuation (anything outside [a-z0-9] and whitespace, after lowercasing) is
replaced by a space, the result is split on whitespace, stop words are
dropped, and each remaining word is suffix-stemmed. The stemmer only deletes
suffixes (never rewrites), so every output token is a prefix of a source
word; stop words are filtered again after stemming so the whole pipeline is
idempotent on its own output.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import DuplicateId, EmptyCatalog, MalformedRecord, NoText

logger = logging.getLogger(__name__)

KNOWN_KEYS = {"id", "title", "artist", "date", "medium", "description", "image_path", "tags"}

# Concatenation order is fixed so token order is reproducible.
TEXT_FIELDS = ("title", "artist", "date", "medium", "description")

_NON_ALNUM = re.compile(r"[^a-z0-9\s]+")

# Deletion-only suffix rules, longest first. A rule fires only if at least
# MIN_STEM characters remain; rules are re-applied until none fires, which
# makes stemming idempotent. No rewrite rules: a stem is always a prefix of
# the original word.
_SUFFIX_RULES = (
    "ations", "ements", "nesses",
    "ation", "ement", "ingly", "ness", "ments", "tions",
    "edly", "ings", "ment", "tion", "able", "ible", "ance", "ence",
    "ies", "ing", "est", "ous", "ful", "ism", "ity",
    "ed", "es", "ly", "er",
    "s",
)
MIN_STEM = 3


@dataclass(frozen=True)
class Painting:
    """One catalog item: image reference plus textual metadata."""

    id: str
    title: str = ""
    artist: str = ""
    date: str = ""
    medium: str = ""
    description: str = ""
    image_path: str = ""
    tags: tuple[str, ...] = ()

    def text_blob(self) -> str:
        """All text fields concatenated in the fixed order."""
        parts = [getattr(self, name) for name in TEXT_FIELDS]
        parts.extend(self.tags)
        return " ".join(p for p in parts if p)


@dataclass(frozen=True)
class Catalog:
    """Immutable, ordered painting collection with a bijective id<->index map."""

    paintings: tuple[Painting, ...]
    index_by_id: dict[str, int] = field(repr=False, default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.paintings)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.paintings]

    def __contains__(self, painting_id: str) -> bool:
        return painting_id in self.index_by_id

    def get(self, painting_id: str) -> Painting:
        return self.paintings[self.index_by_id[painting_id]]


@dataclass(frozen=True)
class TokenList:
    painting_id: str
    tokens: tuple[str, ...]


def ingest_catalog(path: str | Path) -> Catalog:
    """Read a JSON-lines catalog file into a Catalog with stable indices.

    Raises EmptyCatalog for zero records, DuplicateId on a repeated id and
    MalformedRecord (with the line number) for anything unparseable.
    """
    paintings: list[Painting] = []
    index_by_id: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"line {lineno}: not valid JSON ({exc.msg})", detail=lineno)
            if not isinstance(record, dict):
                raise MalformedRecord(f"line {lineno}: expected an object", detail=lineno)
            unknown = set(record) - KNOWN_KEYS
            if unknown:
                logger.warning("line %d: ignoring unknown keys %s", lineno, sorted(unknown))
            pid = record.get("id")
            if not isinstance(pid, str) or not pid:
                raise MalformedRecord(f"line {lineno}: missing or empty id", detail=lineno)
            if pid in index_by_id:
                raise DuplicateId(f"duplicate painting id {pid!r} at line {lineno}", detail=pid)
            tags = record.get("tags", [])
            if not isinstance(tags, list) or any(not isinstance(t, str) for t in tags):
                raise MalformedRecord(f"line {lineno}: tags must be an array of strings", detail=lineno)
            try:
                painting = Painting(
                    id=pid,
                    title=str(record.get("title", "") or ""),
                    artist=str(record.get("artist", "") or ""),
                    date=str(record.get("date", "") or ""),
                    medium=str(record.get("medium", "") or ""),
                    description=str(record.get("description", "") or ""),
                    image_path=str(record.get("image_path", "") or ""),
                    tags=tuple(tags),
                )
            except (TypeError, ValueError) as exc:
                raise MalformedRecord(f"line {lineno}: {exc}", detail=lineno)
            index_by_id[pid] = len(paintings)
            paintings.append(painting)
    if not paintings:
        raise EmptyCatalog(f"no records in {path}")
    return Catalog(paintings=tuple(paintings), index_by_id=index_by_id)


def default_stopwords() -> frozenset[str]:
    """The packaged ~170-word English function-word list."""
    text = resources.files("artheal.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Read a custom stop-word list (one word per line, # comments)."""
    lines = Path(path).read_text("utf-8").splitlines()
    return frozenset(ln.strip().lower() for ln in lines if ln.strip() and not ln.startswith("#"))


def stem(word: str) -> str:
    """Deletion-only suffix stemmer; output is always a prefix of the input."""
    changed = True
    while changed:
        changed = False
        for suffix in _SUFFIX_RULES:
            if word.endswith(suffix) and len(word) - len(suffix) >= MIN_STEM:
                if suffix == "s" and word.endswith("ss"):
                    continue
                word = word[: -len(suffix)]
                changed = True
                break
    return word


def tokenize(text: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    return _NON_ALNUM.sub(" ", text.lower()).split()


def preprocess_text(painting: Painting, stopwords: frozenset[str] | set[str] | None = None) -> TokenList:
    """Turn a painting's metadata into the token list consumed by text engines.

    Raises NoText when every text field is empty.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    blob = painting.text_blob()
    if not blob.strip():
        raise NoText(f"painting {painting.id!r} has no text metadata", detail=painting.id)
    words = [w for w in tokenize(blob) if w not in stopwords]
    tokens = [stem(w) for w in words]
    tokens = [t for t in tokens if t and t not in stopwords]
    return TokenList(painting_id=painting.id, tokens=tuple(tokens))


def preprocess_catalog(catalog: Catalog, stopwords: frozenset[str] | None = None) -> list[TokenList]:
    """preprocess_text over the whole catalog, in catalog order."""
    if stopwords is None:
        stopwords = default_stopwords()
    return [preprocess_text(p, stopwords) for p in catalog.paintings]
