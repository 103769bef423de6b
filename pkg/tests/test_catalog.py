import json

import pytest

from artheal.catalog import (
    Catalog,
    Painting,
    default_stopwords,
    ingest_catalog,
    preprocess_text,
    stem,
    tokenize,
)
from artheal.errors import DuplicateId, EmptyCatalog, MalformedRecord, NoText


def write_catalog(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def make_record(i, **overrides):
    rec = {
        "id": f"NG-{i:04d}",
        "title": f"Landscape {i}",
        "artist": "A. Painter",
        "date": "1850",
        "medium": "Oil on canvas",
        "description": f"A quiet river scene number {i} with trees and sky.",
        "image_path": f"images/NG-{i:04d}.jpg",
        "tags": ["nature", "river"],
    }
    rec.update(overrides)
    return rec


def test_ingest_assigns_stable_indices_in_file_order(tmp_path):
    path = tmp_path / "catalog.jsonl"
    write_catalog(path, [make_record(i) for i in range(5)])
    cat = ingest_catalog(path)
    assert cat.m == 5
    assert cat.ids == [f"NG-{i:04d}" for i in range(5)]
    assert cat.index_by_id["NG-0003"] == 3
    assert cat.get("NG-0002").title == "Landscape 2"


def test_ingest_full_scale_count(tmp_path):
    # The production corpus size: 2,368 records.
    path = tmp_path / "big.jsonl"
    write_catalog(path, [make_record(i) for i in range(2368)])
    assert ingest_catalog(path).m == 2368


def test_ingest_is_deterministic(tmp_path):
    path = tmp_path / "catalog.jsonl"
    write_catalog(path, [make_record(i) for i in range(10)])
    first = ingest_catalog(path)
    second = ingest_catalog(path)
    assert first == second
    assert first.ids == second.ids


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(EmptyCatalog):
        ingest_catalog(path)


def test_ingest_duplicate_id_reports_offender(tmp_path):
    path = tmp_path / "dup.jsonl"
    write_catalog(path, [make_record(1, id="NG-001"), make_record(2, id="NG-001")])
    with pytest.raises(DuplicateId) as exc:
        ingest_catalog(path)
    assert exc.value.detail == "NG-001"


def test_ingest_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    with open(path, "w") as fh:
        fh.write(json.dumps(make_record(1)) + "\n")
        fh.write("{not json\n")
    with pytest.raises(MalformedRecord) as exc:
        ingest_catalog(path)
    assert exc.value.detail == 2


def test_ingest_missing_id(tmp_path):
    path = tmp_path / "noid.jsonl"
    rec = make_record(1)
    del rec["id"]
    write_catalog(path, [rec])
    with pytest.raises(MalformedRecord):
        ingest_catalog(path)


def test_ingest_ignores_unknown_keys_with_warning(tmp_path, caplog):
    path = tmp_path / "extra.jsonl"
    write_catalog(path, [make_record(1, curator_note="keep")])
    with caplog.at_level("WARNING"):
        cat = ingest_catalog(path)
    assert cat.m == 1
    assert "curator_note" in caplog.text


def test_preprocess_hand_example():
    p = Painting(id="p1", title="A Calm Sea!")
    out = preprocess_text(p, stopwords=frozenset({"a"}))
    assert list(out.tokens) == ["calm", "sea"]


def test_preprocess_stopword_only_description_keeps_title():
    p = Painting(id="p1", title="X", description="The THE the")
    out = preprocess_text(p, stopwords=frozenset({"the"}))
    assert list(out.tokens) == ["x"]


def test_preprocess_stopword_only_text_yields_empty_tokens():
    # Precondition (some non-empty field) holds, so no error: empty list.
    p = Painting(id="p1", description="The THE the")
    out = preprocess_text(p, stopwords=frozenset({"the"}))
    assert out.tokens == ()


def test_preprocess_all_fields_empty_raises():
    with pytest.raises(NoText):
        preprocess_text(Painting(id="p1"), stopwords=frozenset())


def test_preprocess_digits_kept_and_punctuation_split():
    p = Painting(id="p1", title="Sunset, 1850-60 (detail)")
    out = preprocess_text(p, stopwords=frozenset())
    assert list(out.tokens) == ["sunset", "1850", "60", "detail"]


def test_preprocess_idempotent_on_rendered_output():
    stop = default_stopwords()
    p = Painting(
        id="p1",
        title="The Fighting Temeraire",
        artist="Joseph Mallord William Turner",
        date="1839",
        medium="Oil on canvas",
        description="A celebrated warship being towed towards its final berth; glowing sunset.",
        tags=("ships", "sunsets"),
    )
    once = preprocess_text(p, stop)
    again = preprocess_text(Painting(id="p1", description=" ".join(once.tokens)), stop)
    assert again.tokens == once.tokens


def test_tokens_are_prefixes_of_source_words():
    stop = default_stopwords()
    p = Painting(
        id="p1",
        title="Bathers at Asnieres",
        description="Several working men relaxing, bathing and dreaming by the river Seine.",
    )
    out = preprocess_text(p, stop)
    source_words = tokenize(p.text_blob())
    for tok in out.tokens:
        assert any(w.startswith(tok) for w in source_words), tok


def test_stem_is_deletion_only_and_idempotent():
    for word in ["paintings", "relaxing", "towed", "happiness", "calm", "sea", "glowing", "ss"]:
        s = stem(word)
        assert word.startswith(s)
        assert stem(s) == s


def test_default_stopword_list_size():
    words = default_stopwords()
    assert 150 <= len(words) <= 200
    assert "the" in words and "dont" in words
