"""Emitted artifacts must load through the core package's strict loaders."""

import json

import numpy as np
import pytest

from artextract import ExtractionJob, extract_image, extract_itm, extract_text
from fixture_corpus import build_fixture

artheal_catalog = pytest.importorskip(
    "artheal.catalog", reason="conformance needs the core package installed"
)
artheal_similarity = pytest.importorskip("artheal.similarity")


def offline_job(tmp_path, **kwargs):
    catalog = build_fixture(tmp_path)
    return ExtractionJob(
        catalog_path=catalog,
        output_dir=tmp_path / "out",
        backend="offline",
        seed=7,
        **kwargs,
    )


def core_catalog(job):
    return artheal_catalog.ingest_catalog(job.catalog_path)


def test_image_artifact_loads_in_core(tmp_path):
    job = offline_job(tmp_path)
    res = extract_image(job)
    assert res["dim"] == 2048
    e = artheal_similarity.load_embeddings(res["manifest"], res["blob"], core_catalog(job))
    assert e.engine_id == "image_resnet"
    assert e.vectors.shape == (6, 2048)


def test_duplicate_image_rows_identical_cosine_one(tmp_path):
    job = offline_job(tmp_path)
    res = extract_image(job)
    cat = core_catalog(job)
    e = artheal_similarity.load_embeddings(res["manifest"], res["blob"], cat)
    i5, i6 = cat.index_by_id["F-005"], cat.index_by_id["F-006"]
    assert np.array_equal(e.vectors[i5], e.vectors[i6])
    sim = artheal_similarity.cosine_matrix(e)
    assert sim.a[i5, i6] == pytest.approx(1.0, abs=1e-9)


def test_text_artifact_dim_384_and_labels(tmp_path):
    job = offline_job(tmp_path)
    res = extract_text(job)
    assert res["dim"] == 384
    cat = core_catalog(job)
    e = artheal_similarity.load_embeddings(res["manifest"], res["blob"], cat)
    assert e.vectors.shape == (6, 384)
    labels = [json.loads(line) for line in open(res["clusters"], encoding="utf-8")]
    assert len(labels) == 6  # one row per painting
    assert [rec["painting_id"] for rec in labels] == [f"F-{i:03d}" for i in range(1, 7)]
    assert all(isinstance(rec["cluster"], int) for rec in labels)
    by_id = {rec["painting_id"]: rec["cluster"] for rec in labels}
    # identical documents land in the same cluster (or are both noise)
    assert by_id["F-005"] == by_id["F-006"]
    i5, i6 = cat.index_by_id["F-005"], cat.index_by_id["F-006"]
    assert np.array_equal(e.vectors[i5], e.vectors[i6])
    meta = json.loads(open(res["clusters_meta"], encoding="utf-8").read())
    assert meta["reducer"] in ("umap", "pca")
    assert meta["seed"] == 7


def test_itm_artifact_bounds_and_payload_size(tmp_path):
    job = offline_job(tmp_path)
    res = extract_itm(job)
    blob = open(res["blob"], "rb").read()
    assert len(blob) == 144  # 6x6 float32
    sim = artheal_similarity.load_pairwise(res["manifest"], res["blob"], core_catalog(job))
    assert sim.engine_id == "fusion_blip"
    assert sim.a.min() >= 0.0 and sim.a.max() <= 1.0
    assert res["diagonal_mean"] >= res["off_diagonal_mean"]


def test_rerun_is_deterministic(tmp_path):
    job = offline_job(tmp_path)
    first = {}
    for op in (extract_image, extract_text, extract_itm):
        res = op(job)
        for key in ("manifest", "blob", "clusters", "clusters_meta"):
            if key in res:
                first[res[key]] = open(res[key], "rb").read()
    for op in (extract_image, extract_text, extract_itm):
        op(job)
    for path, data in first.items():
        assert open(path, "rb").read() == data, path


def test_manifest_checksum_guards_core_load(tmp_path):
    job = offline_job(tmp_path)
    res = extract_image(job)
    raw = bytearray(open(res["blob"], "rb").read())
    raw[3] ^= 0x01
    open(res["blob"], "wb").write(bytes(raw))
    with pytest.raises(Exception) as err:
        artheal_similarity.load_embeddings(res["manifest"], res["blob"], core_catalog(job))
    assert "does not match" in str(err.value)
