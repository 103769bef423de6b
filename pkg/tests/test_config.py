"""Configuration loading: full validation with every problem reported at once."""

import json

import pytest

from artheal.config import load_config
from artheal.errors import ConfigInvalid
from fixture_build import build_config


def rewrite(path, mutate):
    raw = json.loads(path.read_text())
    mutate(raw)
    path.write_text(json.dumps(raw))
    return path


def test_valid_fixture_config_parses(tmp_path):
    cfg = load_config(build_config(tmp_path))
    assert cfg.port == 8123
    assert cfg.samples.samples == ("P-002", "P-014", "P-025")
    assert cfg.samples.labels == ("calmness", "restoration", "cheerfulness")
    assert len(cfg.guidance_prompts) == 3
    assert cfg.gate_threshold == 2.0
    assert cfg.ratings_path is not None and cfg.ratings_path.is_file()
    assert set(cfg.engines) == {"image_resnet", "text_bert", "fusion_blip"}
    assert cfg.engines["fusion_blip"].kind == "pairwise"
    assert cfg.admin_token == "fixture-admin-token"
    assert cfg.catalog_path.is_absolute()


def test_two_samples_rejected(tmp_path):
    path = rewrite(build_config(tmp_path), lambda raw: raw["samples"].pop())
    with pytest.raises(ConfigInvalid) as err:
        load_config(path)
    assert any(p.startswith("samples: expected 3") for p in err.value.problems)


def test_threshold_out_of_range(tmp_path):
    path = rewrite(
        build_config(tmp_path), lambda raw: raw["gate"].__setitem__("threshold", 0.5)
    )
    with pytest.raises(ConfigInvalid) as err:
        load_config(path)
    assert any("gate.threshold" in p for p in err.value.problems)


def test_all_problems_reported_together(tmp_path):
    def wreck(raw):
        raw["port"] = 99999
        raw["gate"]["threshold"] = 6
        raw["admin_token"] = ""
        raw["guidance_prompts"] = ["only one"]
        del raw["samples"]

    path = rewrite(build_config(tmp_path), wreck)
    with pytest.raises(ConfigInvalid) as err:
        load_config(path)
    text = "\n".join(err.value.problems)
    for needle in ("port:", "gate.threshold:", "admin_token:", "guidance_prompts:", "samples:"):
        assert needle in text
    assert len(err.value.problems) >= 5


def test_missing_referenced_files_reported(tmp_path):
    path = build_config(tmp_path)
    (tmp_path / "catalog.jsonl").unlink()
    (tmp_path / "engines" / "text_bert.f32").unlink()
    (tmp_path / "curated.json").unlink()
    with pytest.raises(ConfigInvalid) as err:
        load_config(path)
    text = "\n".join(err.value.problems)
    assert "catalog_path:" in text
    assert "engines.text_bert:" in text
    assert "curated_table_path:" in text


def test_unparseable_file(tmp_path):
    bad = tmp_path / "config.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigInvalid):
        load_config(bad)


def test_relative_paths_resolved_against_config_dir(tmp_path):
    nested = tmp_path / "deep" / "env"
    cfg = load_config(build_config(nested))
    assert cfg.catalog_path == nested / "catalog.jsonl"
    assert cfg.engines["image_resnet"].manifest == nested / "engines" / "image_resnet.json"


def test_bad_engine_kind(tmp_path):
    path = rewrite(
        build_config(tmp_path),
        lambda raw: raw["engines"]["image_resnet"].__setitem__("kind", "magic"),
    )
    with pytest.raises(ConfigInvalid) as err:
        load_config(path)
    assert any("engines.image_resnet: kind" in p for p in err.value.problems)
