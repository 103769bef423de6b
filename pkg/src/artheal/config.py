"""Service configuration loading with collect-all-errors validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigInvalid
from .session import PANAS_NEGATIVE, PANAS_POSITIVE, SAMPLE_LABELS, SampleConfig

ENGINE_KINDS = ("embedding", "pairwise", "lda_model")


@dataclass(frozen=True)
class EngineSource:
    engine_id: str
    kind: str
    manifest: Path | None = None
    blob: Path | None = None
    model_dir: Path | None = None


@dataclass(frozen=True)
class ServiceConfig:
    port: int
    data_dir: Path
    catalog_path: Path
    samples: SampleConfig
    guidance_prompts: tuple[str, str, str]
    gate_threshold: float
    ratings_path: Path | None
    engines: dict[str, EngineSource]
    curated_table_path: Path
    panas_positive: tuple[str, ...]
    panas_negative: tuple[str, ...]
    admin_token: str
    lda: dict = field(default_factory=dict)


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_config(path) -> ServiceConfig:
    """Parse and validate config.json, reporting every problem at once."""
    path = Path(path)
    problems: list[str] = []
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid([f"config {path}: cannot parse ({exc})"])
    if not isinstance(raw, dict):
        raise ConfigInvalid([f"config {path}: expected a JSON object"])
    base = path.parent

    port = raw.get("port", 8000)
    if not (isinstance(port, int) and 1 <= port <= 65535):
        problems.append(f"port: expected integer in 1..65535, got {port!r}")

    data_dir = _resolve(base, raw.get("data_dir", "data"))

    catalog_path = None
    if "catalog_path" not in raw:
        problems.append("catalog_path: required")
    else:
        catalog_path = _resolve(base, raw["catalog_path"])
        if not catalog_path.is_file():
            problems.append(f"catalog_path: {catalog_path} does not exist")

    sample_entries = raw.get("samples", [])
    sample_ids, labels = [], []
    if not isinstance(sample_entries, list) or len(sample_entries) != 3:
        problems.append(f"samples: expected 3, got {len(sample_entries) if isinstance(sample_entries, list) else 'non-list'}")
    for entry in sample_entries if isinstance(sample_entries, list) else []:
        if not isinstance(entry, dict) or "painting_id" not in entry:
            problems.append(f"samples: entry {entry!r} needs painting_id")
            continue
        sample_ids.append(entry["painting_id"])
        label = entry.get("label", "")
        labels.append(label)
        if label not in SAMPLE_LABELS:
            problems.append(f"samples: label {label!r} not one of {SAMPLE_LABELS}")
    if len(set(sample_ids)) != len(sample_ids):
        problems.append("samples: painting ids must be distinct")

    prompts = raw.get("guidance_prompts", [])
    if not isinstance(prompts, list) or len(prompts) != 3:
        problems.append("guidance_prompts: expected exactly 3")
    elif any(not isinstance(p, str) or not p.strip() for p in prompts):
        problems.append("guidance_prompts: entries must be non-empty strings")

    gate = raw.get("gate", {})
    threshold = gate.get("threshold", 2.0) if isinstance(gate, dict) else 2.0
    if not isinstance(gate, dict):
        problems.append("gate: expected an object")
    if not (isinstance(threshold, (int, float)) and 1 < threshold <= 5):
        problems.append(f"gate.threshold: expected a value in (1, 5], got {threshold!r}")
    ratings_path = None
    if isinstance(gate, dict) and gate.get("ratings_path"):
        ratings_path = _resolve(base, gate["ratings_path"])
        if not ratings_path.is_file():
            problems.append(f"gate.ratings_path: {ratings_path} does not exist")

    engines: dict[str, EngineSource] = {}
    for engine_id, src in (raw.get("engines", {}) or {}).items():
        kind = src.get("kind") if isinstance(src, dict) else None
        if kind not in ENGINE_KINDS:
            problems.append(f"engines.{engine_id}: kind must be one of {ENGINE_KINDS}")
            continue
        manifest = blob = model_dir = None
        if kind in ("embedding", "pairwise"):
            for key in ("manifest", "blob"):
                if key not in src:
                    problems.append(f"engines.{engine_id}: {key} required for kind {kind}")
            manifest = _resolve(base, src["manifest"]) if "manifest" in src else None
            blob = _resolve(base, src["blob"]) if "blob" in src else None
            for p in (manifest, blob):
                if p is not None and not p.is_file():
                    problems.append(f"engines.{engine_id}: {p} does not exist")
        else:
            if "model_dir" not in src:
                problems.append(f"engines.{engine_id}: model_dir required for kind lda_model")
            else:
                model_dir = _resolve(base, src["model_dir"])
                if not (model_dir / "model.json").is_file():
                    problems.append(f"engines.{engine_id}: {model_dir} has no model.json")
        engines[engine_id] = EngineSource(
            engine_id=engine_id, kind=kind, manifest=manifest, blob=blob, model_dir=model_dir
        )

    curated_path = None
    if "curated_table_path" not in raw:
        problems.append("curated_table_path: required")
    else:
        curated_path = _resolve(base, raw["curated_table_path"])
        if not curated_path.is_file():
            problems.append(f"curated_table_path: {curated_path} does not exist")

    panas = raw.get("panas", {}) if isinstance(raw.get("panas", {}), dict) else {}
    positive = tuple(panas.get("positive", PANAS_POSITIVE))
    negative = tuple(panas.get("negative", PANAS_NEGATIVE))
    if len(positive) != 5 or len(set(positive)) != 5:
        problems.append("panas.positive: expected 5 distinct items")
    if len(negative) != 5 or len(set(negative)) != 5:
        problems.append("panas.negative: expected 5 distinct items")
    if set(positive) & set(negative):
        problems.append("panas: positive and negative items overlap")

    admin_token = raw.get("admin_token", "")
    if not isinstance(admin_token, str) or not admin_token:
        problems.append("admin_token: required non-empty string")

    if problems:
        raise ConfigInvalid(problems)

    return ServiceConfig(
        port=port,
        data_dir=data_dir,
        catalog_path=catalog_path,
        samples=SampleConfig(samples=tuple(sample_ids), labels=tuple(labels)),
        guidance_prompts=tuple(prompts),
        gate_threshold=float(threshold),
        ratings_path=ratings_path,
        engines=engines,
        curated_table_path=curated_path,
        panas_positive=positive,
        panas_negative=negative,
        admin_token=admin_token,
        lda=dict(raw.get("lda", {})),
    )
