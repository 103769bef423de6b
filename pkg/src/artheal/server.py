"""HTTP service: patient session flow plus admin gate and analytics.

The server is a thin shell: every rule lives in the domain modules and
surfaces here as an HTTP status. Domain errors map to structured
bodies {error_code, message, detail} with 409 for protocol conflicts,
422 for value problems, and 404 for unknown ids. Mutating endpoints
accept a client-generated idempotency_key; replaying the same key with
the same payload returns the original response, and reusing a key with
a different payload is a conflict.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from pathlib import Path

from fastapi import FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse

from .analytics import build_report
from .catalog import Catalog, ingest_catalog
from .config import ServiceConfig
from .errors import (
    DomainError,
    DuplicateParticipant,
    EmptyInput,
    EmptyReflection,
    EngineNotEligible,
    IdempotencyConflict,
    InvalidTransition,
    MalformedRecord,
    NotASample,
    OutOfRangeResponse,
    UnknownAnchor,
    UnknownEngine,
    UnknownSample,
    UnknownSession,
)
from .registry import (
    STATUS_ELIGIBLE,
    EngineRegistry,
    ExpertRating,
    load_curated_table,
    load_ratings,
)
from .session import (
    GROUP_ENGINE,
    MOOD_NEUTRAL,
    MOODS_NEGATIVE,
    MOODS_POSITIVE,
    QUALITY_VARIABLES,
    AffectAssessment,
    QualityRatings,
    SessionStore,
)
from .similarity import cosine_matrix, load_embeddings, load_pairwise
from .text_engines import lda_embeddings, load_lda

log = logging.getLogger(__name__)

STATUS_BY_ERROR = {
    UnknownSession: 404,
    UnknownAnchor: 404,
    UnknownSample: 404,
    UnknownEngine: 404,
    InvalidTransition: 409,
    DuplicateParticipant: 409,
    IdempotencyConflict: 409,
    EngineNotEligible: 409,
    OutOfRangeResponse: 422,
    EmptyReflection: 422,
    NotASample: 422,
    MalformedRecord: 422,
    EmptyInput: 422,
}


def build_registry(config: ServiceConfig, catalog: Catalog) -> EngineRegistry:
    """Load engine artifacts and register them; gating is the caller's step."""
    registry = EngineRegistry(catalog, config.samples.samples)
    for engine_id, src in config.engines.items():
        if src.kind == "embedding":
            e = load_embeddings(src.manifest, src.blob, catalog)
            registry.register_similarity(cosine_matrix(e))
        elif src.kind == "pairwise":
            registry.register_similarity(load_pairwise(src.manifest, src.blob, catalog))
        else:
            model = load_lda(src.model_dir)
            registry.register_similarity(cosine_matrix(lda_embeddings(model, engine_id)))
    registry.register_curated(load_curated_table(config.curated_table_path, catalog))
    return registry


def _fingerprint(payload: dict) -> str:
    scrubbed = {k: v for k, v in payload.items() if k != "idempotency_key"}
    return hashlib.sha256(json.dumps(scrubbed, sort_keys=True).encode("utf-8")).hexdigest()


class Idempotency:
    """Replay cache keyed by (scope, client key)."""

    def __init__(self):
        self._seen: dict[tuple[str, str], tuple[str, int, dict]] = {}
        self._lock = threading.Lock()

    def check(self, scope: str, payload: dict):
        key = payload.get("idempotency_key")
        if not key:
            return None, None
        fp = _fingerprint(payload)
        with self._lock:
            hit = self._seen.get((scope, key))
        if hit is None:
            return (scope, key, fp), None
        stored_fp, status, body = hit
        if stored_fp != fp:
            raise IdempotencyConflict(
                f"idempotency key {key!r} reused with a different payload",
                {"scope": scope, "key": key},
            )
        return None, JSONResponse(status_code=status, content=body)

    def store(self, token, status: int, body: dict) -> None:
        if token is None:
            return
        scope, key, fp = token
        with self._lock:
            self._seen[(scope, key)] = (fp, status, body)


async def read_json(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception as exc:
        raise MalformedRecord(f"request body is not valid JSON: {exc}")
    if not isinstance(body, dict):
        raise MalformedRecord("request body must be a JSON object")
    return body


def parse_affect(body: dict) -> AffectAssessment:
    for field in ("mood", "panas", "neutral_item"):
        if field not in body:
            raise OutOfRangeResponse(f"missing field {field!r}", field)
    if not isinstance(body["panas"], dict):
        raise OutOfRangeResponse("panas must be an object of item -> response", "panas")
    return AffectAssessment(
        mood=body["mood"], panas=dict(body["panas"]), neutral_item=body["neutral_item"]
    )


def parse_quality(body: dict) -> QualityRatings:
    missing = [v for v in QualityRatings.__dataclass_fields__ if v not in body]
    if missing:
        raise OutOfRangeResponse(f"missing quality ratings {missing}", missing)
    return QualityRatings(**{k: body[k] for k in QualityRatings.__dataclass_fields__})


def create_app(config: ServiceConfig) -> FastAPI:
    catalog = ingest_catalog(config.catalog_path)
    registry = build_registry(config, catalog)
    config.data_dir.mkdir(parents=True, exist_ok=True)
    store = SessionStore(
        registry=registry,
        sample_config=config.samples,
        prompts=config.guidance_prompts,
        log_path=config.data_dir / "events.jsonl",
        panas=(config.panas_positive, config.panas_negative),
    )
    gate_decisions: list = []
    if config.ratings_path:
        gate_decisions = registry.gate_all(
            load_ratings(config.ratings_path), config.gate_threshold
        )
    # Sessions are allocated to groups round-robin, so every group's engine
    # must already be eligible; refusing here beats failing mid-session.
    for group, engine_id in GROUP_ENGINE.items():
        desc = registry.get(engine_id)
        if desc.status != STATUS_ELIGIBLE:
            raise EngineNotEligible(
                f"group {group!r} is served by {engine_id!r} which has status {desc.status}",
                engine_id,
            )
    idem = Idempotency()
    app = FastAPI(title="artheal", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.registry = registry

    def error_body(exc: DomainError) -> dict:
        return {"error_code": exc.code, "message": str(exc), "detail": exc.detail}

    @app.exception_handler(DomainError)
    async def domain_error_handler(request: Request, exc: DomainError):
        status = next(
            (code for cls, code in STATUS_BY_ERROR.items() if isinstance(exc, cls)), 400
        )
        return JSONResponse(status_code=status, content=error_body(exc))

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"error_code": "validation", "message": "invalid request", "detail": exc.errors()},
        )

    def image_url(pid: str) -> str:
        return f"/paintings/{pid}/image"

    def painting_view(pid: str) -> dict:
        p = catalog.get(pid)
        return {
            "painting_id": p.id,
            "title": p.title,
            "artist": p.artist,
            "date": p.date,
            "image_url": image_url(p.id),
        }

    NEXT_STEP = {
        "created": "baseline",
        "baseline_done": "preference",
        "viewing_1": "reflection/1",
        "viewing_2": "reflection/2",
        "viewing_3": "reflection/3",
        "reflections_done": "post-affect",
        "post_affect_done": "ratings",
        "completed": None,
    }

    def session_view(s) -> dict:
        recommendations = None
        if s.recommendations is not None:
            recommendations = [
                {**painting_view(pid), "score": score, "prompt": s.prompts[i]}
                for i, (pid, score) in enumerate(s.recommendations.entries)
            ]
        return {
            "session_id": s.session_id,
            "participant_id": s.participant_id,
            "group": s.group,
            "state": s.state,
            "next_step": NEXT_STEP[s.state],
            "chosen_sample": s.chosen_sample,
            "recommendations": recommendations,
            "reflections": list(s.reflections),
            "completion_index": s.completion_index,
            "event_count": len(s.events),
        }

    def mutate(scope: str, body: dict, fn, status: int = 200):
        token, replay = idem.check(scope, body)
        if replay is not None:
            return replay
        result = session_view(fn())
        idem.store(token, status, result)
        return JSONResponse(status_code=status, content=result)

    @app.get("/samples")
    def get_samples():
        # instruments block lets clients render forms without hardcoding
        # item vocabularies; all scoring still happens server-side
        return {
            "samples": [
                {**painting_view(pid), "label": label}
                for pid, label in zip(config.samples.samples, config.samples.labels)
            ],
            "prompts": list(config.guidance_prompts),
            "instruments": {
                "moods": {
                    "positive": list(MOODS_POSITIVE),
                    "negative": list(MOODS_NEGATIVE),
                    "neutral": MOOD_NEUTRAL,
                },
                "panas_items": list(config.panas_positive) + list(config.panas_negative),
                "panas_range": [1, 5],
                "neutral_range": [1, 5],
                "phq4_items": 4,
                "phq4_range": [0, 3],
                "quality_variables": list(QUALITY_VARIABLES),
                "quality_range": [1, 5],
            },
        }

    @app.get("/paintings/{pid}/image")
    def get_image(pid: str):
        if pid not in catalog:
            raise UnknownAnchor(f"no painting {pid!r}", pid)
        rel = catalog.get(pid).image_path
        image = (Path(config.catalog_path).parent / rel) if rel else None
        if image is None or not image.is_file():
            raise UnknownAnchor(f"painting {pid!r} has no image on disk", pid)
        return FileResponse(image)

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await read_json(request)
        if not isinstance(body, dict) or not body.get("participant_id"):
            raise OutOfRangeResponse("participant_id is required", "participant_id")
        return mutate(
            "sessions", body, lambda: store.create_session(body["participant_id"]), status=201
        )

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return session_view(store.get(sid))

    @app.post("/sessions/{sid}/baseline")
    async def post_baseline(sid: str, request: Request):
        store.get(sid)  # unknown session outranks payload validation
        body = await read_json(request)
        a = parse_affect(body)
        phq4 = body.get("phq4")
        if phq4 is None:
            raise OutOfRangeResponse("phq4 responses are required", "phq4")
        return mutate(f"{sid}:baseline", body, lambda: store.record_baseline(sid, a, phq4))

    @app.post("/sessions/{sid}/preference")
    async def post_preference(sid: str, request: Request):
        store.get(sid)
        body = await read_json(request)
        if "chosen" not in body:
            raise OutOfRangeResponse("chosen painting id is required", "chosen")
        return mutate(f"{sid}:preference", body, lambda: store.record_preference(sid, body["chosen"]))

    @app.post("/sessions/{sid}/reflection/{i}")
    async def post_reflection(sid: str, i: int, request: Request):
        store.get(sid)
        body = await read_json(request)
        return mutate(
            f"{sid}:reflection:{i}",
            body,
            lambda: store.record_reflection(sid, i, body.get("text", "")),
        )

    @app.post("/sessions/{sid}/post-affect")
    async def post_post_affect(sid: str, request: Request):
        store.get(sid)
        body = await read_json(request)
        a = parse_affect(body)
        return mutate(f"{sid}:post-affect", body, lambda: store.record_post_affect(sid, a))

    @app.post("/sessions/{sid}/ratings")
    async def post_ratings(sid: str, request: Request):
        store.get(sid)
        body = await read_json(request)
        q = parse_quality(body)
        return mutate(f"{sid}:ratings", body, lambda: store.record_quality(sid, q))

    def require_admin(token: str | None) -> None:
        if token != config.admin_token:
            raise PermissionError("admin token required")

    @app.exception_handler(PermissionError)
    async def permission_handler(request: Request, exc: PermissionError):
        return JSONResponse(
            status_code=401,
            content={"error_code": "unauthorized", "message": str(exc), "detail": None},
        )

    @app.get("/engines")
    def get_engines(x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        # previews bypass the gate: experts rate output before eligibility
        return {
            "engines": [
                {
                    "engine_id": d.engine_id,
                    "kind": d.kind,
                    "status": d.status,
                    "m": d.matrix.m if d.matrix is not None else None,
                    "previews": {
                        sid: [
                            dict(painting_view(pid), score=score)
                            for pid, score in registry.preview(d.engine_id, sid).entries
                        ]
                        for sid in config.samples.samples
                    },
                }
                for d in registry.descriptors()
            ]
        }

    @app.post("/gate/ratings")
    async def post_gate_ratings(request: Request, x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        body = await read_json(request)
        records = body.get("ratings", [])
        try:
            ratings = [
                ExpertRating(
                    expert_id=r["expert_id"],
                    engine_id=r["engine_id"],
                    sample_id=r["sample_id"],
                    rating=r["rating"],
                    rank=r.get("rank"),
                    comment=r.get("comment", ""),
                )
                for r in records
            ]
        except (KeyError, TypeError) as exc:
            raise MalformedRecord(f"bad rating record: {exc}")
        threshold = body.get("threshold", config.gate_threshold)
        decisions = registry.gate_all(ratings, threshold)
        gate_decisions.clear()
        gate_decisions.extend(decisions)
        return {"decisions": [d.as_dict() for d in decisions]}

    @app.get("/gate/decisions")
    def get_gate_decisions(x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        return {"decisions": [d.as_dict() for d in gate_decisions]}

    @app.get("/analytics/summary")
    def get_summary(x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        done = store.completed_sessions()
        if not done:
            return {"session_count": 0, "note": "no completed sessions yet"}
        return build_report(done)

    return app
