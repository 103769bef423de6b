"""Guided therapy sessions as an event-sourced state machine.

A session walks a fixed order: baseline affect -> preference choice ->
three guided viewings with written reflections -> post affect ->
quality ratings -> completed. Every step appends events to an
append-only log; live operations and log replay share one event
applicator, so a replayed session is identical to the original by
construction.

The full happy path emits exactly 11 events: session_created,
group_assigned, baseline_recorded, preference_recorded,
recommendations_fixed, reflection_recorded (x3), post_affect_recorded,
quality_recorded, session_completed.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from .catalog import Catalog
from .errors import (
    DuplicateParticipant,
    EmptyReflection,
    InvalidTransition,
    MalformedRecord,
    NotASample,
    OutOfRangeResponse,
    UnknownSession,
)
from .registry import EngineRegistry
from .similarity import RankedList

# Pick-A-Mood categories: the instrument's eight moods plus neutral,
# grouped by valence. The grouping drives all mood-transition analytics.
MOODS_POSITIVE = ("excited", "cheerful", "relaxed", "calm")
MOODS_NEGATIVE = ("tense", "irritated", "sad", "bored")
MOOD_NEUTRAL = "neutral"
ALL_MOODS = MOODS_POSITIVE + MOODS_NEGATIVE + (MOOD_NEUTRAL,)

# Ten-item PANAS short form. afraid and scared are load-bearing items:
# downstream analysis reads them by name.
PANAS_POSITIVE = ("inspired", "determined", "attentive", "active", "strong")
PANAS_NEGATIVE = ("afraid", "scared", "nervous", "upset", "distressed")

GROUPS = ("expert", "visual", "multimodal")
GROUP_ENGINE = {"expert": "expert", "visual": "image_resnet", "multimodal": "fusion_blip"}

SAMPLE_LABELS = ("calmness", "restoration", "cheerfulness")

ST_CREATED = "created"
ST_BASELINE = "baseline_done"
ST_VIEWING = ("viewing_1", "viewing_2", "viewing_3")
ST_REFLECTIONS = "reflections_done"
ST_POST = "post_affect_done"
ST_RATINGS = "ratings_done"
ST_COMPLETED = "completed"

EV_CREATED = "session_created"
EV_GROUP = "group_assigned"
EV_BASELINE = "baseline_recorded"
EV_PREFERENCE = "preference_recorded"
EV_RECS = "recommendations_fixed"
EV_REFLECTION = "reflection_recorded"
EV_POST = "post_affect_recorded"
EV_QUALITY = "quality_recorded"
EV_COMPLETED = "session_completed"

QUALITY_VARIABLES = ("accuracy", "diversity", "novelty", "serendipity", "immersion", "engagement")


def now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class SampleConfig:
    """The three fixed elicitation paintings with their affect labels."""

    samples: tuple[str, str, str]
    labels: tuple[str, str, str]

    def validate(self, catalog: Catalog) -> list[str]:
        problems = []
        if len(self.samples) != 3 or len(set(self.samples)) != 3:
            problems.append("samples: expected 3 distinct painting ids")
        for pid in self.samples:
            if pid not in catalog:
                problems.append(f"samples: painting {pid!r} not in catalog")
        if len(self.labels) != 3:
            problems.append("labels: expected 3")
        for label in self.labels:
            if label not in SAMPLE_LABELS:
                problems.append(f"labels: {label!r} not one of {SAMPLE_LABELS}")
        return problems


@dataclass(frozen=True)
class AffectAssessment:
    """One Pick-A-Mood choice plus the 11 PANAS responses (10 + neutral)."""

    mood: str
    panas: dict[str, int]
    neutral_item: int

    def validate(self, positive=PANAS_POSITIVE, negative=PANAS_NEGATIVE) -> None:
        if self.mood not in ALL_MOODS:
            raise OutOfRangeResponse(f"mood {self.mood!r} is not a known category", "mood")
        expected = set(positive) | set(negative)
        missing = sorted(expected - set(self.panas))
        extra = sorted(set(self.panas) - expected)
        if missing or extra:
            raise OutOfRangeResponse(
                f"panas items wrong: missing {missing}, unexpected {extra}",
                {"missing": missing, "unexpected": extra},
            )
        for item, value in self.panas.items():
            if not (isinstance(value, int) and 1 <= value <= 5):
                raise OutOfRangeResponse(f"panas item {item!r} = {value!r} not in 1..5", item)
        if not (isinstance(self.neutral_item, int) and 1 <= self.neutral_item <= 5):
            raise OutOfRangeResponse(
                f"neutral item = {self.neutral_item!r} not in 1..5", "neutral_item"
            )


@dataclass(frozen=True)
class QualityRatings:
    accuracy: int
    diversity: int
    novelty: int
    serendipity: int
    immersion: int
    engagement: int

    def validate(self) -> None:
        for name in QUALITY_VARIABLES:
            value = getattr(self, name)
            if not (isinstance(value, int) and 1 <= value <= 5):
                raise OutOfRangeResponse(f"{name} = {value!r} not in 1..5", name)

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in QUALITY_VARIABLES}


def validate_phq4(items) -> tuple[int, int, int, int]:
    items = tuple(items)
    if len(items) != 4:
        raise OutOfRangeResponse(f"phq4 expects 4 items, got {len(items)}", "phq4")
    for i, value in enumerate(items, start=1):
        if not (isinstance(value, int) and 0 <= value <= 3):
            raise OutOfRangeResponse(f"phq4 item {i} = {value!r} not in 0..3", f"phq4[{i}]")
    return items


@dataclass(frozen=True)
class Event:
    session_id: str
    seq: int
    timestamp: str
    event_type: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "session_id": self.session_id,
                "seq": self.seq,
                "timestamp": self.timestamp,
                "event_type": self.event_type,
                "payload": self.payload,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class TherapySession:
    session_id: str
    participant_id: str
    group: str | None = None
    state: str = ST_CREATED
    baseline: AffectAssessment | None = None
    phq4: tuple[int, int, int, int] | None = None
    chosen_sample: str | None = None
    recommendations: RankedList | None = None
    prompts: tuple[str, ...] = ()
    reflections: tuple[str, ...] = ()
    post: AffectAssessment | None = None
    quality: QualityRatings | None = None
    completion_index: int | None = None
    events: tuple[Event, ...] = ()

    @property
    def engine_id(self) -> str | None:
        return GROUP_ENGINE.get(self.group)


def _affect_from_payload(p: dict) -> AffectAssessment:
    return AffectAssessment(
        mood=p["mood"],
        panas={str(k): int(v) for k, v in p["panas"].items()},
        neutral_item=int(p["neutral_item"]),
    )


def apply_event(s: TherapySession | None, e: Event) -> TherapySession:
    """Pure state updater shared by live operations and log replay.

    Trusts the event; validation happens before events are minted.
    """
    if e.event_type == EV_CREATED:
        assert s is None
        return TherapySession(
            session_id=e.session_id, participant_id=e.payload["participant_id"], events=(e,)
        )
    assert s is not None and e.session_id == s.session_id
    assert e.seq == len(s.events) + 1, "event sequence gap"
    s = replace(s, events=s.events + (e,))
    p = e.payload
    if e.event_type == EV_GROUP:
        return replace(s, group=p["group"])
    if e.event_type == EV_BASELINE:
        return replace(
            s,
            baseline=_affect_from_payload(p),
            phq4=tuple(int(v) for v in p["phq4"]),
            state=ST_BASELINE,
        )
    if e.event_type == EV_PREFERENCE:
        return replace(s, chosen_sample=p["chosen"])
    if e.event_type == EV_RECS:
        recs = RankedList(
            anchor_id=p["anchor"],
            entries=tuple((str(pid), float(score)) for pid, score in p["entries"]),
            r=int(p["r"]),
        )
        return replace(s, recommendations=recs, prompts=tuple(p["prompts"]), state=ST_VIEWING[0])
    if e.event_type == EV_REFLECTION:
        i = int(p["i"])
        state = ST_VIEWING[i] if i < 3 else ST_REFLECTIONS
        return replace(s, reflections=s.reflections + (p["text"],), state=state)
    if e.event_type == EV_POST:
        return replace(s, post=_affect_from_payload(p), state=ST_POST)
    if e.event_type == EV_QUALITY:
        return replace(s, quality=QualityRatings(**{k: int(v) for k, v in p["ratings"].items()}), state=ST_RATINGS)
    if e.event_type == EV_COMPLETED:
        return replace(s, completion_index=int(p["completion_index"]), state=ST_COMPLETED)
    raise MalformedRecord(f"unknown event type {e.event_type!r}")


def _require_state(s: TherapySession, expected: str, op: str) -> None:
    if s.state != expected:
        raise InvalidTransition(
            f"cannot {op} in state {s.state} (requires {expected})",
            {"state": s.state, "requires": expected},
        )


def _mint(s: TherapySession, event_type: str, payload: dict, clock) -> Event:
    return Event(
        session_id=s.session_id,
        seq=len(s.events) + 1,
        timestamp=clock(),
        event_type=event_type,
        payload=payload,
    )


def new_session(session_id: str, participant_id: str, group: str, clock=now_rfc3339) -> TherapySession:
    assert group in GROUPS
    s = apply_event(
        None,
        Event(session_id, 1, clock(), EV_CREATED, {"participant_id": participant_id}),
    )
    return apply_event(s, _mint(s, EV_GROUP, {"group": group}, clock))


def record_baseline(
    s: TherapySession,
    a: AffectAssessment,
    phq4,
    clock=now_rfc3339,
    panas=(PANAS_POSITIVE, PANAS_NEGATIVE),
) -> TherapySession:
    _require_state(s, ST_CREATED, "record baseline")
    a.validate(*panas)
    items = validate_phq4(phq4)
    payload = {
        "mood": a.mood,
        "panas": dict(a.panas),
        "neutral_item": a.neutral_item,
        "phq4": list(items),
    }
    return apply_event(s, _mint(s, EV_BASELINE, payload, clock))


def record_preference(
    s: TherapySession,
    chosen: str,
    registry: EngineRegistry,
    sample_config: SampleConfig,
    prompts: tuple[str, str, str],
    r: int = 3,
    clock=now_rfc3339,
) -> TherapySession:
    """Fix the recommendations for the session's group engine.

    The ranked list is computed once, here, and never mutated after.
    """
    _require_state(s, ST_BASELINE, "record preference")
    if chosen not in sample_config.samples:
        raise NotASample(f"painting {chosen!r} is not one of the sample paintings", chosen)
    recs = registry.recommend(GROUP_ENGINE[s.group], chosen, r=r)
    s = apply_event(s, _mint(s, EV_PREFERENCE, {"chosen": chosen}, clock))
    payload = {
        "anchor": recs.anchor_id,
        "engine_id": GROUP_ENGINE[s.group],
        "entries": [[pid, score] for pid, score in recs.entries],
        "r": recs.r,
        "prompts": list(prompts),
    }
    return apply_event(s, _mint(s, EV_RECS, payload, clock))


def record_reflection(s: TherapySession, i: int, text: str, clock=now_rfc3339) -> TherapySession:
    if i not in (1, 2, 3):
        raise InvalidTransition(f"no viewing position {i}", {"i": i})
    _require_state(s, ST_VIEWING[i - 1], f"record reflection {i}")
    if not text or not text.strip():
        raise EmptyReflection(f"reflection {i} is empty", i)
    payload = {"i": i, "text": text, "word_count": len(text.split())}
    return apply_event(s, _mint(s, EV_REFLECTION, payload, clock))


def record_post_affect(
    s: TherapySession,
    a: AffectAssessment,
    clock=now_rfc3339,
    panas=(PANAS_POSITIVE, PANAS_NEGATIVE),
) -> TherapySession:
    _require_state(s, ST_REFLECTIONS, "record post affect")
    a.validate(*panas)
    payload = {"mood": a.mood, "panas": dict(a.panas), "neutral_item": a.neutral_item}
    return apply_event(s, _mint(s, EV_POST, payload, clock))


def record_quality(
    s: TherapySession, q: QualityRatings, completion_index: int, clock=now_rfc3339
) -> TherapySession:
    """Store the six quality ratings and complete the session."""
    _require_state(s, ST_POST, "record quality ratings")
    q.validate()
    s = apply_event(s, _mint(s, EV_QUALITY, {"ratings": q.as_dict()}, clock))
    return apply_event(s, _mint(s, EV_COMPLETED, {"completion_index": completion_index}, clock))


class SessionStore:
    """Holds sessions, allocates groups, and persists the event log.

    Mutations are serialized per session; creation is serialized
    globally so allocation and duplicate checks stay race-free.
    """

    def __init__(
        self,
        registry,
        sample_config,
        prompts,
        clock=now_rfc3339,
        log_path=None,
        panas=(PANAS_POSITIVE, PANAS_NEGATIVE),
    ):
        self.registry = registry
        self.sample_config = sample_config
        self.prompts = tuple(prompts)
        self.panas = (tuple(panas[0]), tuple(panas[1]))
        self.clock = clock
        self.log_path = Path(log_path) if log_path else None
        self.sessions: dict[str, TherapySession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.Lock()
        self._completions = 0
        # A restart must not forget sessions already on disk: ids are
        # allocated by count and completion indices must keep increasing,
        # so both are rebuilt from the log before any new writes.
        if self.log_path is not None and self.log_path.exists() and self.log_path.stat().st_size:
            self.sessions = replay_log(self.log_path)
            self._locks = {sid: threading.Lock() for sid in self.sessions}
            self._completions = max(
                (s.completion_index for s in self.sessions.values() if s.completion_index), default=0
            )

    def _append_events(self, old: TherapySession | None, new: TherapySession) -> None:
        if self.log_path is None:
            return
        start = len(old.events) if old else 0
        with open(self.log_path, "a", encoding="utf-8") as fh:
            for event in new.events[start:]:
                fh.write(event.to_json() + "\n")
            fh.flush()

    def group_counts(self) -> dict[str, int]:
        counts = {g: 0 for g in GROUPS}
        for s in self.sessions.values():
            counts[s.group] += 1
        return counts

    def create_session(self, participant_id: str) -> TherapySession:
        with self._store_lock:
            for s in self.sessions.values():
                if s.participant_id == participant_id:
                    raise DuplicateParticipant(
                        f"participant {participant_id!r} already has a session", participant_id
                    )
            counts = self.group_counts()
            group = min(GROUPS, key=lambda g: (counts[g], GROUPS.index(g)))
            session_id = f"S-{len(self.sessions) + 1:04d}"
            s = new_session(session_id, participant_id, group, self.clock)
            self.sessions[session_id] = s
            self._locks[session_id] = threading.Lock()
            self._append_events(None, s)
            return s

    def get(self, session_id: str) -> TherapySession:
        if session_id not in self.sessions:
            raise UnknownSession(f"no session {session_id!r}", session_id)
        return self.sessions[session_id]

    def _update(self, session_id: str, fn) -> TherapySession:
        lock = self._locks.get(session_id)
        if lock is None:
            raise UnknownSession(f"no session {session_id!r}", session_id)
        with lock:
            old = self.sessions[session_id]
            new = fn(old)
            self.sessions[session_id] = new
            self._append_events(old, new)
            return new

    def record_baseline(self, session_id, a, phq4):
        return self._update(
            session_id, lambda s: record_baseline(s, a, phq4, self.clock, self.panas)
        )

    def record_preference(self, session_id, chosen):
        return self._update(
            session_id,
            lambda s: record_preference(
                s, chosen, self.registry, self.sample_config, self.prompts, clock=self.clock
            ),
        )

    def record_reflection(self, session_id, i, text):
        return self._update(session_id, lambda s: record_reflection(s, i, text, self.clock))

    def record_post_affect(self, session_id, a):
        return self._update(
            session_id, lambda s: record_post_affect(s, a, self.clock, self.panas)
        )

    def record_quality(self, session_id, q):
        def step(s):
            with self._store_lock:
                self._completions += 1
                index = self._completions
            return record_quality(s, q, index, self.clock)

        return self._update(session_id, step)

    def completed_sessions(self) -> list[TherapySession]:
        done = [s for s in self.sessions.values() if s.state == ST_COMPLETED]
        return sorted(done, key=lambda s: s.completion_index)


def read_events(log_path) -> list[Event]:
    events = []
    with open(log_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                events.append(
                    Event(
                        session_id=rec["session_id"],
                        seq=int(rec["seq"]),
                        timestamp=rec["timestamp"],
                        event_type=rec["event_type"],
                        payload=rec["payload"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(f"event log line {lineno}: {exc}", lineno)
    return events


def replay_events(events: list[Event]) -> dict[str, TherapySession]:
    """Rebuild all sessions from their persisted events."""
    order: list[str] = []
    by_session: dict[str, list[Event]] = {}
    for e in events:
        if e.session_id not in by_session:
            by_session[e.session_id] = []
            order.append(e.session_id)
        by_session[e.session_id].append(e)
    sessions: dict[str, TherapySession] = {}
    for sid in order:
        s = None
        for e in sorted(by_session[sid], key=lambda ev: ev.seq):
            s = apply_event(s, e)
        sessions[sid] = s
    return sessions


def replay_log(log_path) -> dict[str, TherapySession]:
    return replay_events(read_events(log_path))
