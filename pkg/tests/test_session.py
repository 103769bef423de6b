import numpy as np
import pytest

from artheal.catalog import Catalog, Painting
from artheal.errors import (
    DuplicateParticipant,
    EmptyReflection,
    EngineNotEligible,
    InvalidTransition,
    NotASample,
    OutOfRangeResponse,
    UnknownSession,
)
from artheal.registry import CuratedTable, EngineRegistry, ExpertRating
from artheal.session import (
    GROUPS,
    AffectAssessment,
    QualityRatings,
    SampleConfig,
    SessionStore,
    new_session,
    record_baseline,
    record_post_affect,
    record_preference,
    record_quality,
    record_reflection,
    replay_log,
)
from artheal.similarity import SimilarityMatrix

from fixture_build import GUIDANCE_PROMPTS, LABELS, SAMPLES

PHQ4_OK = (1, 0, 2, 0)


def make_clock():
    count = [0]

    def clock():
        count[0] += 1
        return f"2026-08-14T00:00:00.{count[0]:06d}Z"

    return clock


def affect(mood="sad", value=2, neutral=3):
    items = {item: value for item in
             ("inspired", "determined", "attentive", "active", "strong",
              "afraid", "scared", "nervous", "upset", "distressed")}
    return AffectAssessment(mood=mood, panas=items, neutral_item=neutral)


def quality(value=4):
    return QualityRatings(*([value] * 6))


def full_registry(m=30):
    ids = [f"P-{i:03d}" for i in range(1, m + 1)]
    cat = Catalog(
        paintings=tuple(Painting(id=pid, title=pid) for pid in ids),
        index_by_id={pid: i for i, pid in enumerate(ids)},
    )
    reg = EngineRegistry(cat, SAMPLES)
    rng = np.random.default_rng(8)
    for engine_id in ("image_resnet", "fusion_blip"):
        a = rng.uniform(size=(m, m))
        a = (a + a.T) / 2
        np.fill_diagonal(a, 1.0)
        reg.register_similarity(
            SimilarityMatrix(engine_id=engine_id, painting_ids=tuple(ids), a=a, kind="matching_score")
        )
    reg.register_curated(
        CuratedTable(
            entries={
                "P-002": ("P-001", "P-003", "P-004"),
                "P-014": ("P-005", "P-006", "P-007"),
                "P-025": ("P-008", "P-009", "P-010"),
            }
        )
    )
    ratings = [
        ExpertRating("E1", eid, s, rating=4)
        for eid in ("image_resnet", "fusion_blip")
        for s in SAMPLES
    ]
    reg.gate_all(ratings)
    return reg


def make_store(tmp_path=None, registry=None):
    return SessionStore(
        registry=registry or full_registry(),
        sample_config=SampleConfig(samples=SAMPLES, labels=LABELS),
        prompts=GUIDANCE_PROMPTS,
        clock=make_clock(),
        log_path=(tmp_path / "events.jsonl") if tmp_path else None,
    )


def run_full_session(store, participant, mood_pre="sad", mood_post="cheerful", q=None):
    s = store.create_session(participant)
    store.record_baseline(s.session_id, affect(mood_pre), PHQ4_OK)
    store.record_preference(s.session_id, "P-002")
    for i in (1, 2, 3):
        store.record_reflection(s.session_id, i, f"I felt calm and curious during viewing {i}.")
    store.record_post_affect(s.session_id, affect(mood_post, value=3))
    return store.record_quality(s.session_id, q or quality())


def test_first_participant_gets_expert_group():
    store = make_store()
    assert store.create_session("u1").group == "expert"


def test_150_participants_split_evenly():
    store = make_store()
    for i in range(150):
        store.create_session(f"u{i}")
    assert store.group_counts() == {"expert": 50, "visual": 50, "multimodal": 50}


def test_group_balance_after_any_prefix():
    store = make_store()
    for i in range(40):
        store.create_session(f"u{i}")
        counts = store.group_counts().values()
        assert max(counts) - min(counts) <= 1


def test_duplicate_participant_rejected():
    store = make_store()
    store.create_session("u1")
    with pytest.raises(DuplicateParticipant):
        store.create_session("u1")


def test_happy_path_emits_eleven_events():
    store = make_store()
    s = run_full_session(store, "u1")
    assert s.state == "completed"
    assert len(s.events) == 11
    assert [e.event_type for e in s.events] == [
        "session_created",
        "group_assigned",
        "baseline_recorded",
        "preference_recorded",
        "recommendations_fixed",
        "reflection_recorded",
        "reflection_recorded",
        "reflection_recorded",
        "post_affect_recorded",
        "quality_recorded",
        "session_completed",
    ]
    assert [e.seq for e in s.events] == list(range(1, 12))
    assert s.completion_index == 1
    assert len(s.recommendations.entries) == 3
    assert s.prompts == GUIDANCE_PROMPTS


def test_completion_counter_increases():
    store = make_store()
    first = run_full_session(store, "u1")
    second = run_full_session(store, "u2")
    assert (first.completion_index, second.completion_index) == (1, 2)


def test_state_machine_soundness_exhaustive():
    # From every reachable state, exactly the canonical next operation
    # advances and every other operation raises InvalidTransition, so
    # completed is reachable only via the canonical order (covers all
    # call sequences, not just length-8 prefixes).
    registry = full_registry()
    samples = SampleConfig(samples=SAMPLES, labels=LABELS)
    clock = make_clock()
    ops = {
        "baseline": lambda s: record_baseline(s, affect(), PHQ4_OK, clock),
        "preference": lambda s: record_preference(
            s, "P-002", registry, samples, GUIDANCE_PROMPTS, clock=clock
        ),
        "reflect1": lambda s: record_reflection(s, 1, "calm words here", clock),
        "reflect2": lambda s: record_reflection(s, 2, "calm words here", clock),
        "reflect3": lambda s: record_reflection(s, 3, "calm words here", clock),
        "post": lambda s: record_post_affect(s, affect("calm"), clock),
        "quality": lambda s: record_quality(s, quality(), 1, clock),
    }
    canonical = ["baseline", "preference", "reflect1", "reflect2", "reflect3", "post", "quality"]
    s = new_session("S-0001", "u1", "visual", clock)
    visited = [s.state]
    for step, name in enumerate(canonical):
        for other in ops:
            if other == name:
                continue
            with pytest.raises(InvalidTransition):
                ops[other](s)
        s = ops[name](s)
        visited.append(s.state)
    assert s.state == "completed"
    for name in ops:
        with pytest.raises(InvalidTransition):
            ops[name](s)
    assert visited == [
        "created",
        "baseline_done",
        "viewing_1",
        "viewing_2",
        "viewing_3",
        "reflections_done",
        "post_affect_done",
        "completed",
    ]


def test_panas_out_of_range_rejected():
    store = make_store()
    s = store.create_session("u1")
    bad = affect()
    bad = AffectAssessment(mood=bad.mood, panas=dict(bad.panas, afraid=6), neutral_item=3)
    with pytest.raises(OutOfRangeResponse):
        store.record_baseline(s.session_id, bad, PHQ4_OK)


def test_unknown_mood_rejected():
    with pytest.raises(OutOfRangeResponse):
        affect(mood="grumpy").validate()


def test_missing_panas_item_rejected():
    a = affect()
    panas = dict(a.panas)
    del panas["afraid"]
    with pytest.raises(OutOfRangeResponse) as exc:
        AffectAssessment(mood="sad", panas=panas, neutral_item=3).validate()
    assert "afraid" in str(exc.value)


def test_phq4_out_of_range():
    store = make_store()
    s = store.create_session("u1")
    with pytest.raises(OutOfRangeResponse):
        store.record_baseline(s.session_id, affect(), (0, 0, 4, 0))


def test_preference_requires_sample_painting():
    store = make_store()
    s = store.create_session("u1")
    store.record_baseline(s.session_id, affect(), PHQ4_OK)
    with pytest.raises(NotASample):
        store.record_preference(s.session_id, "P-001")


def test_ineligible_engine_blocks_preference_without_advancing():
    registry = full_registry()
    ratings = [ExpertRating("E1", "image_resnet", s, rating=1) for s in SAMPLES]
    registry.gate_all(ratings)
    store = make_store(registry=registry)
    store.create_session("u-expert")
    s = store.create_session("u-visual")
    assert s.group == "visual"
    store.record_baseline(s.session_id, affect(), PHQ4_OK)
    with pytest.raises(EngineNotEligible):
        store.record_preference(s.session_id, "P-002")
    after = store.get(s.session_id)
    assert after.state == "baseline_done"
    assert len(after.events) == 3


def test_empty_reflection_rejected():
    store = make_store()
    s = store.create_session("u1")
    store.record_baseline(s.session_id, affect(), PHQ4_OK)
    store.record_preference(s.session_id, "P-002")
    with pytest.raises(EmptyReflection):
        store.record_reflection(s.session_id, 1, "   \n")


def test_reflection_out_of_order_rejected():
    store = make_store()
    s = store.create_session("u1")
    store.record_baseline(s.session_id, affect(), PHQ4_OK)
    store.record_preference(s.session_id, "P-002")
    with pytest.raises(InvalidTransition):
        store.record_reflection(s.session_id, 2, "too early")


def test_quality_before_post_affect_rejected():
    store = make_store()
    s = store.create_session("u1")
    store.record_baseline(s.session_id, affect(), PHQ4_OK)
    store.record_preference(s.session_id, "P-002")
    for i in (1, 2, 3):
        store.record_reflection(s.session_id, i, "fine words")
    with pytest.raises(InvalidTransition):
        store.record_quality(s.session_id, quality())


def test_quality_range_validated():
    q = QualityRatings(accuracy=4, diversity=4, novelty=4, serendipity=0, immersion=4, engagement=4)
    with pytest.raises(OutOfRangeResponse) as exc:
        q.validate()
    assert exc.value.detail == "serendipity"


def test_recommendations_never_mutate():
    store = make_store()
    s = store.create_session("u1")
    store.record_baseline(s.session_id, affect(), PHQ4_OK)
    fixed = store.record_preference(s.session_id, "P-002").recommendations
    for i in (1, 2, 3):
        store.record_reflection(s.session_id, i, "words of note")
    store.record_post_affect(s.session_id, affect("calm"))
    done = store.record_quality(s.session_id, quality())
    assert done.recommendations == fixed
    assert hash(done.recommendations) == hash(fixed)


def test_unknown_session():
    store = make_store()
    with pytest.raises(UnknownSession):
        store.record_baseline("S-9999", affect(), PHQ4_OK)
    with pytest.raises(UnknownSession):
        store.get("S-9999")


def test_event_log_replay_reconstructs_sessions(tmp_path):
    store = make_store(tmp_path)
    run_full_session(store, "u1", mood_pre="tense", mood_post="relaxed")
    run_full_session(store, "u2", mood_pre="neutral", mood_post="excited", q=quality(5))
    partial = store.create_session("u3")
    store.record_baseline(partial.session_id, affect("bored"), PHQ4_OK)

    replayed = replay_log(tmp_path / "events.jsonl")
    assert set(replayed) == set(store.sessions)
    for sid, original in store.sessions.items():
        assert replayed[sid] == original


def test_replay_preserves_group_allocation(tmp_path):
    store = make_store(tmp_path)
    for i in range(9):
        store.create_session(f"u{i}")
    replayed = replay_log(tmp_path / "events.jsonl")
    groups = [replayed[f"S-{i + 1:04d}"].group for i in range(9)]
    assert groups == ["expert", "visual", "multimodal"] * 3


def test_restart_restores_sessions_from_log(tmp_path):
    first = make_store(tmp_path)
    run_full_session(first, "u1", mood_pre="tense", mood_post="relaxed")
    run_full_session(first, "u2", mood_pre="neutral", mood_post="excited")
    partial = first.create_session("u3")
    first.record_baseline(partial.session_id, affect("bored"), PHQ4_OK)

    second = make_store(tmp_path)
    assert second.sessions == first.sessions
    assert [s.session_id for s in second.completed_sessions()] == ["S-0001", "S-0002"]

    # ids and completion indices must continue, not collide
    with pytest.raises(DuplicateParticipant):
        second.create_session("u1")
    assert second.create_session("u4").session_id == "S-0004"
    done = run_full_session(second, "u5", mood_pre="sad", mood_post="calm")
    assert done.completion_index == 3


def test_store_accepts_configured_panas_items():
    custom = (("hopeful", "alert", "proud", "eager", "steady"),
              ("worried", "tense", "gloomy", "jumpy", "ashamed"))
    store = SessionStore(
        registry=full_registry(),
        sample_config=SampleConfig(samples=SAMPLES, labels=LABELS),
        prompts=GUIDANCE_PROMPTS,
        clock=make_clock(),
        panas=custom,
    )
    s = store.create_session("u-custom")
    items = {item: 2 for item in custom[0] + custom[1]}
    a = AffectAssessment(mood="sad", panas=items, neutral_item=3)
    assert store.record_baseline(s.session_id, a, PHQ4_OK).state == "baseline_done"
    with pytest.raises(OutOfRangeResponse):
        store.record_baseline(
            store.create_session("u-default").session_id, affect(), PHQ4_OK
        )
