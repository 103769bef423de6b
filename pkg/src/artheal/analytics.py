"""Instrument scoring, affect-change summaries, and the study report.

Everything here is a pure function over completed sessions. The report
renderer is deterministic: the same event log yields byte-identical
output, with the generation timestamp taken from the last session
event rather than the wall clock.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, IncompleteSession
from .session import (
    GROUPS,
    MOODS_NEGATIVE,
    MOODS_POSITIVE,
    PANAS_NEGATIVE,
    PANAS_POSITIVE,
    QUALITY_VARIABLES,
    ST_COMPLETED,
    AffectAssessment,
    TherapySession,
    validate_phq4,
)

log = logging.getLogger(__name__)

VALENCES = ("negative", "neutral", "positive")

REPORT_VERSION = "1"


@dataclass(frozen=True)
class PanasScore:
    positive_sum: int
    negative_sum: int


@dataclass(frozen=True)
class Phq4Result:
    anxiety_score: int
    depression_score: int
    anxiety_flag: bool
    depression_flag: bool


@dataclass(frozen=True)
class TransitionTable:
    """3x3 baseline-to-post valence counts with marginal percentages."""

    n: int
    matrix: dict[str, dict[str, int]]
    baseline_counts: dict[str, int]
    post_counts: dict[str, int]
    baseline_pct: dict[str, float]
    post_pct: dict[str, float]

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "matrix": self.matrix,
            "baseline_counts": self.baseline_counts,
            "post_counts": self.post_counts,
            "baseline_pct": self.baseline_pct,
            "post_pct": self.post_pct,
        }


@dataclass(frozen=True)
class MoodTransitionSummary:
    overall: TransitionTable
    per_group: dict[str, TransitionTable]


def panas_scores(a: AffectAssessment, positive=PANAS_POSITIVE, negative=PANAS_NEGATIVE) -> PanasScore:
    """Subscale sums over the five positive and five negative items.

    The neutral item is recorded with the assessment but enters
    neither sum.
    """
    return PanasScore(
        positive_sum=sum(a.panas[item] for item in positive),
        negative_sum=sum(a.panas[item] for item in negative),
    )


def affect_delta(pre: PanasScore, post: PanasScore) -> tuple[int, int]:
    return (post.positive_sum - pre.positive_sum, post.negative_sum - pre.negative_sum)


def phq4(items) -> Phq4Result:
    """Standard scoring: first two items anxiety, last two depression,
    each subscale flagged at the instrument's cutoff of 3."""
    i1, i2, i3, i4 = validate_phq4(items)
    anxiety = i1 + i2
    depression = i3 + i4
    return Phq4Result(
        anxiety_score=anxiety,
        depression_score=depression,
        anxiety_flag=anxiety >= 3,
        depression_flag=depression >= 3,
    )


def mood_valence(mood: str) -> str:
    if mood in MOODS_POSITIVE:
        return "positive"
    if mood in MOODS_NEGATIVE:
        return "negative"
    return "neutral"


def _pct(count: int, n: int) -> float:
    return round(100.0 * count / n, 1)


def _transition_table(sessions: list[TherapySession]) -> TransitionTable:
    matrix = {b: {p: 0 for p in VALENCES} for b in VALENCES}
    for s in sessions:
        matrix[mood_valence(s.baseline.mood)][mood_valence(s.post.mood)] += 1
    n = len(sessions)
    baseline_counts = {b: sum(matrix[b].values()) for b in VALENCES}
    post_counts = {p: sum(matrix[b][p] for b in VALENCES) for p in VALENCES}
    return TransitionTable(
        n=n,
        matrix=matrix,
        baseline_counts=baseline_counts,
        post_counts=post_counts,
        baseline_pct={b: _pct(c, n) for b, c in baseline_counts.items()},
        post_pct={p: _pct(c, n) for p, c in post_counts.items()},
    )


def _require_completed(sessions) -> list[TherapySession]:
    if not sessions:
        raise EmptyInput("no completed sessions")
    for s in sessions:
        if s.state != ST_COMPLETED:
            raise IncompleteSession(f"session {s.session_id} is in state {s.state}", s.session_id)
    return list(sessions)


def mood_transitions(sessions) -> MoodTransitionSummary:
    """Baseline-to-post valence transitions, overall and per group."""
    sessions = _require_completed(sessions)
    per_group = {}
    for group in GROUPS:
        members = [s for s in sessions if s.group == group]
        if members:
            per_group[group] = _transition_table(members)
    return MoodTransitionSummary(overall=_transition_table(sessions), per_group=per_group)


def _summary_stats(values: list[int]) -> dict:
    arr = np.asarray(values, dtype=float)
    q1, q3 = np.percentile(arr, [25, 75])
    return {
        "n": len(values),
        "mean": round(float(arr.mean()), 4),
        "median": float(statistics.median(values)),
        "q1": round(float(q1), 4),
        "q3": round(float(q3), 4),
        "histogram": {str(v): values.count(v) for v in range(1, 6)},
    }


def quality_aggregates(sessions) -> dict[str, dict[str, dict]]:
    """Per-group, per-variable distribution summaries of the six ratings."""
    sessions = _require_completed(sessions)
    out: dict[str, dict[str, dict]] = {}
    for group in GROUPS:
        members = [s for s in sessions if s.group == group]
        if not members:
            log.warning("group %s has no completed sessions; omitted", group)
            continue
        out[group] = {
            var: _summary_stats([getattr(s.quality, var) for s in members])
            for var in QUALITY_VARIABLES
        }
    return out


def _delta_stats(deltas: list[int]) -> dict:
    return {
        "mean": round(float(np.mean(deltas)), 4),
        "median": float(statistics.median(deltas)),
    }


def _panas_delta_block(sessions: list[TherapySession]) -> dict:
    sub_pos, sub_neg = [], []
    per_item: dict[str, list[int]] = {item: [] for item in PANAS_POSITIVE + PANAS_NEGATIVE}
    for s in sessions:
        pre, post = panas_scores(s.baseline), panas_scores(s.post)
        dp, dn = affect_delta(pre, post)
        sub_pos.append(dp)
        sub_neg.append(dn)
        for item in per_item:
            per_item[item].append(s.post.panas[item] - s.baseline.panas[item])
    return {
        "subscale": {"positive": _delta_stats(sub_pos), "negative": _delta_stats(sub_neg)},
        "per_item": {item: _delta_stats(values) for item, values in per_item.items()},
    }


def build_report(sessions, fixtures_version: str = REPORT_VERSION) -> dict:
    """The study report as a plain dict, ready for deterministic JSON."""
    sessions = _require_completed(sessions)
    summary = mood_transitions(sessions)
    quality = quality_aggregates(sessions)
    per_group = {}
    for group, table in summary.per_group.items():
        members = [s for s in sessions if s.group == group]
        per_group[group] = {
            "mood_transitions": table.as_dict(),
            "panas_deltas": _panas_delta_block(members),
            "quality_aggregates": quality[group],
        }
    generated_at = max(e.timestamp for s in sessions for e in s.events)
    return {
        "generated_at": generated_at,
        "session_count": len(sessions),
        "fixtures_version": fixtures_version,
        "overall": {
            "mood_transitions": summary.overall.as_dict(),
            "panas_deltas": _panas_delta_block(sessions),
        },
        "per_group": per_group,
    }


def render_report(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode("utf-8")


CSV_COLUMNS = (
    ["session_id", "participant_id", "group", "engine_id", "completion_index", "chosen_sample"]
    + ["baseline_mood", "post_mood", "baseline_valence", "post_valence"]
    + ["panas_pre_positive", "panas_pre_negative", "panas_post_positive", "panas_post_negative"]
    + ["delta_positive", "delta_negative"]
    + [f"pre_{item}" for item in PANAS_POSITIVE + PANAS_NEGATIVE]
    + [f"post_{item}" for item in PANAS_POSITIVE + PANAS_NEGATIVE]
    + ["pre_neutral_item", "post_neutral_item"]
    + ["phq4_anxiety", "phq4_depression", "phq4_anxiety_flag", "phq4_depression_flag"]
    + list(QUALITY_VARIABLES)
    + ["reflection_words_1", "reflection_words_2", "reflection_words_3"]
)


def sessions_csv(sessions) -> str:
    """Flat per-session table for external statistical tools."""
    sessions = sorted(_require_completed(sessions), key=lambda s: s.completion_index)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for s in sessions:
        pre, post = panas_scores(s.baseline), panas_scores(s.post)
        dp, dn = affect_delta(pre, post)
        p4 = phq4(s.phq4)
        row = {
            "session_id": s.session_id,
            "participant_id": s.participant_id,
            "group": s.group,
            "engine_id": s.engine_id,
            "completion_index": s.completion_index,
            "chosen_sample": s.chosen_sample,
            "baseline_mood": s.baseline.mood,
            "post_mood": s.post.mood,
            "baseline_valence": mood_valence(s.baseline.mood),
            "post_valence": mood_valence(s.post.mood),
            "panas_pre_positive": pre.positive_sum,
            "panas_pre_negative": pre.negative_sum,
            "panas_post_positive": post.positive_sum,
            "panas_post_negative": post.negative_sum,
            "delta_positive": dp,
            "delta_negative": dn,
            "pre_neutral_item": s.baseline.neutral_item,
            "post_neutral_item": s.post.neutral_item,
            "phq4_anxiety": p4.anxiety_score,
            "phq4_depression": p4.depression_score,
            "phq4_anxiety_flag": int(p4.anxiety_flag),
            "phq4_depression_flag": int(p4.depression_flag),
        }
        for item in PANAS_POSITIVE + PANAS_NEGATIVE:
            row[f"pre_{item}"] = s.baseline.panas[item]
            row[f"post_{item}"] = s.post.panas[item]
        row.update(s.quality.as_dict())
        for i, text in enumerate(s.reflections, start=1):
            row[f"reflection_words_{i}"] = len(text.split())
        writer.writerow(row)
    return buf.getvalue()
