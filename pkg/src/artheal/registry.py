"""Engine registry: catalogs recommendation engines and the safety gate.

Five engines exist: four similarity engines (text_lda, text_bert,
image_resnet, fusion_blip) scored by clinical experts before they may
serve patients, and the expert engine, a curated mapping from sample
painting to three hand-picked recommendations.

The gate rule: an engine is eligible when its mean expert rating meets
the threshold AND no sample painting's top-3 drew a strict majority of
1-ratings. Both knobs are configurable; the defaults reproduce the
deployed accept/reject split on the pilot ratings.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from .catalog import Catalog
from .errors import (
    EngineNotEligible,
    IdMismatch,
    IncompleteRatings,
    MalformedRecord,
    UnknownEngine,
    UnknownSample,
)
from .similarity import RankedList, SimilarityMatrix, score_user, top_r

log = logging.getLogger(__name__)

SIMILARITY_ENGINES = ("text_lda", "text_bert", "image_resnet", "fusion_blip")
EXPERT_ENGINE = "expert"
ENGINE_IDS = SIMILARITY_ENGINES + (EXPERT_ENGINE,)

STATUS_REGISTERED = "registered"
STATUS_ELIGIBLE = "gated_eligible"
STATUS_INELIGIBLE = "gated_ineligible"

DEFAULT_THRESHOLD = 2.0
POLICY_VERSION = "mean-threshold+majority-veto/v1"

RANKS = (1, 2, 3)


@dataclass(frozen=True)
class ExpertRating:
    """One expert's 1-5 rating of an engine's top-3 for one sample.

    rank is the position rated, or None for a single rating covering
    the whole top-3 (the pilot data is recorded in that collapsed form).
    """

    expert_id: str
    engine_id: str
    sample_id: str
    rating: int
    rank: int | None = None
    comment: str = ""

    def __post_init__(self):
        if self.engine_id not in SIMILARITY_ENGINES:
            raise UnknownEngine(f"engine {self.engine_id!r} is not ratable", self.engine_id)
        if not (isinstance(self.rating, int) and 1 <= self.rating <= 5):
            raise MalformedRecord(f"rating must be an integer in [1, 5], got {self.rating!r}")
        if self.rank is not None and self.rank not in RANKS:
            raise MalformedRecord(f"rank must be in {RANKS} or null, got {self.rank!r}")


@dataclass(frozen=True)
class GateDecision:
    engine_id: str
    mean_rating: float
    veto_count: int
    eligible: bool
    threshold: float
    policy_version: str = POLICY_VERSION

    def as_dict(self) -> dict:
        return {
            "engine_id": self.engine_id,
            "mean_rating": self.mean_rating,
            "veto_count": self.veto_count,
            "eligible": self.eligible,
            "threshold": self.threshold,
            "policy_version": self.policy_version,
        }


@dataclass(frozen=True)
class CuratedTable:
    """Expert mapping: sample painting -> exactly 3 curated paintings."""

    entries: dict[str, tuple[str, str, str]]

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self.entries


@dataclass(frozen=True)
class EngineDescriptor:
    engine_id: str
    kind: str  # "similarity" | "curated"
    status: str
    matrix: SimilarityMatrix | None = None
    curated: CuratedTable | None = None


def load_ratings(path) -> list[ExpertRating]:
    """Parse a line-delimited ratings file, reporting offending lines."""
    ratings = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"ratings line {lineno}: invalid JSON ({exc})", lineno)
            if not isinstance(rec, dict):
                raise MalformedRecord(f"ratings line {lineno}: expected an object", lineno)
            try:
                ratings.append(
                    ExpertRating(
                        expert_id=rec["expert_id"],
                        engine_id=rec["engine_id"],
                        sample_id=rec["sample_id"],
                        rating=rec["rating"],
                        rank=rec.get("rank"),
                        comment=rec.get("comment", ""),
                    )
                )
            except KeyError as exc:
                raise MalformedRecord(f"ratings line {lineno}: missing key {exc}", lineno)
    return ratings


def _coverage_gaps(ratings: list[ExpertRating], sample_ids) -> list[tuple[str, tuple[int, ...]]]:
    """Missing (sample, ranks) pairs. A rank-None rating covers all ranks."""
    covered: dict[str, set[int]] = {sid: set() for sid in sample_ids}
    for r in ratings:
        if r.sample_id not in covered:
            covered[r.sample_id] = set()
        covered[r.sample_id].update(RANKS if r.rank is None else (r.rank,))
    gaps = []
    for sid in sample_ids:
        missing = tuple(sorted(set(RANKS) - covered[sid]))
        if missing:
            gaps.append((sid, missing))
    return gaps


def gate_engine(
    ratings: list[ExpertRating],
    engine_id: str,
    threshold: float = DEFAULT_THRESHOLD,
    expected_samples: tuple[str, ...] | None = None,
) -> GateDecision:
    """Decide eligibility of one engine from the expert ratings.

    expected_samples pins the sample paintings that must be covered;
    when omitted it is inferred from the sample ids present anywhere in
    the ratings, so a sample missing for one engine is still noticed.
    """
    if engine_id not in SIMILARITY_ENGINES:
        raise UnknownEngine(f"engine {engine_id!r} is not gateable", engine_id)
    if expected_samples is None:
        expected_samples = tuple(sorted({r.sample_id for r in ratings}))
    mine = [r for r in ratings if r.engine_id == engine_id]
    gaps = _coverage_gaps(mine, expected_samples)
    if not mine or gaps:
        raise IncompleteRatings(
            f"engine {engine_id!r} ratings do not cover all samples and ranks: {gaps}",
            {"engine_id": engine_id, "gaps": gaps},
        )

    mean = sum(r.rating for r in mine) / len(mine)
    veto_count = sum(1 for r in mine if r.rating == 1)
    vetoed = False
    for sid in expected_samples:
        sample_ratings = [r.rating for r in mine if r.sample_id == sid]
        ones = sample_ratings.count(1)
        if 2 * ones > len(sample_ratings):
            vetoed = True
            break
    return GateDecision(
        engine_id=engine_id,
        mean_rating=mean,
        veto_count=veto_count,
        eligible=(mean >= threshold) and not vetoed,
        threshold=threshold,
    )


def gate_report(decisions: list[GateDecision]) -> str:
    """Gate decisions as a deterministic JSON document."""
    return json.dumps([d.as_dict() for d in decisions], sort_keys=True, indent=2) + "\n"


def load_curated_table(path, catalog: Catalog) -> CuratedTable:
    """Load and validate the curated sample -> top-3 mapping."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"curated table {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict) or not raw:
        raise MalformedRecord("curated table must be a non-empty object")
    entries = {}
    for sample_id, picks in raw.items():
        if not isinstance(picks, list) or len(picks) != 3:
            raise MalformedRecord(
                f"curated entry for {sample_id!r} must list exactly 3 paintings"
            )
        if sample_id in picks:
            raise MalformedRecord(f"curated entry for {sample_id!r} recommends the sample itself")
        for pid in [sample_id, *picks]:
            if pid not in catalog:
                raise IdMismatch(f"curated table references unknown painting {pid!r}", pid)
        entries[sample_id] = tuple(picks)
    return CuratedTable(entries=entries)


def expert_recommend(table: CuratedTable, anchor: str) -> RankedList:
    """Curated top-3 in curated order with rank placeholder scores 3,2,1.

    The scores are positions, not similarities; they exist so curated
    and similarity recommendations share one result shape.
    """
    if anchor not in table:
        raise UnknownSample(f"sample {anchor!r} has no curated entry", anchor)
    picks = table.entries[anchor]
    return RankedList(
        anchor_id=anchor,
        entries=tuple((pid, float(score)) for pid, score in zip(picks, (3, 2, 1))),
        r=3,
    )


class EngineRegistry:
    """Read-mostly store of engine descriptors plus the recommend front door."""

    def __init__(self, catalog: Catalog, sample_ids: tuple[str, ...]):
        self.catalog = catalog
        self.sample_ids = tuple(sample_ids)
        self._engines: dict[str, EngineDescriptor] = {}

    def register_similarity(self, matrix: SimilarityMatrix) -> EngineDescriptor:
        if matrix.engine_id not in SIMILARITY_ENGINES:
            raise UnknownEngine(f"unknown similarity engine {matrix.engine_id!r}", matrix.engine_id)
        desc = EngineDescriptor(
            engine_id=matrix.engine_id, kind="similarity", status=STATUS_REGISTERED, matrix=matrix
        )
        self._engines[matrix.engine_id] = desc
        return desc

    def register_curated(self, table: CuratedTable) -> EngineDescriptor:
        # The expert table is vetted by construction: eligible on load.
        desc = EngineDescriptor(
            engine_id=EXPERT_ENGINE, kind="curated", status=STATUS_ELIGIBLE, curated=table
        )
        self._engines[EXPERT_ENGINE] = desc
        return desc

    def get(self, engine_id: str) -> EngineDescriptor:
        if engine_id not in self._engines:
            raise UnknownEngine(f"engine {engine_id!r} is not registered", engine_id)
        return self._engines[engine_id]

    def descriptors(self) -> list[EngineDescriptor]:
        return [self._engines[eid] for eid in ENGINE_IDS if eid in self._engines]

    def apply_gate(self, decision: GateDecision) -> EngineDescriptor:
        desc = self.get(decision.engine_id)
        if desc.kind != "similarity":
            raise UnknownEngine(f"engine {decision.engine_id!r} is not gateable", decision.engine_id)
        desc = replace(desc, status=STATUS_ELIGIBLE if decision.eligible else STATUS_INELIGIBLE)
        self._engines[decision.engine_id] = desc
        return desc

    def gate_all(self, ratings: list[ExpertRating], threshold: float = DEFAULT_THRESHOLD) -> list[GateDecision]:
        """Gate every rated similarity engine and apply the decisions."""
        decisions = []
        rated = [eid for eid in SIMILARITY_ENGINES if any(r.engine_id == eid for r in ratings)]
        for engine_id in rated:
            decision = gate_engine(ratings, engine_id, threshold)
            decisions.append(decision)
            if engine_id in self._engines:
                self.apply_gate(decision)
        return decisions

    def recommend(self, engine_id: str, anchor: str, r: int = 3) -> RankedList:
        """Top-r for the anchor from an eligible engine.

        Similarity engines exclude the anchor and all sample paintings;
        re-showing elicitation probes adds no exposure value.
        """
        desc = self.get(engine_id)
        if desc.status != STATUS_ELIGIBLE:
            raise EngineNotEligible(
                f"engine {engine_id!r} has status {desc.status}", engine_id
            )
        if desc.kind == "curated":
            return expert_recommend(desc.curated, anchor)
        exclusions = frozenset(self.sample_ids) | {anchor}
        return top_r(score_user(desc.matrix, anchor), r, exclusions)

    def preview(self, engine_id: str, anchor: str, r: int = 3) -> RankedList:
        """Top-r regardless of gate status, for the expert review console.

        Experts rate an engine's output before it is eligible, so the
        preview must bypass the gate; it never serves patients.
        """
        desc = self.get(engine_id)
        if desc.kind == "curated":
            return expert_recommend(desc.curated, anchor)
        exclusions = frozenset(self.sample_ids) | {anchor}
        return top_r(score_user(desc.matrix, anchor), r, exclusions)
