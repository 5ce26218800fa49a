"""Episode state: candidate space, evidence chain, projection, backtracking.

The candidate space is an antichain over the admin-region tree (no frontier
region is an ancestor of another). Each piece of evidence carries a set of
region ids it is consistent with; applying evidence projects the space onto
the consistent subset, refining regions into children where that narrows
things. Contradictions trigger a deterministic confidence-greedy backtrack
that deactivates evidence instead of deleting it, so the recorded chain is
append-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .canonical import canonical_hash, canonical_json
from .errors import InsufficientEvidenceError, UnknownRegionError
from .geo import AdminRegion, Gazetteer, GeoPoint, reverse_geocode


class EpisodeStatus(enum.Enum):
    RUNNING = "running"
    FINALIZED = "finalized"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class CandidateSpace:
    """Antichain frontier of region ids; ``is_global`` means "anywhere"."""

    frontier: frozenset[str] = frozenset()
    is_global: bool = True

    @classmethod
    def global_space(cls) -> "CandidateSpace":
        return cls(frozenset(), True)

    @property
    def is_empty(self) -> bool:
        return not self.is_global and not self.frontier

    def leaf_cover(self, g: Gazetteer) -> frozenset[str]:
        """Leaf region ids covered by the space (all leaves when global)."""
        if self.is_global:
            cover: set[str] = set()
            for root in g.roots():
                cover |= g.leaf_cover(root.id)
            return frozenset(cover)
        cover = set()
        for rid in self.frontier:
            cover |= g.leaf_cover(rid)
        return frozenset(cover)

    def to_json(self) -> dict:
        return {"is_global": self.is_global, "frontier": sorted(self.frontier)}

    @classmethod
    def from_json(cls, obj: dict) -> "CandidateSpace":
        return cls(frozenset(obj["frontier"]), bool(obj["is_global"]))


@dataclass(frozen=True)
class Provenance:
    """Link from evidence back to the tool result it was extracted from."""

    action_id: int
    payload_sha256: str

    def to_json(self) -> dict:
        return {"action_id": self.action_id, "payload_sha256": self.payload_sha256}

    @classmethod
    def from_json(cls, obj: dict) -> "Provenance":
        return cls(int(obj["action_id"]), str(obj["payload_sha256"]))


@dataclass(frozen=True)
class Evidence:
    """One verified geographic constraint extracted from a tool result.

    ``constraint`` holds the region ids the evidence is consistent with;
    the hierarchy closure (ancestors/descendants) is applied at check time,
    not stored. ``point`` is set when the underlying record pins exact
    coordinates (a POI match), which finalization can use as an anchor.
    """

    id: int
    source_action_id: int
    claim: str
    constraint: frozenset[str]
    confidence: float
    provenance: Provenance
    point: GeoPoint | None = None

    def __post_init__(self):
        if not self.constraint:
            raise ValueError("evidence constraint must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "source_action_id": self.source_action_id,
            "claim": self.claim,
            "constraint": sorted(self.constraint),
            "confidence": self.confidence,
            "provenance": self.provenance.to_json(),
            "point": self.point.to_json() if self.point else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Evidence":
        return cls(
            id=int(obj["id"]),
            source_action_id=int(obj["source_action_id"]),
            claim=str(obj["claim"]),
            constraint=frozenset(obj["constraint"]),
            confidence=float(obj["confidence"]),
            provenance=Provenance.from_json(obj["provenance"]),
            point=GeoPoint.from_json(obj["point"]) if obj.get("point") else None,
        )


@dataclass(frozen=True)
class PoiHint:
    """Exact-coordinate anchor for finalization (from a POI-level record)."""

    point: GeoPoint
    city: str

    def to_json(self) -> dict:
        return {"lat": self.point.lat, "lon": self.point.lon, "city": self.city}

    @classmethod
    def from_json(cls, obj: dict) -> "PoiHint":
        return cls(GeoPoint(float(obj["lat"]), float(obj["lon"])), str(obj["city"]))


@dataclass(frozen=True)
class Prediction:
    point: GeoPoint
    city_name: str
    sample_id: str | None = None
    trace_ref: str | None = None

    def to_json(self) -> dict:
        out = {"lat": self.point.lat, "lon": self.point.lon, "city_name": self.city_name}
        if self.sample_id is not None:
            out["sample_id"] = self.sample_id
        if self.trace_ref is not None:
            out["trace_ref"] = self.trace_ref
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Prediction":
        return cls(
            point=GeoPoint(float(obj["lat"]), float(obj["lon"])),
            city_name=str(obj.get("city_name", "")),
            sample_id=obj.get("sample_id"),
            trace_ref=obj.get("trace_ref"),
        )


@dataclass(frozen=True)
class EpisodeState:
    """Snapshot of one localization episode at a step boundary."""

    step: int = 0
    space: CandidateSpace = field(default_factory=CandidateSpace.global_space)
    chain: tuple[Evidence, ...] = ()
    inactive_ids: frozenset[int] = frozenset()
    status: EpisodeStatus = EpisodeStatus.RUNNING
    prediction: Prediction | None = None

    def active_evidence(self) -> tuple[Evidence, ...]:
        return tuple(e for e in self.chain if e.id not in self.inactive_ids)

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "status": self.status.value,
            "space": self.space.to_json(),
            "chain": [e.to_json() for e in self.chain],
            "inactive_ids": sorted(self.inactive_ids),
            "prediction": self.prediction.to_json() if self.prediction else None,
        }

    def canonical(self) -> str:
        return canonical_json(self.to_json())

    def snapshot_hash(self) -> str:
        return canonical_hash(self.to_json())


def consistent(region_id: str, e: Evidence, g: Gazetteer) -> bool:
    """True iff the region, one of its ancestors, or one of its descendants
    appears in the evidence constraint."""
    if region_id not in g:
        raise UnknownRegionError(region_id)
    if region_id in e.constraint:
        return True
    if any(a in e.constraint for a in g.ancestors(region_id)):
        return True
    return not e.constraint.isdisjoint(g.descendants(region_id))


def antichain_reduce(region_ids: frozenset[str] | set[str], g: Gazetteer) -> frozenset[str]:
    """Drop every region that has a strict ancestor in the set.

    Keeping the ancestor preserves the leaf cover: a listed descendant adds
    nothing the ancestor does not already cover.
    """
    for rid in region_ids:
        if rid not in g:
            raise UnknownRegionError(rid)
    return frozenset(
        rid for rid in region_ids if not any(a in region_ids for a in g.ancestors(rid))
    )


def _refine(region_id: str, e: Evidence, g: Gazetteer) -> list[str]:
    """Consistent fragment of a region, pushed down to constraint depth.

    A region that strictly contains a constraint region is replaced by its
    consistent children, recursively, until no kept region strictly contains
    a constraint region (or there are no children to refine into).
    """
    strictly_contains = not e.constraint.isdisjoint(g.descendants(region_id))
    children = g.children(region_id)
    if not strictly_contains or not children:
        return [region_id]
    kept: list[str] = []
    for child in children:
        if consistent(child, e, g):
            kept.extend(_refine(child, e, g))
    return kept


def project(space: CandidateSpace, e: Evidence, g: Gazetteer) -> CandidateSpace:
    """Project the space onto the subset consistent with one evidence.

    A global space collapses to the antichain-reduced constraint set. An
    empty result signals contradiction in the returned value; it never
    raises for that.
    """
    if space.is_global:
        return CandidateSpace(antichain_reduce(e.constraint, g), False)
    kept: set[str] = set()
    for rid in sorted(space.frontier):
        if rid not in g:
            raise UnknownRegionError(rid)
        if consistent(rid, e, g):
            kept.update(_refine(rid, e, g))
    return CandidateSpace(antichain_reduce(kept, g), False)


def _fold(space: CandidateSpace, evs: list[Evidence], g: Gazetteer) -> CandidateSpace:
    for e in evs:
        space = project(space, e, g)
        if space.is_empty:
            break
    return space


@dataclass(frozen=True)
class Backtrack:
    """Record of one evidence deactivation during conflict resolution."""

    evidence_id: int
    stage: str  # "step" (among this step's evidence) or "chain" (whole chain)

    def to_json(self) -> dict:
        return {"evidence_id": self.evidence_id, "stage": self.stage}


@dataclass(frozen=True)
class ApplyReport:
    state: "EpisodeState"
    backtracks: tuple[Backtrack, ...] = ()


def _lowest_confidence(evs: list[Evidence]) -> Evidence:
    # Ties discard the highest id first.
    return min(evs, key=lambda e: (e.confidence, -e.id))


def apply_evidence_report(state: EpisodeState, evs: list[Evidence], g: Gazetteer) -> ApplyReport:
    """Append evidence, project, and resolve contradictions; full report.

    Conflict resolution is two-staged and deterministic:
      1. deactivate the lowest-confidence evidence among the ones applied
         this step (ties: highest id) and re-project from the pre-step space;
      2. if still empty, repeatedly deactivate the lowest-confidence active
         evidence in the whole chain and recompute the space from scratch,
         until non-empty or nothing is active (then the space is global).
    """
    if state.status is not EpisodeStatus.RUNNING:
        raise ValueError(f"cannot apply evidence in status {state.status.value}")
    evs = sorted(evs, key=lambda e: e.id)
    chain = state.chain + tuple(evs)
    inactive = set(state.inactive_ids)
    backtracks: list[Backtrack] = []

    applied = list(evs)
    space = _fold(state.space, applied, g)

    if space.is_empty and applied:
        drop = _lowest_confidence(applied)
        inactive.add(drop.id)
        backtracks.append(Backtrack(drop.id, "step"))
        applied = [e for e in applied if e.id != drop.id]
        space = _fold(state.space, applied, g)

    while space.is_empty:
        active = [e for e in chain if e.id not in inactive]
        if not active:
            space = CandidateSpace.global_space()
            break
        drop = _lowest_confidence(active)
        inactive.add(drop.id)
        backtracks.append(Backtrack(drop.id, "chain"))
        active = [e for e in active if e.id != drop.id]
        space = _fold(CandidateSpace.global_space(), active, g) if active else CandidateSpace.global_space()

    new_state = replace(
        state,
        step=state.step + 1,
        space=space,
        chain=chain,
        inactive_ids=frozenset(inactive),
    )
    return ApplyReport(new_state, tuple(backtracks))


def apply_evidence(state: EpisodeState, evs: list[Evidence], g: Gazetteer) -> EpisodeState:
    return apply_evidence_report(state, evs, g).state


def finalize(
    state: EpisodeState, g: Gazetteer, poi_hint: PoiHint | None = None
) -> tuple[EpisodeState, Prediction]:
    """Turn the narrowed space into a point prediction and mark Finalized.

    Precedence: an exact-coordinate hint wins; otherwise the centroid of the
    finest-level frontier region (ties: smallest id). The city name comes
    from the region's city-level ancestor, falling back to reverse geocoding
    for coarser regions.
    """
    if state.status is not EpisodeStatus.RUNNING:
        raise ValueError(f"cannot finalize in status {state.status.value}")
    if state.space.is_global or state.space.is_empty:
        raise InsufficientEvidenceError("candidate space is global; nothing to finalize")

    if poi_hint is not None:
        pred = Prediction(point=poi_hint.point, city_name=poi_hint.city)
    else:
        chosen: AdminRegion | None = None
        for rid in sorted(state.space.frontier):
            r = g.get(rid)
            if chosen is None or r.level.depth > chosen.level.depth:
                chosen = r
        assert chosen is not None
        city = g.city_ancestor(chosen.id)
        if city is not None:
            city_name = city.name
        else:
            rg = reverse_geocode(g, chosen.centroid)
            city_name = rg.name if rg is not None else chosen.name
        pred = Prediction(point=chosen.centroid, city_name=city_name)

    final_state = replace(state, status=EpisodeStatus.FINALIZED, prediction=pred)
    return final_state, pred
