"""Candidate space, evidence projection, and backtracking semantics.

The deep checks work against an independent leaf-set model: a region tree
constraint system is equivalent to set algebra over leaf covers, so the
tests recompute every operation as plain set intersections and compare.
"""

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_gazetteer
from geoprobe.errors import InsufficientEvidenceError, UnknownRegionError
from geoprobe.geo import GeoPoint
from geoprobe.state import (
    ApplyReport,
    CandidateSpace,
    EpisodeState,
    EpisodeStatus,
    Evidence,
    PoiHint,
    Prediction,
    Provenance,
    antichain_reduce,
    apply_evidence,
    apply_evidence_report,
    consistent,
    finalize,
    project,
)

PROV = Provenance(action_id=0, payload_sha256="0" * 64)


def ev(eid, constraint, conf=0.9, point=None):
    return Evidence(
        id=eid,
        source_action_id=eid,
        claim=f"clue {eid}",
        constraint=frozenset(constraint),
        confidence=conf,
        provenance=PROV,
        point=point,
    )


def cover(g, rids):
    out = set()
    for rid in rids:
        out |= g.leaf_cover(rid)
    return out


def space_cover(g, space):
    return set(space.leaf_cover(g))


ALL_IDS = [
    "cn", "cn-a", "cn-a-1", "cn-a-1-x", "cn-a-1-y", "cn-a-2", "cn-b", "cn-b-1",
    "jp", "jp-a", "jp-a-1",
]


class TestEvidence:
    def test_empty_constraint_rejected(self):
        with pytest.raises(ValueError):
            ev(1, [])

    def test_confidence_range(self):
        with pytest.raises(ValueError):
            ev(1, ["cn"], conf=1.5)
        with pytest.raises(ValueError):
            ev(1, ["cn"], conf=-0.1)

    def test_json_roundtrip(self):
        e = ev(3, ["cn-a", "jp"], conf=0.7, point=GeoPoint(1, 2))
        assert Evidence.from_json(e.to_json()) == e
        e2 = ev(4, ["cn"])
        assert Evidence.from_json(e2.to_json()) == e2


class TestConsistent:
    def test_direct_member(self, gaz):
        assert consistent("cn-a", ev(1, ["cn-a"]), gaz)

    def test_ancestor_in_constraint(self, gaz):
        assert consistent("cn-a-1-x", ev(1, ["cn"]), gaz)

    def test_descendant_in_constraint(self, gaz):
        assert consistent("cn", ev(1, ["cn-a-1-x"]), gaz)

    def test_disjoint_subtrees(self, gaz):
        assert not consistent("jp", ev(1, ["cn-a"]), gaz)
        assert not consistent("cn-a-2", ev(1, ["cn-a-1"]), gaz)

    def test_unknown_region(self, gaz):
        with pytest.raises(UnknownRegionError):
            consistent("ghost", ev(1, ["cn"]), gaz)

    def test_matches_leaf_cover_overlap_everywhere(self, gaz):
        # Exhaustive oracle: consistency is exactly leaf-cover overlap.
        rng = random.Random(7)
        for _ in range(200):
            c = rng.sample(ALL_IDS, rng.randint(1, 3))
            e = ev(1, c)
            for rid in ALL_IDS:
                expect = bool(cover(gaz, [rid]) & cover(gaz, c))
                assert consistent(rid, e, gaz) == expect, (rid, c)


class TestAntichainReduce:
    def test_drops_descendants(self, gaz):
        got = antichain_reduce({"cn-a", "cn-a-1", "cn-a-1-x"}, gaz)
        assert got == {"cn-a"}

    def test_keeps_incomparable(self, gaz):
        got = antichain_reduce({"cn-a-1", "cn-a-2", "jp"}, gaz)
        assert got == {"cn-a-1", "cn-a-2", "jp"}

    def test_unknown_region(self, gaz):
        with pytest.raises(UnknownRegionError):
            antichain_reduce({"ghost"}, gaz)

    def test_preserves_cover(self, gaz):
        rng = random.Random(11)
        for _ in range(100):
            ids = set(rng.sample(ALL_IDS, rng.randint(1, 6)))
            red = antichain_reduce(ids, gaz)
            assert cover(gaz, red) == cover(gaz, ids)
            # Result is an antichain.
            for rid in red:
                assert not any(a in red for a in gaz.ancestors(rid))


class TestProject:
    def test_global_collapses_to_constraint(self, gaz):
        s = project(CandidateSpace.global_space(), ev(1, ["cn-a", "cn-a-1"]), gaz)
        assert not s.is_global
        assert s.frontier == {"cn-a"}

    def test_keeps_consistent_frontier(self, gaz):
        s = CandidateSpace(frozenset({"cn-a-1", "cn-a-2", "jp-a-1"}), False)
        got = project(s, ev(1, ["cn-a"]), gaz)
        assert got.frontier == {"cn-a-1", "cn-a-2"}

    def test_refines_into_children(self, gaz):
        s = CandidateSpace(frozenset({"cn"}), False)
        got = project(s, ev(1, ["cn-a-1"]), gaz)
        assert got.frontier == {"cn-a-1"}

    def test_refines_to_constraint_depth_only(self, gaz):
        s = CandidateSpace(frozenset({"cn"}), False)
        got = project(s, ev(1, ["cn-a"]), gaz)
        assert got.frontier == {"cn-a"}

    def test_empty_result_signals_contradiction(self, gaz):
        s = CandidateSpace(frozenset({"jp"}), False)
        got = project(s, ev(1, ["cn-a"]), gaz)
        assert got.is_empty
        assert not got.is_global

    def test_exact_leaf_cover_intersection(self, gaz):
        # Projection must equal leaf-set intersection, for random spaces
        # and random constraints alike.
        rng = random.Random(13)
        for _ in range(300):
            fr = antichain_reduce(set(rng.sample(ALL_IDS, rng.randint(1, 4))), gaz)
            s = CandidateSpace(fr, False)
            c = rng.sample(ALL_IDS, rng.randint(1, 3))
            got = project(s, ev(1, c), gaz)
            assert space_cover(gaz, got) == space_cover(gaz, s) & cover(gaz, c), (fr, c)
            for rid in got.frontier:
                assert not any(a in got.frontier for a in gaz.ancestors(rid))

    def test_global_leaf_cover(self, gaz):
        assert space_cover(gaz, CandidateSpace.global_space()) == {
            "cn-a-1-x", "cn-a-1-y", "cn-a-2", "cn-b-1", "jp-a-1",
        }


def leafsim(g, steps):
    """Independent model of apply_evidence over leaf sets.

    space: None means global; otherwise a set of leaf ids. Returns the final
    (space, inactive, backtracks) triple for comparison with the real thing.
    """
    all_chain = []
    inactive = set()
    backtracks = []
    space = None

    def fold(base, evs):
        s = base
        for e in evs:
            c = cover(g, e.constraint)
            s = set(c) if s is None else s & c
        return s

    def lowest(evs):
        return min(evs, key=lambda e: (e.confidence, -e.id))

    for evs in steps:
        evs = sorted(evs, key=lambda e: e.id)
        all_chain.extend(evs)
        applied = list(evs)
        cur = fold(space, applied)
        if cur is not None and not cur and applied:
            drop = lowest(applied)
            inactive.add(drop.id)
            backtracks.append((drop.id, "step"))
            applied = [e for e in applied if e.id != drop.id]
            cur = fold(space, applied)
        while cur is not None and not cur:
            active = [e for e in all_chain if e.id not in inactive]
            if not active:
                cur = None
                break
            drop = lowest(active)
            inactive.add(drop.id)
            backtracks.append((drop.id, "chain"))
            active = [e for e in active if e.id != drop.id]
            cur = fold(None, active) if active else None
        space = cur
    return space, inactive, backtracks


class TestApplyEvidence:
    def test_simple_narrowing(self, gaz):
        s0 = EpisodeState()
        s1 = apply_evidence(s0, [ev(1, ["cn-a"])], gaz)
        assert s1.step == 1
        assert s1.space.frontier == {"cn-a"}
        s2 = apply_evidence(s1, [ev(2, ["cn-a-1"])], gaz)
        assert s2.space.frontier == {"cn-a-1"}
        assert [e.id for e in s2.chain] == [1, 2]
        assert s2.inactive_ids == frozenset()

    def test_empty_step_advances_only_counter(self, gaz):
        s0 = apply_evidence(EpisodeState(), [ev(1, ["cn-a"])], gaz)
        s1 = apply_evidence(s0, [], gaz)
        assert s1.step == s0.step + 1
        assert s1.space == s0.space
        assert s1.chain == s0.chain

    def test_step_evidence_sorted_by_id(self, gaz):
        s = apply_evidence(EpisodeState(), [ev(5, ["cn-a"]), ev(3, ["cn"])], gaz)
        assert [e.id for e in s.chain] == [3, 5]

    def test_stage1_drops_lowest_confidence_this_step(self, gaz):
        rep = apply_evidence_report(
            EpisodeState(), [ev(1, ["cn-a"], conf=0.9), ev(2, ["jp"], conf=0.5)], gaz
        )
        assert [(b.evidence_id, b.stage) for b in rep.backtracks] == [(2, "step")]
        assert rep.state.space.frontier == {"cn-a"}
        assert rep.state.inactive_ids == {2}
        assert [e.id for e in rep.state.chain] == [1, 2]  # kept in chain

    def test_stage1_tie_drops_highest_id(self, gaz):
        rep = apply_evidence_report(
            EpisodeState(), [ev(1, ["cn-a"], conf=0.7), ev(2, ["jp"], conf=0.7)], gaz
        )
        assert rep.state.inactive_ids == {2}
        assert rep.state.space.frontier == {"cn-a"}

    def test_stage2_reaches_into_prior_steps(self, gaz):
        s1 = apply_evidence(EpisodeState(), [ev(1, ["cn-a-1"], conf=0.6)], gaz)
        rep = apply_evidence_report(
            s1, [ev(2, ["cn-b"], conf=0.9), ev(3, ["cn-b-1"], conf=0.8)], gaz
        )
        # Stage 1 drops id 3 (lowest confidence this step); still empty
        # against the pre-step space, so stage 2 drops id 1 from the chain
        # and recomputes from scratch.
        assert [(b.evidence_id, b.stage) for b in rep.backtracks] == [(3, "step"), (1, "chain")]
        assert rep.state.space.frontier == {"cn-b"}
        assert rep.state.inactive_ids == {1, 3}
        assert [e.id for e in rep.state.chain] == [1, 2, 3]

    def test_deactivated_not_deleted(self, gaz):
        s1 = apply_evidence(EpisodeState(), [ev(1, ["cn-a"], conf=0.9), ev(2, ["jp"], conf=0.5)], gaz)
        assert len(s1.chain) == 2
        assert [e.id for e in s1.active_evidence()] == [1]

    def test_apply_after_finalize_rejected(self, gaz):
        s = apply_evidence(EpisodeState(), [ev(1, ["cn-a-1"])], gaz)
        s, _ = finalize(s, gaz)
        with pytest.raises(ValueError):
            apply_evidence(s, [ev(2, ["cn"])], gaz)

    def test_matches_leaf_set_simulator(self, gaz):
        # The load-bearing oracle: replay random multi-step scenarios through
        # an independent leaf-set model and demand identical outcomes.
        rng = random.Random(20250823)
        confs = [0.3, 0.5, 0.7, 0.9]
        for trial in range(250):
            nsteps = rng.randint(1, 4)
            steps, next_id = [], 1
            for _ in range(nsteps):
                n = rng.randint(0, 3)
                evs = []
                for _ in range(n):
                    evs.append(
                        ev(next_id, rng.sample(ALL_IDS, rng.randint(1, 3)), rng.choice(confs))
                    )
                    next_id += 1
                steps.append(evs)

            state = EpisodeState()
            got_backtracks = []
            for evs in steps:
                rep = apply_evidence_report(state, list(evs), gaz)
                state = rep.state
                got_backtracks.extend((b.evidence_id, b.stage) for b in rep.backtracks)

            want_space, want_inactive, want_backtracks = leafsim(gaz, steps)
            if want_space is None:
                assert state.space.is_global, (trial, steps)
            else:
                assert space_cover(gaz, state.space) == want_space, (trial, steps)
            assert set(state.inactive_ids) == want_inactive, (trial, steps)
            assert got_backtracks == want_backtracks, (trial, steps)
            assert state.step == nsteps
            # The space is never left empty.
            assert not state.space.is_empty

    @given(st.lists(st.sampled_from(ALL_IDS), min_size=1, max_size=3, unique=True))
    def test_single_evidence_never_empties(self, constraint):
        g = small_gazetteer()
        s = apply_evidence(EpisodeState(), [ev(1, constraint)], g)
        assert not s.space.is_empty
        assert space_cover(g, s.space) == cover(g, constraint)


class TestFinalize:
    def test_global_space_rejected(self, gaz):
        with pytest.raises(InsufficientEvidenceError):
            finalize(EpisodeState(), gaz)

    def test_city_frontier(self, gaz):
        s = apply_evidence(EpisodeState(), [ev(1, ["cn-a-1"])], gaz)
        s, pred = finalize(s, gaz)
        assert s.status is EpisodeStatus.FINALIZED
        assert s.prediction == pred
        assert pred.point == gaz.get("cn-a-1").centroid
        assert pred.city_name == "Rivertown"

    def test_district_frontier_uses_city_ancestor(self, gaz):
        s = apply_evidence(EpisodeState(), [ev(1, ["cn-a-1-x"])], gaz)
        _, pred = finalize(s, gaz)
        assert pred.point == gaz.get("cn-a-1-x").centroid
        assert pred.city_name == "Rivertown"

    def test_province_frontier_reverse_geocodes(self, gaz):
        s = apply_evidence(EpisodeState(), [ev(1, ["cn-a"])], gaz)
        _, pred = finalize(s, gaz)
        assert pred.point == gaz.get("cn-a").centroid
        # (30, 114) is outside every city disc but within the 100 km
        # fallback of Rivertown's centroid.
        assert pred.city_name == "Rivertown"

    def test_finest_level_wins(self, gaz):
        s = EpisodeState(space=CandidateSpace(frozenset({"cn-b", "cn-a-1"}), False), step=1)
        _, pred = finalize(s, gaz)
        assert pred.point == gaz.get("cn-a-1").centroid
        assert pred.city_name == "Rivertown"

    def test_level_tie_smallest_id(self, gaz):
        s = EpisodeState(space=CandidateSpace(frozenset({"cn-b-1", "cn-a-1"}), False), step=1)
        _, pred = finalize(s, gaz)
        assert pred.city_name == "Rivertown"  # cn-a-1 < cn-b-1

    def test_poi_hint_wins(self, gaz):
        s = apply_evidence(EpisodeState(), [ev(1, ["cn-a-1"])], gaz)
        hint = PoiHint(GeoPoint(30.55, 114.28), "Rivertown")
        _, pred = finalize(s, gaz, poi_hint=hint)
        assert pred.point == GeoPoint(30.55, 114.28)
        assert pred.city_name == "Rivertown"

    def test_double_finalize_rejected(self, gaz):
        s = apply_evidence(EpisodeState(), [ev(1, ["cn-a-1"])], gaz)
        s, _ = finalize(s, gaz)
        with pytest.raises(ValueError):
            finalize(s, gaz)


class TestSnapshots:
    def test_hash_stable_for_equal_states(self, gaz):
        a = apply_evidence(EpisodeState(), [ev(1, ["cn-a"])], gaz)
        b = apply_evidence(EpisodeState(), [ev(1, ["cn-a"])], gaz)
        assert a.snapshot_hash() == b.snapshot_hash()

    def test_hash_changes_with_state(self, gaz):
        a = apply_evidence(EpisodeState(), [ev(1, ["cn-a"])], gaz)
        b = apply_evidence(a, [ev(2, ["cn-a-1"])], gaz)
        assert a.snapshot_hash() != b.snapshot_hash()

    def test_canonical_is_deterministic(self, gaz):
        a = apply_evidence(EpisodeState(), [ev(1, ["cn-a"], point=GeoPoint(30, 114))], gaz)
        assert a.canonical() == a.canonical()
        assert '"step":1' in a.canonical()

    def test_prediction_json_roundtrip(self):
        p = Prediction(GeoPoint(1, 2), "rivertown", sample_id="s1", trace_ref="t/1")
        assert Prediction.from_json(p.to_json()) == p
        bare = Prediction(GeoPoint(1, 2), "x")
        assert Prediction.from_json(bare.to_json()) == bare

    def test_poi_hint_json_roundtrip(self):
        h = PoiHint(GeoPoint(3, 4), "lakeside")
        assert PoiHint.from_json(h.to_json()) == h

    def test_apply_report_is_value(self, gaz):
        rep = apply_evidence_report(EpisodeState(), [ev(1, ["cn"])], gaz)
        assert isinstance(rep, ApplyReport)
        assert rep.backtracks == ()
