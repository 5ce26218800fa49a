"""Trace recording, replay verification, tamper detection, compression."""

import json

import pytest

from geoprobe.canonical import canonical_hash
from geoprobe.errors import (
    BudgetTooSmallError,
    HashMismatchError,
    SeqGapError,
    TraceFormatError,
)
from geoprobe.recorder import (
    CompressedContext,
    EventKind,
    Trace,
    TraceHeader,
    TraceRecorder,
    TrajectoryEvent,
    compress,
    frontier_unchanged_steps,
    is_repetition,
    load_trace,
    replay,
)
from geoprobe.state import EpisodeState, Evidence, Provenance, apply_evidence_report, finalize


def ev(eid, constraint, conf=0.9, claim=None):
    return Evidence(
        id=eid,
        source_action_id=eid,
        claim=claim or f"street sign mentions region {eid}",
        constraint=frozenset(constraint),
        confidence=conf,
        provenance=Provenance(eid, "0" * 64),
    )


def result_payload(action_id, payload):
    return {
        "action_id": action_id,
        "tool": "Ocr",
        "status": "ok",
        "payload": payload,
        "payload_sha256": canonical_hash(payload),
    }


def record_episode(gaz, path=None, steps=None, finalize_at_end=True):
    """Drive a recorder through decision/execution/projection rounds."""
    steps = steps if steps is not None else [[ev(1, ["cn-a"])], [ev(2, ["cn-a-1"])]]
    header = TraceHeader(gazetteer_hash=gaz.content_hash(), config_hash="cfg" * 8)
    rec = TraceRecorder(header, path)
    state = EpisodeState()
    for i, evs in enumerate(steps):
        decision = {
            "version": "1",
            "thought": f"step {i}",
            "actions": [
                {"id": e.id, "module": "SemanticSymbol", "tool": "Ocr",
                 "args": {"image": "scene/0"}}
                for e in evs
            ],
            "finalize": False,
            "poi_hint": None,
        }
        rec.record(EventKind.DECISION, state, {"decision": decision, "backend": "scripted"})
        results = [result_payload(e.id, {"text": e.claim}) for e in evs]
        rec.record(EventKind.EXECUTION, state, {"results": results})
        report = apply_evidence_report(state, list(evs), gaz)
        state = report.state
        rec.record(
            EventKind.PROJECTION,
            state,
            {
                "evidence": [e.to_json() for e in evs],
                "space": state.space.to_json(),
                "inactive_ids": sorted(state.inactive_ids),
            },
        )
        if report.backtracks:
            rec.record(
                EventKind.BACKTRACK,
                state,
                {"discards": [b.to_json() for b in report.backtracks]},
            )
    if finalize_at_end:
        state, pred = finalize(state, gaz)
        rec.record(
            EventKind.FINALIZE, state, {"prediction": pred.to_json(), "poi_hint": None}
        )
    rec.close()
    return rec.trace(), state


class TestRecorder:
    def test_seq_contiguous_from_zero(self, gaz):
        trace, _ = record_episode(gaz)
        assert [e.seq for e in trace.events] == list(range(len(trace.events)))

    def test_file_written_line_per_event(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        trace, _ = record_episode(gaz, str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + len(trace.events)
        head = json.loads(lines[0])
        assert head["format_version"] == "1"
        assert head["gazetteer_hash"] == gaz.content_hash()

    def test_events_carry_state_hash(self, gaz):
        trace, final_state = record_episode(gaz)
        assert trace.events[-1].state_hash == final_state.snapshot_hash()

    def test_context_manager(self, gaz, tmp_path):
        header = TraceHeader(gaz.content_hash(), "c")
        with TraceRecorder(header, str(tmp_path / "t.jsonl")) as rec:
            rec.record(EventKind.ERROR, EpisodeState(), {"message": "x"})
        assert len(load_trace(str(tmp_path / "t.jsonl")).events) == 1

    def test_in_memory_only(self, gaz):
        header = TraceHeader(gaz.content_hash(), "c")
        rec = TraceRecorder(header)
        rec.record(EventKind.ERROR, EpisodeState(), {"message": "x"})
        assert rec.path is None
        assert len(rec.trace().events) == 1


class TestLoadTrace:
    def test_roundtrip(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        trace, _ = record_episode(gaz, str(path))
        loaded = load_trace(str(path))
        assert loaded.header == trace.header
        assert loaded.events == trace.events

    def test_missing_header(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text("")
        with pytest.raises(TraceFormatError) as ei:
            load_trace(str(p))
        assert ei.value.line == 1

    def test_bad_version(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text('{"format_version": "9", "gazetteer_hash": "x", "config_hash": "y"}\n')
        with pytest.raises(TraceFormatError, match="format_version"):
            load_trace(str(p))

    def test_bad_event_json_line(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        record_episode(gaz, str(path))
        lines = path.read_text().splitlines()
        lines[3] = lines[3][:-5]  # chop the line apart
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceFormatError) as ei:
            load_trace(str(path))
        assert ei.value.line == 4

    def test_seq_gap_detected(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        record_episode(gaz, str(path))
        lines = path.read_text().splitlines()
        obj = json.loads(lines[2])
        obj["seq"] = 7
        lines[2] = json.dumps(obj)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SeqGapError) as ei:
            load_trace(str(path))
        assert ei.value.expected == 1
        assert ei.value.got == 7

    def test_blank_lines_tolerated(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        trace, _ = record_episode(gaz, str(path))
        with open(path, "a") as f:
            f.write("\n\n")
        assert len(load_trace(str(path)).events) == len(trace.events)


class TestReplay:
    def test_clean_trace_verifies(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        trace, final_state = record_episode(gaz, str(path))
        report = replay(load_trace(str(path)), gaz)
        assert report.events_verified == len(trace.events)
        assert report.final_state.snapshot_hash() == final_state.snapshot_hash()
        assert report.prediction.city_name == "Rivertown"

    def test_replay_covers_backtracking(self, gaz):
        steps = [
            [ev(1, ["cn-a-1"], conf=0.6)],
            [ev(2, ["cn-b"], conf=0.9), ev(3, ["cn-b-1"], conf=0.8)],
        ]
        trace, final_state = record_episode(gaz, steps=steps)
        assert any(e.kind is EventKind.BACKTRACK for e in trace.events)
        report = replay(trace, gaz)
        assert report.final_state.inactive_ids == final_state.inactive_ids == {1, 3}

    def test_gazetteer_mismatch(self, gaz):
        trace, _ = record_episode(gaz)
        regions = gaz.regions()
        from geoprobe.geo import AdminRegion, Gazetteer
        regions[0] = AdminRegion(
            regions[0].id, regions[0].level, "Other", regions[0].centroid, regions[0].radius_km
        )
        with pytest.raises(HashMismatchError) as ei:
            replay(trace, Gazetteer(regions))
        assert ei.value.seq == -1

    def _tamper(self, path, predicate, mutate):
        lines = path.read_text().splitlines()
        for i, line in enumerate(lines[1:], start=1):
            obj = json.loads(line)
            if predicate(obj):
                mutate(obj)
                lines[i] = json.dumps(obj, ensure_ascii=False, sort_keys=True)
                path.write_text("\n".join(lines) + "\n")
                return obj["seq"]
        raise AssertionError("no line matched")

    def test_single_byte_payload_tamper_pinpointed(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        record_episode(gaz, str(path))

        def mutate(obj):
            text = obj["payload"]["results"][0]["payload"]["text"]
            obj["payload"]["results"][0]["payload"]["text"] = "X" + text[1:]

        seq = self._tamper(path, lambda o: o.get("kind") == "Execution", mutate)
        with pytest.raises(HashMismatchError) as ei:
            replay(load_trace(str(path)), gaz)
        assert ei.value.seq == seq
        assert "payload hash" in str(ei.value)

    def test_doctored_frontier_pinpointed(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        record_episode(gaz, str(path))

        def mutate(obj):
            obj["payload"]["space"]["frontier"] = ["cn-b"]

        seq = self._tamper(path, lambda o: o.get("kind") == "Projection", mutate)
        with pytest.raises(HashMismatchError) as ei:
            replay(load_trace(str(path)), gaz)
        assert ei.value.seq == seq

    def test_forged_prediction_pinpointed(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        record_episode(gaz, str(path))

        def mutate(obj):
            obj["payload"]["prediction"]["lat"] += 1.0

        seq = self._tamper(path, lambda o: o.get("kind") == "Finalize", mutate)
        with pytest.raises(HashMismatchError) as ei:
            replay(load_trace(str(path)), gaz)
        assert ei.value.seq == seq

    def test_tampered_evidence_confidence_pinpointed(self, gaz, tmp_path):
        path = tmp_path / "t.jsonl"
        record_episode(gaz, str(path))

        def mutate(obj):
            obj["payload"]["evidence"][0]["confidence"] = 0.11

        seq = self._tamper(path, lambda o: o.get("kind") == "Projection", mutate)
        with pytest.raises(HashMismatchError) as ei:
            replay(load_trace(str(path)), gaz)
        # The doctored confidence changes the chain, so the state hash breaks
        # at that same projection event.
        assert ei.value.seq == seq


class TestIsRepetition:
    def test_detects_identical_probe(self, gaz):
        trace, _ = record_episode(gaz)
        assert is_repetition(list(trace.events), "SemanticSymbol", "Ocr", {"image": "scene/0"})

    def test_different_args_not_repetition(self, gaz):
        trace, _ = record_episode(gaz)
        assert not is_repetition(list(trace.events), "SemanticSymbol", "Ocr", {"image": "scene/1"})
        assert not is_repetition(list(trace.events), "Environmental", "Caption",
                                 {"image": "scene/0"})

    def test_empty_history(self):
        assert not is_repetition([], "Environmental", "Caption", {"image": "s"})


class TestFrontierStall:
    def test_no_projections(self):
        assert frontier_unchanged_steps([]) == 0

    def test_changing_spaces(self, gaz):
        trace, _ = record_episode(gaz)  # global -> cn-a -> cn-a-1
        assert frontier_unchanged_steps(list(trace.events)) == 0

    def test_stalled_steps_counted(self, gaz):
        # Same evidence twice: the second projection leaves the space as-is.
        steps = [[ev(1, ["cn-a"])], [ev(2, ["cn-a"])], [ev(3, ["cn-a"])]]
        trace, _ = record_episode(gaz, steps=steps, finalize_at_end=False)
        assert frontier_unchanged_steps(list(trace.events)) == 2


class TestCompress:
    def make(self, gaz, nsteps=2, claim_len=40):
        steps = [
            [ev(i + 1, ["cn-a" if i == 0 else "cn-a-1"], claim="c" * claim_len)]
            for i in range(nsteps)
        ]
        trace, state = record_episode(gaz, steps=steps, finalize_at_end=False)
        return state, list(trace.events)

    def test_fits_generous_budget_at_full_detail(self, gaz):
        state, events = self.make(gaz)
        ctx = compress(state, events, gaz, budget=4000)
        assert ctx.level == 0
        assert len(ctx.render()) <= 4000
        assert "cccc" in ctx.render()
        assert "Ocr ok" in ctx.render()

    def test_degrades_to_truncated_claims(self, gaz):
        state, events = self.make(gaz, claim_len=600)
        full = compress(state, events, gaz, budget=4000)
        assert full.level == 0
        tight = compress(state, events, gaz, budget=400)
        assert tight.level >= 1
        assert "…" in "".join(tight.evidence_rows)
        assert len(tight.render()) <= 400

    def test_floor_keeps_ids_and_constraints(self, gaz):
        state, events = self.make(gaz, nsteps=3, claim_len=200)
        ctx = compress(state, events, gaz, budget=170)
        assert ctx.level == 3
        assert any(row.startswith("- e1 {") for row in ctx.evidence_rows)
        assert len(ctx.render()) <= 170

    def test_budget_too_small(self, gaz):
        state, events = self.make(gaz, nsteps=4, claim_len=100)
        with pytest.raises(BudgetTooSmallError):
            compress(state, events, gaz, budget=30)

    def test_global_space_rendered(self, gaz):
        ctx = compress(EpisodeState(), [], gaz, budget=4000)
        assert "- (global)" in ctx.candidate_rows
        assert "frontier unchanged for 0 steps" in ctx.render()

    def test_every_budget_respected_or_error(self, gaz):
        state, events = self.make(gaz, nsteps=3, claim_len=300)
        for budget in range(20, 2000, 37):
            try:
                ctx = compress(state, events, gaz, budget=budget)
            except BudgetTooSmallError:
                continue
            assert len(ctx.render()) <= budget

    def test_inactive_evidence_listed(self, gaz):
        steps = [
            [ev(1, ["cn-a-1"], conf=0.6)],
            [ev(2, ["cn-b"], conf=0.9), ev(3, ["cn-b-1"], conf=0.8)],
        ]
        trace, state = record_episode(gaz, steps=steps, finalize_at_end=False)
        ctx = compress(state, list(trace.events), gaz, budget=4000)
        assert any(row.startswith("- off: ") and "e1" in row for row in ctx.evidence_rows)


class TestEventJson:
    def test_event_roundtrip(self):
        e = TrajectoryEvent(0, EventKind.DECISION, 1, 123.5, {"a": 1}, "h" * 64)
        assert TrajectoryEvent.from_json(e.to_json()) == e

    def test_header_roundtrip(self):
        h = TraceHeader("g" * 8, "c" * 8, meta={"sample_id": "s1"})
        assert TraceHeader.from_json(h.to_json()) == h
