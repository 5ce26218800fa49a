"""Trajectory recording, replay verification, and context compression.

Every episode appends a JSONL trace: one header line, then one event per
line, flushed as written so a crash loses at most the event being written.
Events carry a hash of the post-event episode state; execution results
carry a hash of their own payload. Together these let ``replay`` recompute
the whole episode from the recorded evidence and pinpoint the exact event
where a tampered or corrupted trace diverges.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field

from .canonical import canonical_hash
from .errors import (
    BudgetTooSmallError,
    GeoprobeError,
    HashMismatchError,
    SeqGapError,
    TraceFormatError,
)
from .geo import Gazetteer
from .state import (
    CandidateSpace,
    EpisodeState,
    Evidence,
    PoiHint,
    Prediction,
    apply_evidence_report,
    finalize,
)

TRACE_FORMAT_VERSION = "1"


class EventKind(enum.Enum):
    DECISION = "Decision"
    EXECUTION = "Execution"
    PROJECTION = "Projection"
    BACKTRACK = "Backtrack"
    FINALIZE = "Finalize"
    ERROR = "Error"


@dataclass(frozen=True)
class TrajectoryEvent:
    seq: int
    kind: EventKind
    step: int
    wall_time: float
    payload: dict
    state_hash: str

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind.value,
            "step": self.step,
            "wall_time": self.wall_time,
            "payload": self.payload,
            "state_hash": self.state_hash,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrajectoryEvent":
        return cls(
            seq=int(obj["seq"]),
            kind=EventKind(obj["kind"]),
            step=int(obj["step"]),
            wall_time=float(obj["wall_time"]),
            payload=dict(obj["payload"]),
            state_hash=str(obj["state_hash"]),
        )


@dataclass(frozen=True)
class TraceHeader:
    gazetteer_hash: str
    config_hash: str
    format_version: str = TRACE_FORMAT_VERSION
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "format_version": self.format_version,
            "gazetteer_hash": self.gazetteer_hash,
            "config_hash": self.config_hash,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TraceHeader":
        return cls(
            gazetteer_hash=str(obj["gazetteer_hash"]),
            config_hash=str(obj["config_hash"]),
            format_version=str(obj["format_version"]),
            meta=dict(obj.get("meta", {})),
        )


@dataclass(frozen=True)
class Trace:
    header: TraceHeader
    events: tuple[TrajectoryEvent, ...]


class TraceRecorder:
    """Appends events to an in-memory list and, optionally, a JSONL file.

    Sequence numbers are assigned contiguously from 0. When a path is given
    the header is written on construction and every event is flushed as soon
    as it is recorded.
    """

    def __init__(self, header: TraceHeader, path: str | None = None):
        self.header = header
        self.events: list[TrajectoryEvent] = []
        self._path = path
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", encoding="utf-8")
            self._write_line(header.to_json())

    def _write_line(self, obj: dict) -> None:
        assert self._fh is not None
        self._fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
        self._fh.flush()

    @property
    def path(self) -> str | None:
        return self._path

    def record(self, kind: EventKind, state: EpisodeState, payload: dict) -> TrajectoryEvent:
        """Append one event; the state hash is taken after the event's effect."""
        event = TrajectoryEvent(
            seq=len(self.events),
            kind=kind,
            step=state.step,
            wall_time=time.time(),
            payload=payload,
            state_hash=state.snapshot_hash(),
        )
        self.events.append(event)
        if self._fh is not None:
            self._write_line(event.to_json())
        return event

    def trace(self) -> Trace:
        return Trace(self.header, tuple(self.events))

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "TraceRecorder":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def load_trace(path: str) -> Trace:
    """Parse a JSONL trace file, enforcing format and seq contiguity."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].strip():
        raise TraceFormatError(1, "missing trace header")
    try:
        head_obj = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise TraceFormatError(1, f"bad header JSON: {e.msg}") from None
    if not isinstance(head_obj, dict) or "format_version" not in head_obj:
        raise TraceFormatError(1, "header must be an object with format_version")
    if head_obj["format_version"] != TRACE_FORMAT_VERSION:
        raise TraceFormatError(1, f"unsupported format_version {head_obj['format_version']!r}")
    try:
        header = TraceHeader.from_json(head_obj)
    except (KeyError, TypeError, ValueError) as e:
        raise TraceFormatError(1, f"bad header: {e}") from None

    events: list[TrajectoryEvent] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceFormatError(lineno, f"bad event JSON: {e.msg}") from None
        try:
            event = TrajectoryEvent.from_json(obj)
        except (KeyError, TypeError, ValueError) as e:
            raise TraceFormatError(lineno, f"bad event: {e}") from None
        if event.seq != len(events):
            raise SeqGapError(expected=len(events), got=event.seq)
        events.append(event)
    return Trace(header, tuple(events))


@dataclass(frozen=True)
class ReplayReport:
    final_state: EpisodeState
    prediction: Prediction | None
    events_verified: int


def _check(cond: bool, seq: int, message: str) -> None:
    if not cond:
        raise HashMismatchError(seq, message)


def replay(trace: Trace, g: Gazetteer) -> ReplayReport:
    """Re-derive the episode from the trace and verify every hash.

    Projections are recomputed from the recorded evidence, so a trace
    altered anywhere (a flipped byte in a result payload, a doctored
    frontier, a forged prediction) fails with the exact offending seq.
    A gazetteer mismatch is reported as seq -1.
    """
    if g.content_hash() != trace.header.gazetteer_hash:
        raise HashMismatchError(-1, "gazetteer hash does not match trace header")

    state = EpisodeState()
    prediction: Prediction | None = None
    pending_backtracks: list[dict] | None = None
    for event in trace.events:
        seq = event.seq
        if pending_backtracks is not None and event.kind is not EventKind.BACKTRACK:
            raise HashMismatchError(seq, "expected a Backtrack event after that projection")

        try:
            if event.kind is EventKind.DECISION or event.kind is EventKind.ERROR:
                _check(event.state_hash == state.snapshot_hash(), seq, "state hash mismatch")

            elif event.kind is EventKind.EXECUTION:
                for res in event.payload.get("results", []):
                    _check(
                        canonical_hash(res.get("payload")) == res.get("payload_sha256"),
                        seq,
                        f"result payload hash mismatch for action {res.get('action_id')}",
                    )
                _check(event.state_hash == state.snapshot_hash(), seq, "state hash mismatch")

            elif event.kind is EventKind.PROJECTION:
                evs = [Evidence.from_json(e) for e in event.payload.get("evidence", [])]
                report = apply_evidence_report(state, evs, g)
                state = report.state
                _check(
                    state.space.to_json() == event.payload.get("space"),
                    seq,
                    "recomputed candidate space diverges from trace",
                )
                _check(
                    sorted(state.inactive_ids) == event.payload.get("inactive_ids"),
                    seq,
                    "recomputed inactive evidence diverges from trace",
                )
                _check(event.state_hash == state.snapshot_hash(), seq, "state hash mismatch")
                if report.backtracks:
                    pending_backtracks = [b.to_json() for b in report.backtracks]

            elif event.kind is EventKind.BACKTRACK:
                _check(pending_backtracks is not None, seq, "unexpected Backtrack event")
                _check(
                    event.payload.get("discards") == pending_backtracks,
                    seq,
                    "recorded discards diverge from recomputed backtracking",
                )
                _check(event.state_hash == state.snapshot_hash(), seq, "state hash mismatch")
                pending_backtracks = None

            elif event.kind is EventKind.FINALIZE:
                hint_obj = event.payload.get("poi_hint")
                hint = PoiHint.from_json(hint_obj) if hint_obj else None
                state, pred = finalize(state, g, poi_hint=hint)
                recorded = event.payload.get("prediction") or {}
                _check(
                    pred.point.to_json() == {"lat": recorded.get("lat"), "lon": recorded.get("lon")}
                    and pred.city_name == recorded.get("city_name"),
                    seq,
                    "recomputed prediction diverges from trace",
                )
                prediction = pred
                _check(event.state_hash == state.snapshot_hash(), seq, "state hash mismatch")
        except HashMismatchError:
            raise
        except (KeyError, TypeError, ValueError, AttributeError, GeoprobeError) as exc:
            raise HashMismatchError(
                seq, f"malformed event payload ({type(exc).__name__}: {exc})"
            ) from None

    if pending_backtracks is not None:
        last = trace.events[-1].seq if trace.events else 0
        raise HashMismatchError(last, "trace ends while a Backtrack event is still expected")
    return ReplayReport(state, prediction, len(trace.events))


def is_repetition(events: list[TrajectoryEvent], module: str, tool: str, args: dict) -> bool:
    """Whether an identical probe was already decided earlier in the episode."""
    for event in events:
        if event.kind is not EventKind.DECISION:
            continue
        for act in event.payload.get("decision", {}).get("actions", []):
            if act.get("module") == module and act.get("tool") == tool and act.get("args") == args:
                return True
    return False


# ---------------------------------------------------------------------------
# Context compression

#: Claim truncation lengths per compression level; None marks the floor
#: rendering (ids and constraints only).
_CLAIM_WIDTHS: tuple[int | None, ...] = (0, 80, 24, None)


@dataclass(frozen=True)
class CompressedContext:
    """Bounded text digest of an episode for feeding back to a reasoner."""

    step: int
    frontier_unchanged_steps: int
    candidate_rows: tuple[str, ...]
    evidence_rows: tuple[str, ...]
    action_rows: tuple[str, ...]
    level: int

    def render(self) -> str:
        lines = [f"step {self.step}; frontier unchanged for {self.frontier_unchanged_steps} steps"]
        lines.append(f"candidates ({len(self.candidate_rows)}):")
        lines.extend(self.candidate_rows)
        lines.append(f"evidence ({len(self.evidence_rows)}):")
        lines.extend(self.evidence_rows)
        lines.append(f"actions ({len(self.action_rows)}):")
        lines.extend(self.action_rows)
        return "\n".join(lines) + "\n"


def _truncate(text: str, width: int) -> str:
    if width <= 0 or len(text) <= width:
        return text
    return text[: width - 1] + "…"


def frontier_unchanged_steps(events: list[TrajectoryEvent]) -> int:
    """Length of the trailing run of projections that left the space as-is."""
    spaces = [{"is_global": True, "frontier": []}]
    spaces += [e.payload.get("space") for e in events if e.kind is EventKind.PROJECTION]
    count = 0
    i = len(spaces) - 1
    while i >= 1 and spaces[i] == spaces[i - 1]:
        count += 1
        i -= 1
    return count


def compress(
    state: EpisodeState,
    events: list[TrajectoryEvent],
    g: Gazetteer,
    budget: int = 4000,
) -> CompressedContext:
    """Digest the episode into at most ``budget`` characters.

    Detail degrades in fixed stages (full claims, clipped claims, then the
    id-and-constraint floor). If even the floor rendering does not fit, the
    budget is genuinely too small and that is an error.
    """
    statuses: dict[int, str] = {}
    probes: list[tuple[int, str, str]] = []
    for event in events:
        if event.kind is EventKind.DECISION:
            for act in event.payload.get("decision", {}).get("actions", []):
                probes.append((act.get("id", 0), act.get("module", "?"), act.get("tool", "?")))
        elif event.kind is EventKind.EXECUTION:
            for res in event.payload.get("results", []):
                statuses[res.get("action_id")] = res.get("status", "?")

    stall = frontier_unchanged_steps(events)
    active = state.active_evidence()
    inactive = sorted(state.inactive_ids)

    for level, width in enumerate(_CLAIM_WIDTHS):
        if state.space.is_global:
            cand_rows = ["- (global)"]
        elif width is None:
            cand_rows = [f"- {rid}" for rid in sorted(state.space.frontier)]
        else:
            cand_rows = []
            for rid in sorted(state.space.frontier):
                r = g.get(rid)
                cand_rows.append(f"- {rid} {r.level.value} {r.name}")

        ev_rows = []
        for e in active:
            ids = ",".join(sorted(e.constraint))
            if width is None:
                ev_rows.append(f"- e{e.id} {{{ids}}}")
            else:
                claim = _truncate(e.claim, width)
                ev_rows.append(f"- e{e.id} [{e.confidence:.2f}] {{{ids}}} {claim}".rstrip())
        if inactive:
            ev_rows.append("- off: " + ",".join(f"e{i}" for i in inactive))

        act_rows = []
        for aid, module, tool in probes:
            status = statuses.get(aid, "pending")
            if width is None:
                act_rows.append(f"- a{aid} {tool} {status}")
            else:
                act_rows.append(f"- a{aid} {module}/{tool} {status}")

        ctx = CompressedContext(
            step=state.step,
            frontier_unchanged_steps=stall,
            candidate_rows=tuple(cand_rows),
            evidence_rows=tuple(ev_rows),
            action_rows=tuple(act_rows),
            level=level,
        )
        if len(ctx.render()) <= budget:
            return ctx
    raise BudgetTooSmallError(
        f"floor rendering exceeds budget of {budget} characters"
    )
