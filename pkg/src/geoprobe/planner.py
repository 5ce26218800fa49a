"""Decision policies: deterministic scripted rules and a live LLM backend.

Both backend families answer one question — given the current context, what
is the next decision? — and both emit the same strict envelope, so the
episode loop treats them identically. The scripted backend is a pure
ordered rule list over the structured scene descriptor; the LLM backend
speaks a chat-completions wire format with bounded parse retries and a
deterministic fallback.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import requests

from .actions import (
    Action,
    ActionIssue,
    CapabilityModule,
    Decision,
    Tool,
    parse_decision,
    render_action_schema,
    validate_action,
)
from .errors import BackendUnavailableError, DecisionParseError
from .geo import Gazetteer, RegionLevel
from .recorder import (
    CompressedContext,
    TrajectoryEvent,
    frontier_unchanged_steps,
    is_repetition,
)
from .state import CandidateSpace, PoiHint
from .synthworld import ClueKind, SceneDescriptor

#: Prompt size beyond the compressed history stays under this many chars
#: (role text, schema, scene and candidate sections are all bounded).
PROMPT_OVERHEAD_BUDGET = 3500

_MACRO_CLUES = (ClueKind.VEGETATION, ClueKind.TERRAIN, ClueKind.VEHICLE)
_MICRO_CLUES = (ClueKind.SIGN_TEXT, ClueKind.POI)

_CANDIDATE_ROW_CAP = 40


@dataclass(frozen=True)
class PlannerContext:
    """Everything a backend may look at when deciding the next step.

    The first six fields are the textual planning surface (what a prompt
    is built from); the rest are structured views of the same episode so
    deterministic policies can avoid string parsing.
    """

    image_descriptor: str
    compressed_history: CompressedContext
    candidate_summary: str
    schema_text: str
    step: int
    remaining_steps: int
    image_ref: str = "image"
    descriptor: SceneDescriptor | None = None
    space: CandidateSpace = field(default_factory=CandidateSpace)
    gazetteer: Gazetteer | None = None
    poi_hint: PoiHint | None = None
    active_evidence_ids: tuple[int, ...] = ()
    events: tuple[TrajectoryEvent, ...] = ()
    next_action_id: int = 1
    max_parallel: int = 4
    feedback: str | None = None

    def __post_init__(self):
        if self.remaining_steps < 0:
            raise ValueError("remaining_steps must be non-negative")
        if not self.schema_text:
            raise ValueError("schema_text must be non-empty")


def describe_scene(desc: SceneDescriptor | None, media_ref: str = "") -> str:
    """Deterministic clue-only scene text; never exposes ground truth."""
    if desc is None:
        return f"An image (ref {media_ref!r}). No pre-extracted clues."
    lines = ["Observed clues:"]
    for clue in desc.clues:
        lines.append(f"- {clue.kind.value}: {clue.value!r} (salience {clue.salience:.2f})")
    return "\n".join(lines)


def summarize_space(space: CandidateSpace, g: Gazetteer | None) -> str:
    """Human-readable frontier listing, capped to a bounded row count."""
    if space.is_global:
        return "(global: no constraints applied yet)"
    rows = []
    for rid in sorted(space.frontier):
        if g is not None and rid in g:
            r = g.get(rid)
            rows.append(f"- {rid} ({r.level.value}) {r.name}")
        else:
            rows.append(f"- {rid}")
    if len(rows) > _CANDIDATE_ROW_CAP:
        hidden = len(rows) - _CANDIDATE_ROW_CAP
        rows = rows[:_CANDIDATE_ROW_CAP] + [f"- (+{hidden} more)"]
    return "\n".join(rows)


def build_prompt(ctx: PlannerContext) -> str:
    """Deterministic planning prompt; golden-file stable."""
    return (
        "You are a geolocation agent. Work out where the scene is by probing "
        "with tools and narrowing a candidate set of administrative regions.\n"
        "\n"
        "Strategy: reason from macro environment (vegetation, terrain, climate) "
        "through meso context (architecture, infrastructure) down to micro "
        "symbols (signs, storefronts, landmark names). When a salient micro "
        "clue is already visible, skip the coarser levels and chase it "
        "directly.\n"
        "\n"
        "Grounding rules: every claim must come from tool evidence gathered "
        "in this episode. A finalize decision must rest on the evidence ids "
        "listed in the working state below; if the candidates do not support "
        "a conclusion, probe further instead of guessing.\n"
        "\n"
        "Decision envelope: v1. "
        + ctx.schema_text
        + "\n"
        "## Scene\n"
        + ctx.image_descriptor
        + "\n\n"
        "## Working state\n"
        + ctx.compressed_history.render()
        + "\n\n"
        "## Candidate regions\n"
        + ctx.candidate_summary
        + "\n\n"
        f"## Budget\nThis is step {ctx.step}; {ctx.remaining_steps} more "
        "decision(s) remain after this one. Reply with one decision envelope "
        "now.\n"
    )


# ---------------------------------------------------------------------------
# Scripted backend


@dataclass(frozen=True)
class Rule:
    """Ordered policy entry; ``build`` may decline (return None) so an
    exhausted probe chain falls through to the next rule."""

    name: str
    applies: Callable[[PlannerContext], bool]
    build: Callable[[PlannerContext], Decision | None]


class ScriptedBackend:
    """Pure, deterministic policy: first matching rule that yields wins."""

    def __init__(self, rules: tuple[Rule, ...]):
        self.rules = tuple(rules)

    def decide(self, ctx: PlannerContext) -> Decision:
        for rule in self.rules:
            if rule.applies(ctx):
                decision = rule.build(ctx)
                if decision is not None:
                    return decision
        return _finalize_decision(ctx, "no rule matched")


def _finalize_decision(ctx: PlannerContext, why: str) -> Decision:
    ids = ", ".join(f"e{i}" for i in ctx.active_evidence_ids) or "none"
    return Decision(thought=f"finalize ({why}); supporting evidence: {ids}", finalize=True)


def _already_probed(ctx: PlannerContext, module: CapabilityModule, tool: Tool,
                    args: dict) -> bool:
    return is_repetition(list(ctx.events), module.value, tool.value, args)


def _next_probe(ctx: PlannerContext, module: CapabilityModule,
                chain: list[tuple[Tool, dict]], why: str) -> Decision | None:
    """First not-yet-tried probe of a chain; None once exhausted."""
    for tool, args in chain:
        if not _already_probed(ctx, module, tool, args):
            return Decision(
                thought=f"{why}: probing {module.value}/{tool.value}",
                actions=(Action(ctx.next_action_id, module, tool, dict(args)),),
            )
    return None


def _at_city_level(ctx: PlannerContext) -> bool:
    """All frontier regions sit at or under one single city."""
    space, g = ctx.space, ctx.gazetteer
    if space.is_global or space.is_empty or g is None:
        return False
    cities = set()
    for rid in space.frontier:
        city = g.city_ancestor(rid)
        if city is None:
            return False
        cities.add(city.id)
    return len(cities) == 1


def _micro_values(desc: SceneDescriptor) -> list[str]:
    return [c.value for c in desc.clues if c.kind in _MICRO_CLUES]


def _rule_finalize_hint(ctx: PlannerContext) -> bool:
    return ctx.poi_hint is not None


def _rule_finalize_city(ctx: PlannerContext) -> bool:
    return _at_city_level(ctx)


def _image_match_available(ctx: PlannerContext) -> bool:
    """Visual matching makes sense: mid-level frontier, not yet tried."""
    if ctx.space.is_global or ctx.space.is_empty or _at_city_level(ctx):
        return False
    return not _already_probed(ctx, CapabilityModule.IMAGE_MATCHING,
                               Tool.IMAGE_SEARCH, {"image": ctx.image_ref})


def _rule_image_match(ctx: PlannerContext) -> bool:
    return (_image_match_available(ctx)
            and frontier_unchanged_steps(list(ctx.events)) >= 2)


def _rule_micro(ctx: PlannerContext) -> bool:
    return ctx.descriptor is not None and bool(_micro_values(ctx.descriptor))


def _build_micro(ctx: PlannerContext) -> Decision:
    desc = ctx.descriptor
    assert desc is not None
    chain: list[tuple[Tool, dict]] = []
    if desc.clues_of(ClueKind.SIGN_TEXT):
        chain.append((Tool.OCR, {"image": ctx.image_ref}))
    values = _micro_values(desc)
    chain.extend((Tool.KNOWLEDGE_BASE, {"query": v}) for v in values)
    chain.extend((Tool.TEXT_SEARCH, {"query": v}) for v in values)
    return _next_probe(ctx, CapabilityModule.SEMANTIC_SYMBOL, chain, "micro clue")


def _rule_meso(ctx: PlannerContext) -> bool:
    return ctx.descriptor is not None and bool(
        ctx.descriptor.clues_of(ClueKind.ARCHITECTURE)
    )


def _build_meso(ctx: PlannerContext) -> Decision:
    desc = ctx.descriptor
    assert desc is not None
    values = [c.value for c in desc.clues_of(ClueKind.ARCHITECTURE)]
    chain: list[tuple[Tool, dict]] = [(Tool.CAPTION, {"image": ctx.image_ref})]
    chain.extend((Tool.KNOWLEDGE_BASE, {"query": v}) for v in values)
    chain.extend((Tool.TEXT_SEARCH, {"query": v}) for v in values)
    return _next_probe(ctx, CapabilityModule.INFRASTRUCTURE, chain, "architecture clue")


def _build_macro(ctx: PlannerContext) -> Decision:
    chain: list[tuple[Tool, dict]] = [(Tool.CAPTION, {"image": ctx.image_ref})]
    if ctx.descriptor is not None:
        for c in ctx.descriptor.clues_of(*_MACRO_CLUES):
            chain.append((Tool.TEXT_SEARCH, {"query": c.value}))
    return _next_probe(ctx, CapabilityModule.ENVIRONMENTAL, chain, "environment scan")


def _build_image_match(ctx: PlannerContext) -> Decision:
    return Decision(
        thought="frontier stalled between province and city; trying visual match",
        actions=(Action(ctx.next_action_id, CapabilityModule.IMAGE_MATCHING,
                        Tool.IMAGE_SEARCH, {"image": ctx.image_ref}),),
    )


def scripted_salience_policy() -> ScriptedBackend:
    """Reference deterministic policy over descriptor clues.

    Order: conclude when a POI hint or a single-city frontier exists; break
    a stalled mid-level frontier with visual matching; otherwise follow the
    most salient clue family — micro symbols, then architecture, then
    environment. Once every chain is exhausted, visual matching is the last
    probe; after that the policy concludes on whatever frontier remains.
    """
    return ScriptedBackend((
        Rule("finalize-poi-hint", _rule_finalize_hint,
             lambda ctx: _finalize_decision(ctx, "POI hint pins the location")),
        Rule("finalize-city", _rule_finalize_city,
             lambda ctx: _finalize_decision(ctx, "single city remains")),
        Rule("image-match-on-stall", _rule_image_match, _build_image_match),
        Rule("micro-symbols", _rule_micro, _build_micro),
        Rule("architecture", _rule_meso, _build_meso),
        Rule("environment", lambda ctx: True, _build_macro),
        Rule("image-match-last-resort", _image_match_available, _build_image_match),
        Rule("conclude", lambda ctx: True,
             lambda ctx: _finalize_decision(ctx, "no probes left")),
    ))


# ---------------------------------------------------------------------------
# LLM backend


def _validate_decision(decision: Decision) -> list[ActionIssue]:
    return [issue for a in decision.actions for issue in validate_action(a)]


@dataclass
class LlmBackend:
    """Chat-completions client with bounded parse retries and fallback.

    The auth token is read from ``auth_env`` and travels only in the
    request header; logged wire bodies never contain it.
    """

    endpoint: str
    model: str
    auth_env: str = "GEOPROBE_API_TOKEN"
    temperature: float = 0.0
    timeout_s: float = 20.0
    parse_retries: int = 2
    transport_retries: int = 2
    backoff_s: float = 0.5
    session: requests.Session = field(default_factory=requests.Session, repr=False)
    _wire: list[dict] = field(default_factory=list, repr=False)

    def drain_wire_log(self) -> list[dict]:
        out, self._wire = self._wire, []
        return out

    def _headers(self) -> dict:
        import os

        token = os.environ.get(self.auth_env, "")
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _chat(self, step: int, messages: list[dict]) -> str:
        body = {"model": self.model, "messages": messages, "temperature": self.temperature}
        self._wire.append(
            {"step": step, "kind": "request", "authorization": "redacted", "body": body}
        )
        last = "no attempt made"
        for attempt in range(self.transport_retries + 1):
            try:
                resp = self.session.post(
                    self.endpoint, json=body, headers=self._headers(), timeout=self.timeout_s
                )
            except requests.RequestException as e:
                last = repr(e)
            else:
                if resp.status_code < 500:
                    break
                last = f"HTTP {resp.status_code}"
            if attempt < self.transport_retries:
                time.sleep(self.backoff_s * (2 ** attempt))
        else:
            raise BackendUnavailableError(f"LLM endpoint unreachable: {last}")
        if resp.status_code != 200:
            raise BackendUnavailableError(f"LLM endpoint returned HTTP {resp.status_code}")
        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError):
            raise BackendUnavailableError("LLM response is not chat-completions shaped")
        self._wire.append({"step": step, "kind": "response", "body": {"content": content}})
        return str(content)

    def decide(self, ctx: PlannerContext) -> Decision:
        messages = [{"role": "user", "content": build_prompt(ctx)}]
        if ctx.feedback:
            messages.append({"role": "user", "content": ctx.feedback})
        for _ in range(self.parse_retries + 1):
            content = self._chat(ctx.step, messages)
            try:
                decision = parse_decision(
                    content, start_id=ctx.next_action_id, max_parallel=ctx.max_parallel
                )
                issues = _validate_decision(decision)
                if issues:
                    raise DecisionParseError(
                        "invalid actions: "
                        + "; ".join(f"{i.code.value}: {i.message}" for i in issues)
                    )
                return decision
            except DecisionParseError as e:
                messages.append({"role": "assistant", "content": content})
                messages.append({
                    "role": "user",
                    "content": (
                        f"That reply was not a valid decision envelope: {e}. "
                        "Answer again with exactly one JSON object in envelope "
                        "version \"1\", nothing else."
                    ),
                })
        if not ctx.space.is_global and not ctx.space.is_empty:
            return _finalize_decision(ctx, "unparseable replies; concluding from evidence")
        return Decision(
            thought="unparseable replies; falling back to a default probe",
            actions=(Action(ctx.next_action_id, CapabilityModule.ENVIRONMENTAL,
                            Tool.CAPTION, {"image": ctx.image_ref}),),
        )


# ---------------------------------------------------------------------------
# Backend-independent decision gate


def decide_next(backend, ctx: PlannerContext) -> Decision:
    """One validated decision: forced finalize at zero budget, repetition
    guard (one re-ask, then forced finalize), and an action-validity gate
    so invalid output never reaches the executor."""
    if ctx.remaining_steps == 0:
        return _finalize_decision(ctx, "step budget exhausted")

    decision = backend.decide(ctx)
    _require_valid(decision)
    if not _all_repeats(ctx, decision):
        return decision

    retry_ctx = replace(
        ctx,
        feedback=(
            "Every action in that decision repeats an earlier probe of this "
            "episode. Pick a probe you have not tried, or finalize."
        ),
    )
    decision = backend.decide(retry_ctx)
    _require_valid(decision)
    if not _all_repeats(ctx, decision):
        return decision
    return _finalize_decision(ctx, "backend kept repeating probes")


def _all_repeats(ctx: PlannerContext, decision: Decision) -> bool:
    if not decision.actions:
        return False
    return all(
        is_repetition(list(ctx.events), a.module.value, a.tool.value, a.args)
        for a in decision.actions
    )


def _require_valid(decision: Decision) -> None:
    issues = _validate_decision(decision)
    if issues:
        raise DecisionParseError(
            "backend produced invalid actions: "
            + "; ".join(f"{i.code.value}: {i.message}" for i in issues)
        )


def default_schema_text() -> str:
    return render_action_schema()
