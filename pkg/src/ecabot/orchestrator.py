"""Staged dialogue orchestration over the rule engine.

Every user turn flows through a router that picks one of four working
stages (Define, Explore, Refine, Confirm); the routed node answers through
the dialogue provider under a stage- and scenario-specific prompt. The
orchestrator, not the model, owns the draft automation: structured patches
from bot turns are validated against the environment before they touch the
draft, and saving happens only after an explicit confirmation question has
been answered while the draft is complete. A successful save clears the
conversation history and resets the draft.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from . import assets
from .context import (
    DEFAULT_BUDGET,
    FocusState,
    capture,
    render_text,
    summarize_slots,
)
from .engine import (
    EcaRule,
    Finding,
    RulePatch,
    RuleStore,
    rule_from_dict,
    validate_rule,
)
from .environment import Environment, load_environment
from .errors import (
    ConfigError,
    EmptyDraftError,
    ExportNotReadyError,
    FixtureError,
    ReplySchemaError,
    RoutingFailureError,
    RuleValidationError,
)
from .providers import ChatMessage, CompletionRequest, ProviderBundle, Script


class Stage(Enum):
    Define = "define"
    Explore = "explore"
    Refine = "refine"
    Confirm = "confirm"
    Export = "export"


ROUTABLE_STAGES = (Stage.Define, Stage.Explore, Stage.Refine, Stage.Confirm)
STAGE_VALUES = tuple(s.value for s in Stage)

INTENTS = ("continue", "ask-confirm", "export", "abort")

DRAFT_SLOTS = ("triggers", "conditions", "actions")

BOT_TURN_SCHEMA = {
    "type": "object",
    "properties": {
        "stage": {"enum": list(STAGE_VALUES)},
        "message": {"type": "string"},
        "intent": {"enum": list(INTENTS)},
        "draft_patch": {
            "type": "object",
            "properties": {
                "alias": {"type": "string"},
                "target_rule_id": {"type": "string"},
                "triggers": {"type": "array", "items": {"type": "object"}},
                "conditions": {"type": "array", "items": {"type": "object"}},
                "actions": {"type": "array", "items": {"type": "object"}},
            },
            "additionalProperties": False,
        },
        "set_mode": {"enum": ["create", "modify"]},
        "modify_query": {"type": "string"},
    },
    "required": ["stage", "message", "intent"],
    "additionalProperties": False,
}

ROUTER_REPLY_SCHEMA = {
    "type": "object",
    "properties": {"stage": {"enum": list(STAGE_VALUES)}},
    "required": ["stage"],
    "additionalProperties": False,
}

ROUTER_PROMPT = (
    "You are the router of an automation-authoring assistant. Classify the "
    "latest user message into exactly one stage:\n"
    "- define: greeting, stating a new goal, or choosing between creating "
    "and modifying an automation\n"
    "- explore: asking what devices, media, or options are available\n"
    "- refine: adding or changing triggers, conditions, or actions of the "
    "automation being discussed\n"
    "- confirm: reacting to a summary of the automation, approving or "
    "rejecting it\n"
    "Users move between stages freely; never assume an order. Respond with "
    'a single JSON object like {"stage": "define"} and nothing else.'
)


@dataclass
class DraftRule:
    """Automation under construction; slots hold raw wire-shaped dicts."""

    alias: str | None = None
    triggers: list[dict] | None = None
    conditions: list[dict] | None = None
    actions: list[dict] | None = None
    target_rule_id: str | None = None

    def is_empty(self) -> bool:
        return (
            self.alias is None
            and self.triggers is None
            and self.conditions is None
            and self.actions is None
            and self.target_rule_id is None
        )

    def populated_slots(self) -> list[str]:
        return [s for s in DRAFT_SLOTS if getattr(self, s) is not None]

    def slot_findings(self, env: Environment) -> list[Finding]:
        """Structural validity of whatever slots are populated so far."""
        raw = {
            "id": "draft",
            "alias": self.alias or "draft",
            "triggers": self.triggers or [],
            "conditions": self.conditions or [],
            "actions": self.actions or [],
        }
        try:
            rule = rule_from_dict(raw)
        except FixtureError as exc:
            return [Finding("draft", "malformed", str(exc))]
        findings = validate_rule(rule, env)
        # emptiness is a completeness concern, not a slot error
        return [f for f in findings if f.code not in ("empty-triggers", "empty-actions")]

    def completeness_findings(self, env: Environment, store: RuleStore, mode: str) -> list[Finding]:
        if mode == "modify":
            if self.target_rule_id is None:
                return [Finding("draft", "no-target", "no automation selected to modify")]
            try:
                target = store.get(self.target_rule_id)
            except Exception:
                return [Finding("draft", "unknown-target", f"no rule {self.target_rule_id!r}")]
            if not self.populated_slots() and self.alias is None:
                return [Finding("draft", "empty-patch", "nothing changed yet")]
            merged = {
                "id": target.id,
                "alias": self.alias if self.alias is not None else target.alias,
                "triggers": self.triggers
                if self.triggers is not None
                else [t.to_dict() for t in target.triggers],
                "conditions": self.conditions
                if self.conditions is not None
                else [c.to_dict() for c in target.conditions],
                "actions": self.actions
                if self.actions is not None
                else [a.to_dict() for a in target.actions],
            }
            try:
                return validate_rule(rule_from_dict(merged), env)
            except FixtureError as exc:
                return [Finding("draft", "malformed", str(exc))]
        raw = {
            "id": "draft",
            "alias": self.alias or "draft",
            "triggers": self.triggers or [],
            "conditions": self.conditions or [],
            "actions": self.actions or [],
        }
        try:
            return validate_rule(rule_from_dict(raw), env)
        except FixtureError as exc:
            return [Finding("draft", "malformed", str(exc))]

    def is_complete(self, env: Environment, store: RuleStore, mode: str) -> bool:
        return not self.completeness_findings(env, store, mode)

    def to_dict(self) -> dict:
        return {
            "alias": self.alias,
            "triggers": self.triggers,
            "conditions": self.conditions,
            "actions": self.actions,
            "target_rule_id": self.target_rule_id,
        }


def summarize_draft(draft: DraftRule, env: Environment) -> str:
    """Natural-language restatement of the draft; display names, never ids."""
    if draft.is_empty():
        raise EmptyDraftError("draft has no populated slot to summarize")
    return summarize_slots(
        draft.triggers or [], draft.conditions or [], draft.actions or [], env
    )


@dataclass
class BotTurn:
    stage: Stage
    message: str
    intent: str
    draft_patch: dict | None = None
    set_mode: str | None = None
    modify_query: str | None = None

    @classmethod
    def from_reply(cls, reply: dict) -> "BotTurn":
        return cls(
            stage=Stage(reply["stage"]),
            message=reply["message"],
            intent=reply["intent"],
            draft_patch=reply.get("draft_patch"),
            set_mode=reply.get("set_mode"),
            modify_query=reply.get("modify_query"),
        )

    def to_dict(self) -> dict:
        out: dict = {
            "stage": self.stage.value,
            "message": self.message,
            "intent": self.intent,
        }
        if self.draft_patch is not None:
            out["draft_patch"] = self.draft_patch
        if self.set_mode is not None:
            out["set_mode"] = self.set_mode
        if self.modify_query is not None:
            out["modify_query"] = self.modify_query
        return out


@dataclass
class TurnRecord:
    user_text: str
    routed: Stage
    turn: BotTurn

    def to_dict(self) -> dict:
        return {
            "user": self.user_text,
            "routed_stage": self.routed.value,
            "turn": self.turn.to_dict(),
        }


@dataclass
class DialogueState:
    session_id: str
    history: list[ChatMessage] = field(default_factory=list)
    stage: Stage = Stage.Define
    draft: DraftRule = field(default_factory=DraftRule)
    turn_log: list[TurnRecord] = field(default_factory=list)
    mode: str = "create"
    pending_confirmation: bool = False

    def stage_sequence(self) -> list[Stage]:
        return [record.turn.stage for record in self.turn_log]

    def reset_draft(self) -> None:
        self.draft = DraftRule()
        self.mode = "create"
        self.pending_confirmation = False

    def transcript_lines(self) -> list[str]:
        return [
            json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            for r in self.turn_log
        ]


class Orchestrator:
    """Drives one scenario's sessions over a shared environment and store."""

    def __init__(
        self,
        scenario: str,
        env: Environment,
        store: RuleStore,
        providers: ProviderBundle,
        context_budget: int = DEFAULT_BUDGET,
    ) -> None:
        self.scenario = scenario
        self.env = env
        self.store = store
        self.providers = providers
        self.context_budget = context_budget

    def new_state(self, session_id: str) -> DialogueState:
        return DialogueState(session_id=session_id)

    # -- routing ------------------------------------------------------------

    def route(self, state: DialogueState, user_text: str, context_text: str) -> Stage:
        """Pick the working stage for this turn via the router instance."""
        if not user_text.strip():
            raise ConfigError("user text must be non-empty")
        messages = [
            ChatMessage("system", ROUTER_PROMPT),
            ChatMessage("user", f"{context_text}\n\nUser message: {user_text}"),
        ]
        request = CompletionRequest(
            instance="router", messages=messages, response_schema=ROUTER_REPLY_SCHEMA
        )
        try:
            reply = self.providers.router.complete(request)
        except ReplySchemaError as exc:
            raise RoutingFailureError(str(exc)) from exc
        stage = Stage(reply["stage"])
        # saving is gated behind confirmation, never routed to directly
        if stage is Stage.Export:
            return Stage.Confirm
        return stage

    # -- the main turn ------------------------------------------------------

    def step(
        self, state: DialogueState, user_text: str, focus: FocusState | None = None
    ) -> BotTurn:
        text = user_text.strip()
        if not text:
            raise ConfigError("user text must be non-empty")
        focus = focus or FocusState()
        snapshot = capture(self.env, focus, self.store)
        context_text = render_text(snapshot, self.context_budget)
        automations_text = (
            "\n".join(d.render() for d in snapshot.automations)
            if snapshot.automations
            else "(none)"
        )

        try:
            routed = self.route(state, text, context_text)
        except RoutingFailureError:
            routed = state.stage if state.stage in ROUTABLE_STAGES else Stage.Define

        prompt = (
            assets.prompt_text(routed.value, self.scenario)
            .replace("{{CONTEXT}}", context_text)
            .replace("{{AUTOMATIONS}}", automations_text)
        )
        messages = [ChatMessage("system", prompt)]
        messages.extend(state.history)
        messages.append(ChatMessage("user", text))
        reply = self.providers.dialogue.complete(
            CompletionRequest(
                instance="dialogue", messages=messages, response_schema=BOT_TURN_SCHEMA
            )
        )
        turn = BotTurn.from_reply(reply)
        # the node that produced the turn is the routed one, whatever the
        # reply claims; scripted replies agree by construction
        turn.stage = routed

        if turn.set_mode is not None:
            state.mode = turn.set_mode
            if turn.set_mode == "create":
                state.draft.target_rule_id = None

        if turn.modify_query is not None and state.mode == "modify":
            _, turn = self.begin_modification(state, turn.modify_query, turn)
        elif turn.draft_patch is not None:
            turn = self._apply_patch(state, turn)

        exported = False
        if turn.intent == "ask-confirm":
            state.pending_confirmation = True
        elif turn.intent == "export":
            turn, exported = self._try_export(state, routed, turn)
        else:
            state.pending_confirmation = False
            if turn.intent == "abort":
                state.reset_draft()

        state.history.append(ChatMessage("user", text))
        state.history.append(ChatMessage("assistant", turn.message))
        if exported:
            state.history.clear()
            state.reset_draft()
            state.stage = Stage.Define
        else:
            state.stage = routed
        state.turn_log.append(TurnRecord(user_text=text, routed=routed, turn=turn))
        return turn

    def _apply_patch(self, state: DialogueState, turn: BotTurn) -> BotTurn:
        """Wholesale per-slot replacement; a bad patch never lands."""
        patch = turn.draft_patch or {}
        draft = state.draft
        backup = DraftRule(**draft.to_dict())
        if "alias" in patch:
            draft.alias = patch["alias"]
        if "target_rule_id" in patch:
            draft.target_rule_id = patch["target_rule_id"]
        for slot in DRAFT_SLOTS:
            if slot in patch:
                setattr(draft, slot, [dict(item) for item in patch[slot]])
        findings = draft.slot_findings(self.env)
        if findings:
            state.draft = backup
            details = "; ".join(str(f) for f in findings[:3])
            return BotTurn(
                stage=Stage.Refine,
                message=f"I could not apply that change: {details}. Could you rephrase it?",
                intent="continue",
            )
        return turn

    def _try_export(
        self, state: DialogueState, routed: Stage, turn: BotTurn
    ) -> tuple[BotTurn, bool]:
        reasons: list[str] = []
        if routed is not Stage.Confirm:
            reasons.append("saving needs a confirmation step")
        if not state.pending_confirmation:
            reasons.append("I have not asked for your confirmation yet")
        findings = state.draft.completeness_findings(self.env, self.store, state.mode)
        reasons.extend(str(f) for f in findings)
        state.pending_confirmation = False
        if reasons:
            return (
                BotTurn(
                    stage=Stage.Refine,
                    message=f"I cannot save this yet: {'; '.join(reasons[:3])}.",
                    intent="continue",
                ),
                False,
            )
        try:
            self.export_rule(state)
        except (RuleValidationError, ExportNotReadyError, EmptyDraftError) as exc:
            return (
                BotTurn(
                    stage=Stage.Refine,
                    message=f"I cannot save this yet: {exc}.",
                    intent="continue",
                ),
                False,
            )
        turn.stage = Stage.Export
        return turn, True

    # -- export -------------------------------------------------------------

    def export_rule(self, state: DialogueState) -> EcaRule:
        """Translate the confirmed draft into a stored automation."""
        draft = state.draft
        if draft.is_empty():
            raise EmptyDraftError("nothing drafted yet")
        if state.mode == "modify":
            if draft.target_rule_id is None:
                raise ExportNotReadyError("no automation selected to modify")
            target = self.store.get(draft.target_rule_id)
            patch = RulePatch()
            parsed = rule_from_dict(
                {
                    "id": target.id,
                    "alias": draft.alias if draft.alias is not None else target.alias,
                    "triggers": draft.triggers or [],
                    "conditions": draft.conditions or [],
                    "actions": draft.actions or [],
                }
            )
            if draft.alias is not None and draft.alias != target.alias:
                patch.alias = draft.alias
            if draft.triggers is not None and parsed.triggers != target.triggers:
                patch.triggers = parsed.triggers
            if draft.conditions is not None and parsed.conditions != target.conditions:
                patch.conditions = parsed.conditions
            if draft.actions is not None and parsed.actions != target.actions:
                patch.actions = parsed.actions
            if patch.is_empty():
                raise ExportNotReadyError("the requested change matches the automation as it is")
            return self.store.modify_rule(target.id, patch, self.env)
        rule_id = self.store.generate_id()
        rule = rule_from_dict(
            {
                "id": rule_id,
                "alias": draft.alias or f"Automation {rule_id}",
                "triggers": draft.triggers or [],
                "conditions": draft.conditions or [],
                "actions": draft.actions or [],
            }
        )
        self.store.add_rule(rule, self.env)
        return rule

    # -- modification -------------------------------------------------------

    def begin_modification(
        self, state: DialogueState, query: str, turn: BotTurn | None = None
    ) -> tuple[list[EcaRule], BotTurn]:
        """Resolve which stored automation the user wants to change.

        Zero hits ask for a better description, a unique hit binds the
        draft target, several hits become a disambiguation question that
        always lists the candidate aliases.
        """
        candidates = self.store.find_rules(query, self.env)
        base_message = turn.message if turn is not None and turn.message else ""
        if not candidates:
            out = BotTurn(
                stage=Stage.Explore,
                message=base_message
                or "I could not find any automation matching that description. "
                "Could you describe it differently?",
                intent="continue",
            )
        elif len(candidates) == 1:
            chosen = candidates[0]
            state.draft.target_rule_id = chosen.id
            out = BotTurn(
                stage=Stage.Refine,
                message=base_message
                or f'Found "{chosen.alias}". What should I change?',
                intent="continue",
            )
        else:
            listing = "\n".join(
                f"{i}. {rule.alias}" for i, rule in enumerate(candidates, start=1)
            )
            preamble = base_message or "I found several matching automations."
            out = BotTurn(
                stage=Stage.Explore,
                message=f"{preamble}\n{listing}\nWhich one do you mean?",
                intent="continue",
            )
        return candidates, out


def run_script(
    script: Script,
    env: Environment | None = None,
    store: RuleStore | None = None,
    session_id: str = "replay",
    context_budget: int = DEFAULT_BUDGET,
) -> tuple[DialogueState, RuleStore, Environment, Orchestrator]:
    """Drive a whole scripted conversation; returns the final state.

    The script's own scenario, turns, and seed automations set everything
    up, so a replay is a pure function of (script, fixtures).
    """
    if not script.turns:
        raise ConfigError("script carries no 'turns' to replay")
    scenario = script.scenario or "vr-museum"
    if env is None:
        env = load_environment(scenario)
    if store is None:
        store = RuleStore()
    for raw in script.seed_automations:
        store.add_rule(rule_from_dict(raw), env)
    orchestrator = Orchestrator(
        scenario, env, store, ProviderBundle.scripted(script), context_budget
    )
    state = orchestrator.new_state(session_id)
    for text in script.turns:
        orchestrator.step(state, text)
    return state, store, env, orchestrator
