"""Event-condition-action rule store and execution engine.

Rules follow the usual smart-home shape: triggers are edge-matched against
state-change events (OR across triggers), conditions are level-checked
against current state (AND), actions run sequentially as service calls.
Events emitted by actions cascade breadth-first up to a depth limit. The
store serializes to canonical JSON (sorted keys, no insignificant
whitespace) so round-trips are byte-stable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable

from .environment import Environment, StateChangeEvent, Value, _check_param_value
from .errors import (
    CascadeLimitError,
    DuplicateRuleIdError,
    EcabotError,
    FixtureError,
    RuleValidationError,
    UnknownRuleError,
)

CONDITION_OPS = ("eq", "ne", "lt", "le", "gt", "ge")
ORDERING_OPS = ("lt", "le", "gt", "ge")

DEFAULT_CASCADE_LIMIT = 8


@dataclass(frozen=True)
class Trigger:
    entity: str
    attribute: str
    to: Value | None = None
    from_: Value | None = None

    def matches(self, event: StateChangeEvent) -> bool:
        if event.entity_id != self.entity or event.attribute != self.attribute:
            return False
        if self.from_ is not None and event.old != self.from_:
            return False
        if self.to is not None and event.new != self.to:
            return False
        return True

    def to_dict(self) -> dict:
        out: dict = {"entity": self.entity, "attribute": self.attribute}
        if self.from_ is not None:
            out["from"] = self.from_
        if self.to is not None:
            out["to"] = self.to
        return out


@dataclass(frozen=True)
class Condition:
    entity: str
    attribute: str
    op: str
    value: Value

    def holds(self, env: Environment) -> bool:
        current = env.get_state(self.entity, self.attribute)
        if self.op == "eq":
            return current == self.value
        if self.op == "ne":
            return current != self.value
        if self.op == "lt":
            return current < self.value
        if self.op == "le":
            return current <= self.value
        if self.op == "gt":
            return current > self.value
        if self.op == "ge":
            return current >= self.value
        raise EcabotError(f"bad condition op {self.op!r}")

    def to_dict(self) -> dict:
        return {
            "entity": self.entity,
            "attribute": self.attribute,
            "op": self.op,
            "value": self.value,
        }


@dataclass(frozen=True)
class Action:
    entity: str
    service: str
    args: dict[str, Value] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"entity": self.entity, "service": self.service, "args": dict(self.args)}


@dataclass
class EcaRule:
    id: str
    alias: str
    triggers: list[Trigger]
    conditions: list[Condition]
    actions: list[Action]
    enabled: bool = True

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "alias": self.alias,
            "enabled": self.enabled,
            "triggers": [t.to_dict() for t in self.triggers],
            "conditions": [c.to_dict() for c in self.conditions],
            "actions": [a.to_dict() for a in self.actions],
        }


@dataclass
class RulePatch:
    """Partial rule update; None fields are left untouched."""

    alias: str | None = None
    triggers: list[Trigger] | None = None
    conditions: list[Condition] | None = None
    actions: list[Action] | None = None
    enabled: bool | None = None

    def is_empty(self) -> bool:
        return all(
            v is None
            for v in (self.alias, self.triggers, self.conditions, self.actions, self.enabled)
        )


@dataclass
class FiringRecord:
    """Audit record of one rule evaluation against one event.

    ``fired`` is true exactly when the rule is enabled and every condition
    held; disabled rules are still matched and evaluated so the audit trail
    shows what they would have done.
    """

    rule_id: str
    event: StateChangeEvent
    enabled: bool
    conditions_evaluated: list[tuple[Condition, bool]]
    fired: bool
    emitted_events: list[StateChangeEvent]
    clock: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "event": self.event.to_dict(),
            "enabled": self.enabled,
            "conditions_evaluated": [
                {"condition": c.to_dict(), "holds": ok}
                for c, ok in self.conditions_evaluated
            ],
            "fired": self.fired,
            "emitted_events": [e.to_dict() for e in self.emitted_events],
            "clock": self.clock,
            "error": self.error,
        }


@dataclass(frozen=True)
class Finding:
    path: str  # e.g. "triggers[0]"
    code: str  # e.g. "unknown-entity"
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.code}: {self.message}"

    def to_dict(self) -> dict:
        return {"path": self.path, "code": self.code, "message": self.message}


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _check_reference(env: Environment, entity: str, attribute: str, path: str) -> list[Finding]:
    ent = env.entities.get(entity)
    if ent is None:
        return [Finding(path, "unknown-entity", f"no entity {entity!r} in environment")]
    schema = env.schema_for(ent).attribute(attribute)
    if schema is None:
        return [Finding(path, "unknown-attribute", f"entity {entity!r} has no attribute {attribute!r}")]
    return []


def validate_trigger(trigger: Trigger, env: Environment, path: str = "trigger") -> list[Finding]:
    findings = _check_reference(env, trigger.entity, trigger.attribute, path)
    if findings:
        return findings
    schema = env.attribute_schema(trigger.entity, trigger.attribute)
    for label, value in (("to", trigger.to), ("from", trigger.from_)):
        if value is not None:
            reason = schema.check(value)
            if reason is not None:
                findings.append(Finding(path, "bad-value", f"{label}: {reason}"))
    if trigger.to is not None and trigger.from_ is not None and trigger.to == trigger.from_:
        findings.append(Finding(path, "same-from-to", "'from' and 'to' must differ"))
    return findings


def validate_condition(cond: Condition, env: Environment, path: str = "condition") -> list[Finding]:
    findings = _check_reference(env, cond.entity, cond.attribute, path)
    if findings:
        return findings
    if cond.op not in CONDITION_OPS:
        return [Finding(path, "bad-op", f"unknown op {cond.op!r}")]
    schema = env.attribute_schema(cond.entity, cond.attribute)
    if cond.op in ORDERING_OPS and schema.kind != "number":
        findings.append(
            Finding(path, "bad-op", f"op {cond.op!r} needs a number attribute, got {schema.kind}")
        )
    reason = schema.check(cond.value)
    if reason is not None:
        findings.append(Finding(path, "bad-value", reason))
    return findings


def validate_action(action: Action, env: Environment, path: str = "action") -> list[Finding]:
    ent = env.entities.get(action.entity)
    if ent is None:
        return [Finding(path, "unknown-entity", f"no entity {action.entity!r} in environment")]
    service = env.schema_for(ent).service(action.service)
    if service is None:
        return [
            Finding(path, "unknown-service", f"entity {action.entity!r} has no service {action.service!r}")
        ]
    findings = []
    for p in service.params:
        if p.required and p.name not in action.args:
            findings.append(Finding(path, "missing-param", f"required param {p.name!r} absent"))
    for name, value in action.args.items():
        p = service.param(name)
        if p is None:
            findings.append(Finding(path, "unknown-param", f"service takes no param {name!r}"))
            continue
        reason = _check_param_value(p, value, ent)
        if reason is not None:
            findings.append(Finding(path, "bad-value", f"{name}: {reason}"))
    return findings


def validate_rule(rule: EcaRule, env: Environment) -> list[Finding]:
    """Return validation findings; empty list means the rule is ok."""
    findings: list[Finding] = []
    if not rule.triggers:
        findings.append(Finding("triggers", "empty-triggers", "rule needs at least one trigger"))
    if not rule.actions:
        findings.append(Finding("actions", "empty-actions", "rule needs at least one action"))
    for i, t in enumerate(rule.triggers):
        findings.extend(validate_trigger(t, env, f"triggers[{i}]"))
    for i, c in enumerate(rule.conditions):
        findings.extend(validate_condition(c, env, f"conditions[{i}]"))
    for i, a in enumerate(rule.actions):
        findings.extend(validate_action(a, env, f"actions[{i}]"))
    return findings


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


class RuleStore:
    """Ordered rule collection with validated CRUD."""

    def __init__(self) -> None:
        self._rules: dict[str, EcaRule] = {}

    def __len__(self) -> int:
        return len(self._rules)

    def __iter__(self):
        return iter(self._rules.values())

    def list_rules(self) -> list[EcaRule]:
        return list(self._rules.values())

    def get(self, rule_id: str) -> EcaRule:
        rule = self._rules.get(rule_id)
        if rule is None:
            raise UnknownRuleError(rule_id)
        return rule

    def generate_id(self) -> str:
        taken = set(self._rules)
        n = len(self._rules) + 1
        while f"rule-{n}" in taken:
            n += 1
        return f"rule-{n}"

    def add_rule(self, rule: EcaRule, env: Environment) -> str:
        if rule.id in self._rules:
            raise DuplicateRuleIdError(rule.id)
        findings = validate_rule(rule, env)
        if findings:
            raise RuleValidationError(findings)
        self._rules[rule.id] = rule
        return rule.id

    def modify_rule(self, rule_id: str, patch: RulePatch, env: Environment) -> EcaRule:
        current = self.get(rule_id)
        patched = EcaRule(
            id=current.id,
            alias=patch.alias if patch.alias is not None else current.alias,
            triggers=list(patch.triggers) if patch.triggers is not None else list(current.triggers),
            conditions=list(patch.conditions)
            if patch.conditions is not None
            else list(current.conditions),
            actions=list(patch.actions) if patch.actions is not None else list(current.actions),
            enabled=patch.enabled if patch.enabled is not None else current.enabled,
        )
        findings = validate_rule(patched, env)
        if findings:
            raise RuleValidationError(findings)
        # replace in place; dict preserves insertion order
        self._rules[rule_id] = patched
        return patched

    def delete_rule(self, rule_id: str) -> EcaRule:
        rule = self.get(rule_id)
        del self._rules[rule_id]
        return rule

    def find_rules(self, query: str, env: Environment) -> list[EcaRule]:
        """Rules whose alias or referenced display-names hit any query token.

        Ranked by number of distinct matching tokens, ties by insertion order.
        """
        query_tokens = _tokens(query)
        if not query_tokens:
            return []
        scored: list[tuple[int, int, EcaRule]] = []
        for index, rule in enumerate(self._rules.values()):
            haystack = set(_tokens(rule.alias))
            for entity_id in _referenced_entities(rule):
                ent = env.entities.get(entity_id)
                if ent is not None:
                    haystack.update(_tokens(ent.display_name))
            score = sum(1 for t in query_tokens if _token_hits(t, haystack))
            if score > 0:
                scored.append((score, index, rule))
        scored.sort(key=lambda item: (-item[0], item[1]))
        return [rule for _, _, rule in scored]


def _referenced_entities(rule: EcaRule) -> Iterable[str]:
    for t in rule.triggers:
        yield t.entity
    for c in rule.conditions:
        yield c.entity
    for a in rule.actions:
        yield a.entity


# function words carry no signal for matching rules to a description
_STOPWORDS = frozenset(
    "the a an and or of to for in on is it i at by my me do you want when "
    "with that this no yes".split()
)


def _tokens(text: str) -> list[str]:
    return [t for t in re.findall(r"[a-z0-9]+", text.lower()) if t not in _STOPWORDS]


def _token_hits(token: str, haystack: set[str]) -> bool:
    if token in haystack:
        return True
    if len(token) < 3:
        return False
    # stem-ish prefix match so "lighting" hits "light"
    return any(
        len(w) >= 3 and (w.startswith(token) or token.startswith(w)) for w in haystack
    )


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def on_event(
    store: RuleStore,
    env: Environment,
    event: StateChangeEvent,
    cascade_limit: int = DEFAULT_CASCADE_LIMIT,
) -> list[FiringRecord]:
    """Dispatch an event through the store; returns firing records.

    Events emitted by actions are re-enqueued breadth-first; wave ``0`` is
    the injected event, waves ``1..cascade_limit`` are cascades. Raises
    :class:`CascadeLimitError` (records retained) past the limit.
    """
    with env.lock:
        records: list[FiringRecord] = []
        wave: list[StateChangeEvent] = [event]
        depth = 0
        while wave:
            if depth > cascade_limit:
                raise CascadeLimitError(cascade_limit, records)
            next_wave: list[StateChangeEvent] = []
            for ev in wave:
                for rule in store:
                    if not any(t.matches(ev) for t in rule.triggers):
                        continue
                    record = _evaluate(rule, env, ev)
                    records.append(record)
                    next_wave.extend(record.emitted_events)
            wave = next_wave
            depth += 1
        return records


def _evaluate(rule: EcaRule, env: Environment, event: StateChangeEvent) -> FiringRecord:
    evaluated = [(c, c.holds(env)) for c in rule.conditions]
    fired = rule.enabled and all(ok for _, ok in evaluated)
    emitted: list[StateChangeEvent] = []
    error: str | None = None
    if fired:
        for action in rule.actions:
            try:
                emitted.extend(env.call_service(action.entity, action.service, action.args))
            except EcabotError as exc:
                error = f"{action.entity}.{action.service}: {exc}"
                break
    return FiringRecord(
        rule_id=rule.id,
        event=event,
        enabled=rule.enabled,
        conditions_evaluated=evaluated,
        fired=fired,
        emitted_events=emitted,
        clock=env.clock,
        error=error,
    )


def inject(
    store: RuleStore,
    env: Environment,
    entity_id: str,
    attribute: str,
    value: Value,
    cascade_limit: int = DEFAULT_CASCADE_LIMIT,
) -> tuple[StateChangeEvent | None, list[FiringRecord]]:
    """Write state and dispatch the resulting event, if any.

    A no-change write produces no event and therefore no rule evaluation.
    """
    with env.lock:
        event = env.set_state(entity_id, attribute, value)
        if event is None:
            return None, []
        return event, on_event(store, env, event, cascade_limit)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def serialize_rules(store: RuleStore) -> str:
    """Canonical JSON: sorted keys, compact separators, stable array order."""
    doc = {"automations": [rule.to_dict() for rule in store]}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def rule_from_dict(raw: dict, locus: str = "rule") -> EcaRule:
    def expect(obj: dict, key: str, where: str):
        if key not in obj:
            raise FixtureError(f"{where}: missing field {key!r}")
        return obj[key]

    triggers = []
    for i, t in enumerate(raw.get("triggers", [])):
        tloc = f"{locus}.triggers[{i}]"
        triggers.append(
            Trigger(
                entity=expect(t, "entity", tloc),
                attribute=expect(t, "attribute", tloc),
                to=t.get("to"),
                from_=t.get("from"),
            )
        )
    conditions = []
    for i, c in enumerate(raw.get("conditions", [])):
        cloc = f"{locus}.conditions[{i}]"
        conditions.append(
            Condition(
                entity=expect(c, "entity", cloc),
                attribute=expect(c, "attribute", cloc),
                op=expect(c, "op", cloc),
                value=expect(c, "value", cloc),
            )
        )
    actions = []
    for i, a in enumerate(raw.get("actions", [])):
        aloc = f"{locus}.actions[{i}]"
        actions.append(
            Action(
                entity=expect(a, "entity", aloc),
                service=expect(a, "service", aloc),
                args=dict(a.get("args", {})),
            )
        )
    return EcaRule(
        id=expect(raw, "id", locus),
        alias=expect(raw, "alias", locus),
        triggers=triggers,
        conditions=conditions,
        actions=actions,
        enabled=raw.get("enabled", True),
    )


def parse_rules(text: str | bytes, env: Environment) -> RuleStore:
    """Parse a rules document, validating every rule against the environment."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"rules:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "automations" not in doc:
        raise FixtureError("rules: missing top-level 'automations' array")
    store = RuleStore()
    for i, raw in enumerate(doc["automations"]):
        rule = rule_from_dict(raw, f"automations[{i}]")
        try:
            store.add_rule(rule, env)
        except RuleValidationError as exc:
            raise FixtureError(f"automations[{i}]: {exc}") from exc
    return store
