"""Environment context capture and textual serialization for prompts.

The bot never sees the environment directly; each turn it gets a rendered
text block with four fixed sections (FOCUS, OBJECTS, AUTOMATIONS, CLOCK).
Focus streams (framed, pointed, grabbed, proximate) decide which object
digests survive truncation when the block exceeds its character budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .environment import Environment, Value
from .errors import BudgetTooSmallError, ConfigError, UnknownEntityError

MIN_BUDGET = 500
DEFAULT_BUDGET = 6000

TRUNCATION_MARKER = "(+{n} objects omitted)"


@dataclass
class FocusState:
    """What the user is looking at, pointing at, holding, or standing near."""

    framed: list[str] = field(default_factory=list)
    pointed: str | None = None
    grabbed: str | None = None
    proximate: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict) -> "FocusState":
        framed = raw.get("framed", [])
        pointed = raw.get("pointed")
        grabbed = raw.get("grabbed")
        proximate = raw.get("proximate", [])
        for name, ids in (("framed", framed), ("proximate", proximate)):
            if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
                raise ConfigError(f"focus {name!r} must be a list of entity ids")
        for name, one in (("pointed", pointed), ("grabbed", grabbed)):
            if one is not None and not isinstance(one, str):
                raise ConfigError(f"focus {name!r} must be a single entity id")
        return cls(
            framed=list(framed), pointed=pointed, grabbed=grabbed, proximate=list(proximate)
        )

    def to_dict(self) -> dict:
        return {
            "framed": list(self.framed),
            "pointed": self.pointed,
            "grabbed": self.grabbed,
            "proximate": list(self.proximate),
        }

    def all_ids(self) -> list[str]:
        ids = list(self.framed)
        if self.pointed is not None:
            ids.append(self.pointed)
        if self.grabbed is not None:
            ids.append(self.grabbed)
        ids.extend(self.proximate)
        return ids

    def is_empty(self) -> bool:
        return not self.all_ids()


@dataclass
class ObjectDigest:
    entity_id: str
    display_name: str
    kind: str
    attributes: dict[str, Value]
    services: list[str]
    media_library: list[str]

    def render(self) -> str:
        state = ", ".join(f"{k}={_fmt(v)}" for k, v in self.attributes.items())
        line = f'- {self.entity_id} ({self.kind}) "{self.display_name}": {state}'
        if self.services:
            line += f"; services: {', '.join(self.services)}"
        if self.media_library:
            line += f"; media: {', '.join(self.media_library)}"
        return line


@dataclass
class RuleDigest:
    rule_id: str
    alias: str
    summary: str

    def render(self) -> str:
        return f'- {self.rule_id} "{self.alias}": {self.summary}'


@dataclass
class ContextSnapshot:
    scenario_id: str
    clock: float
    hour: int
    focus: FocusState
    objects: list[ObjectDigest]  # sorted by entity id
    automations: list[RuleDigest]  # store order


def capture(env: Environment, focus: FocusState, store=None) -> ContextSnapshot:
    """Snapshot the environment for one dialogue turn.

    The optional store feeds the AUTOMATIONS digest; unknown focus ids
    raise before anything is copied.
    """
    with env.lock:
        for entity_id in focus.all_ids():
            if entity_id not in env.entities:
                raise UnknownEntityError(entity_id)
        objects = []
        for entity_id in sorted(env.entities):
            ent = env.entities[entity_id]
            schema = env.schema_for(ent)
            objects.append(
                ObjectDigest(
                    entity_id=entity_id,
                    display_name=ent.display_name,
                    kind=ent.kind,
                    attributes=dict(ent.state),
                    services=[s.name for s in schema.services],
                    media_library=list(ent.media_library or []),
                )
            )
        automations = []
        if store is not None:
            for rule in store:
                automations.append(
                    RuleDigest(
                        rule_id=rule.id,
                        alias=rule.alias,
                        summary=summarize_slots(
                            [t.to_dict() for t in rule.triggers],
                            [c.to_dict() for c in rule.conditions],
                            [a.to_dict() for a in rule.actions],
                            env,
                        ),
                    )
                )
        hour = 0
        for ent in env.entities.values():
            if ent.kind == "clock":
                hour = int(ent.state.get("hour", 0))
                break
        return ContextSnapshot(
            scenario_id=env.scenario_id,
            clock=env.clock,
            hour=hour,
            focus=FocusState.from_dict(focus.to_dict()),
            objects=objects,
            automations=automations,
        )


def render_text(snapshot: ContextSnapshot, budget: int = DEFAULT_BUDGET) -> str:
    """Render the four-section context block within a character budget.

    Only OBJECTS shrinks: lowest-priority digests drop first and a marker
    line counts the omissions. Focused objects are never dropped; if the
    block cannot fit even then, the budget is too small.
    """
    if budget < MIN_BUDGET:
        raise BudgetTooSmallError(f"budget {budget} is below the minimum {MIN_BUDGET}")

    focus_lines = ["FOCUS"]
    focus_lines.append(f"framed: {_id_list(snapshot.focus.framed)}")
    focus_lines.append(f"pointed: {snapshot.focus.pointed or '(none)'}")
    focus_lines.append(f"grabbed: {snapshot.focus.grabbed or '(none)'}")
    focus_lines.append(f"proximate: {_id_list(snapshot.focus.proximate)}")

    automation_lines = ["AUTOMATIONS"]
    if snapshot.automations:
        automation_lines.extend(d.render() for d in snapshot.automations)
    else:
        automation_lines.append("(none)")

    clock_lines = ["CLOCK", f"t={snapshot.clock:.1f}s hour={snapshot.hour}"]

    ordered = _by_priority(snapshot)
    focused_count = len([d for d in ordered if d[0] < 4])

    # widest cut first; never cut into the focused prefix
    for keep in range(len(ordered), focused_count - 1, -1):
        kept = ordered[:keep]
        omitted = len(ordered) - keep
        object_lines = ["OBJECTS"]
        object_lines.extend(digest.render() for _, _, digest in kept)
        if omitted:
            object_lines.append(TRUNCATION_MARKER.format(n=omitted))
        text = "\n\n".join(
            "\n".join(block)
            for block in (focus_lines, object_lines, automation_lines, clock_lines)
        )
        if len(text) <= budget:
            return text
    raise BudgetTooSmallError(
        f"budget {budget} cannot hold the focused objects of {snapshot.scenario_id}"
    )


def _by_priority(snapshot: ContextSnapshot) -> list[tuple[int, int, ObjectDigest]]:
    """Objects sorted framed > pointed/grabbed > proximate > rest, stable by id."""
    framed = set(snapshot.focus.framed)
    held = {x for x in (snapshot.focus.pointed, snapshot.focus.grabbed) if x}
    proximate = set(snapshot.focus.proximate)

    def rank(d: ObjectDigest) -> int:
        if d.entity_id in framed:
            return 0
        if d.entity_id in held:
            return 1
        if d.entity_id in proximate:
            return 2
        return 4

    decorated = [(rank(d), i, d) for i, d in enumerate(snapshot.objects)]
    decorated.sort(key=lambda item: (item[0], item[1]))
    return decorated


def _id_list(ids: list[str]) -> str:
    return ", ".join(ids) if ids else "(none)"


def _fmt(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f"'{value}'"
    return str(value)


# ---------------------------------------------------------------------------
# Deterministic English for rules and drafts
# ---------------------------------------------------------------------------

_OP_WORDS = {
    "eq": "is",
    "ne": "is not",
    "lt": "is below",
    "le": "is at most",
    "gt": "is above",
    "ge": "is at least",
}


def _display(env: Environment, entity_id: str) -> str:
    ent = env.entities.get(entity_id)
    return ent.display_name if ent is not None else entity_id


def _words(identifier: str) -> str:
    return identifier.replace("_", " ")


def describe_trigger(raw: dict, env: Environment) -> str:
    attr = _words(raw.get("attribute", "?"))
    who = _display(env, raw.get("entity", "?"))
    from_ = raw.get("from")
    to = raw.get("to")
    if from_ is not None and to is not None:
        return f"{attr} of {who} changes from {_fmt(from_)} to {_fmt(to)}"
    if to is not None:
        return f"{attr} of {who} becomes {_fmt(to)}"
    if from_ is not None:
        return f"{attr} of {who} changes from {_fmt(from_)}"
    return f"{attr} of {who} changes"


def describe_condition(raw: dict, env: Environment) -> str:
    attribute = raw.get("attribute", "?")
    who = _display(env, raw.get("entity", "?"))
    op = raw.get("op", "eq")
    value = raw.get("value")
    if (
        attribute.startswith("is_")
        and isinstance(value, bool)
        and op in ("eq", "ne")
    ):
        positive = value if op == "eq" else not value
        verb = "is" if positive else "is not"
        return f"{who} {verb} {_words(attribute[3:])}"
    return f"{_words(attribute)} of {who} {_OP_WORDS.get(op, op)} {_fmt(value)}"


def describe_action(raw: dict, env: Environment) -> str:
    service = _words(raw.get("service", "?"))
    who = _display(env, raw.get("entity", "?"))
    text = f"{service} {who}"
    args = raw.get("args") or {}
    if args:
        inner = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(args.items()))
        text += f" ({inner})"
    return text


def summarize_slots(
    triggers: list[dict],
    conditions: list[dict],
    actions: list[dict],
    env: Environment,
) -> str:
    """One deterministic sentence; display names only, never entity ids."""
    trigger_part = (
        " or ".join(describe_trigger(t, env) for t in triggers)
        if triggers
        else "(trigger not yet set)"
    )
    action_part = (
        " and ".join(describe_action(a, env) for a in actions)
        if actions
        else "(action not yet set)"
    )
    sentence = f"{action_part} when {trigger_part}"
    if conditions:
        sentence += ", but only if " + " and ".join(
            describe_condition(c, env) for c in conditions
        )
    return sentence + "."
