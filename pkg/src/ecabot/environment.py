"""Entity taxonomy and simulated environment state.

An :class:`Environment` holds a taxonomy of entity kinds (attribute and
service schemas) plus live entity instances. All interaction with the world
goes through ``set_state`` / ``call_service``, which emit
:class:`StateChangeEvent` records the automation engine consumes. The two
shipped scenarios (``vr-museum``, ``ar-home``) live as JSON fixtures in the
package data.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .assets import fixture_path
from .errors import (
    FixtureError,
    SchemaViolationError,
    UnknownAttributeError,
    UnknownEntityError,
    UnknownServiceError,
)

# JSON-representable attribute value: bool | number | string (plain or enum token)
Value = Any

VALUE_KINDS = ("bool", "number", "string", "enum")
PARAM_KINDS = VALUE_KINDS + ("media",)

# Entity kind whose "time" attribute mirrors env.clock; written only by tick().
CLOCK_KIND = "clock"


def _is_number(value: Value) -> bool:
    # bool is an int subclass; exclude it explicitly
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class AttributeSchema:
    name: str
    kind: str  # one of VALUE_KINDS
    default: Value
    unit: str | None = None
    enum_values: tuple[str, ...] | None = None
    minimum: float | None = None
    maximum: float | None = None

    def check(self, value: Value) -> str | None:
        """Return a human-readable reason the value is invalid, or None."""
        if self.kind == "bool":
            if not isinstance(value, bool):
                return f"expected bool, got {type(value).__name__}"
        elif self.kind == "number":
            if not _is_number(value):
                return f"expected number, got {type(value).__name__}"
            if self.minimum is not None and value < self.minimum:
                return f"below minimum {self.minimum}"
            if self.maximum is not None and value > self.maximum:
                return f"above maximum {self.maximum}"
        elif self.kind == "string":
            if not isinstance(value, str):
                return f"expected string, got {type(value).__name__}"
        elif self.kind == "enum":
            if not isinstance(value, str):
                return f"expected enum token, got {type(value).__name__}"
            if self.enum_values and value not in self.enum_values:
                allowed = ", ".join(self.enum_values)
                return f"{value!r} not in enum {{{allowed}}}"
        return None


@dataclass(frozen=True)
class ServiceParam:
    name: str
    kind: str  # one of PARAM_KINDS; "media" = string checked against media_library
    required: bool = True
    enum_values: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ServiceEffect:
    """One declarative attribute assignment: a literal value or a param reference."""

    attribute: str
    value: Value = None
    param: str | None = None


@dataclass(frozen=True)
class ServiceSchema:
    name: str
    params: tuple[ServiceParam, ...] = ()
    effects: tuple[ServiceEffect, ...] = ()

    def param(self, name: str) -> ServiceParam | None:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class EntitySchema:
    kind: str
    attributes: tuple[AttributeSchema, ...] = ()
    services: tuple[ServiceSchema, ...] = ()

    def attribute(self, name: str) -> AttributeSchema | None:
        for a in self.attributes:
            if a.name == name:
                return a
        return None

    def service(self, name: str) -> ServiceSchema | None:
        for s in self.services:
            if s.name == name:
                return s
        return None


@dataclass
class Entity:
    id: str
    kind: str
    display_name: str
    state: dict[str, Value]
    media_library: list[str] | None = None


@dataclass(frozen=True)
class StateChangeEvent:
    entity_id: str
    attribute: str
    old: Value
    new: Value
    clock: float

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "attribute": self.attribute,
            "old": self.old,
            "new": self.new,
            "clock": self.clock,
        }


@dataclass
class Environment:
    """Simulated scenario state: taxonomy, entities, and a monotone clock.

    Mutations must happen under :attr:`lock`; read snapshots (``to_dict``)
    may be taken concurrently.
    """

    scenario_id: str
    taxonomy: dict[str, EntitySchema]
    entities: dict[str, Entity]
    clock: float = 0.0
    lock: threading.RLock = field(
        default_factory=threading.RLock, compare=False, repr=False
    )

    # -- lookups ------------------------------------------------------------

    def entity(self, entity_id: str) -> Entity:
        ent = self.entities.get(entity_id)
        if ent is None:
            raise UnknownEntityError(entity_id)
        return ent

    def schema_for(self, entity: Entity) -> EntitySchema:
        return self.taxonomy[entity.kind]

    def attribute_schema(self, entity_id: str, attribute: str) -> AttributeSchema:
        ent = self.entity(entity_id)
        schema = self.schema_for(ent).attribute(attribute)
        if schema is None:
            raise UnknownAttributeError(entity_id, attribute)
        return schema

    def get_state(self, entity_id: str, attribute: str) -> Value:
        self.attribute_schema(entity_id, attribute)
        return self.entity(entity_id).state[attribute]

    # -- mutation -----------------------------------------------------------

    def set_state(
        self, entity_id: str, attribute: str, value: Value
    ) -> StateChangeEvent | None:
        """Write an attribute; returns the event, or None on a no-change write."""
        with self.lock:
            schema = self.attribute_schema(entity_id, attribute)
            reason = schema.check(value)
            if reason is not None:
                raise SchemaViolationError(
                    f"{entity_id}.{attribute}: {reason}"
                )
            ent = self.entity(entity_id)
            if ent.kind == CLOCK_KIND and attribute == "time" and value < self.clock:
                raise SchemaViolationError(
                    f"{entity_id}.time: clock must not decrease ({value} < {self.clock})"
                )
            old = ent.state[attribute]
            if old == value and type(old) is type(value):
                return None
            ent.state[attribute] = value
            return StateChangeEvent(entity_id, attribute, old, value, self.clock)

    def call_service(
        self, entity_id: str, service: str, args: dict[str, Value] | None = None
    ) -> list[StateChangeEvent]:
        """Apply a service's declarative effects; returns events in effect order."""
        args = dict(args or {})
        with self.lock:
            ent = self.entity(entity_id)
            schema = self.schema_for(ent).service(service)
            if schema is None:
                raise UnknownServiceError(entity_id, service)
            self._check_args(ent, schema, args)
            events: list[StateChangeEvent] = []
            for effect in schema.effects:
                value = args[effect.param] if effect.param is not None else effect.value
                event = self.set_state(entity_id, effect.attribute, value)
                if event is not None:
                    events.append(event)
            return events

    def _check_args(
        self, ent: Entity, schema: ServiceSchema, args: dict[str, Value]
    ) -> None:
        for p in schema.params:
            if p.name not in args:
                if p.required:
                    raise SchemaViolationError(
                        f"{ent.id}.{schema.name}: missing required param {p.name!r}"
                    )
                continue
            value = args[p.name]
            reason = _check_param_value(p, value, ent)
            if reason is not None:
                raise SchemaViolationError(
                    f"{ent.id}.{schema.name}({p.name}): {reason}"
                )
        for name in args:
            if schema.param(name) is None:
                raise SchemaViolationError(
                    f"{ent.id}.{schema.name}: unknown param {name!r}"
                )

    def tick(self, seconds: float) -> list[StateChangeEvent]:
        """Advance the simulated clock; emits events on the clock entity if present."""
        if seconds <= 0:
            raise SchemaViolationError("tick seconds must be > 0")
        with self.lock:
            new_time = self.clock + seconds
            self.clock = new_time
            events: list[StateChangeEvent] = []
            for ent in self.entities.values():
                if ent.kind != CLOCK_KIND:
                    continue
                event = self.set_state(ent.id, "time", new_time)
                if event is not None:
                    events.append(event)
                if self.schema_for(ent).attribute("hour") is not None:
                    hour = int(new_time // 3600) % 24
                    event = self.set_state(ent.id, "hour", hour)
                    if event is not None:
                        events.append(event)
            return events

    # -- (de)serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "clock": self.clock,
            "taxonomy": [_schema_to_dict(s) for s in self.taxonomy.values()],
            "entities": [_entity_to_dict(e) for e in self.entities.values()],
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Environment):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _check_param_value(p: ServiceParam, value: Value, ent: Entity) -> str | None:
    if p.kind == "bool":
        if not isinstance(value, bool):
            return f"expected bool, got {type(value).__name__}"
    elif p.kind == "number":
        if not _is_number(value):
            return f"expected number, got {type(value).__name__}"
    elif p.kind in ("string", "media", "enum"):
        if not isinstance(value, str):
            return f"expected string, got {type(value).__name__}"
        if p.kind == "enum" and p.enum_values and value not in p.enum_values:
            return f"{value!r} not in enum {{{', '.join(p.enum_values)}}}"
        if p.kind == "media":
            library = ent.media_library or []
            if value not in library:
                return f"{value!r} not in media library [{', '.join(library)}]"
    return None


# ---------------------------------------------------------------------------
# Fixture parsing
# ---------------------------------------------------------------------------


def _expect(obj: dict, key: str, locus: str):
    if key not in obj:
        raise FixtureError(f"{locus}: missing field {key!r}")
    return obj[key]


def _parse_attribute(raw: dict, locus: str) -> AttributeSchema:
    name = _expect(raw, "name", locus)
    kind = _expect(raw, "kind", locus)
    if kind not in VALUE_KINDS:
        raise FixtureError(f"{locus}: bad value kind {kind!r}")
    enum_values = raw.get("enum")
    schema = AttributeSchema(
        name=name,
        kind=kind,
        default=_expect(raw, "default", locus),
        unit=raw.get("unit"),
        enum_values=tuple(enum_values) if enum_values else None,
        minimum=raw.get("min"),
        maximum=raw.get("max"),
    )
    reason = schema.check(schema.default)
    if reason is not None:
        raise FixtureError(f"{locus}.default: {reason}")
    return schema


def _parse_service(raw: dict, locus: str, attrs: dict[str, AttributeSchema]) -> ServiceSchema:
    name = _expect(raw, "name", locus)
    params = []
    seen_optional = False
    for i, p in enumerate(raw.get("params", [])):
        ploc = f"{locus}.params[{i}]"
        kind = _expect(p, "kind", ploc)
        if kind not in PARAM_KINDS:
            raise FixtureError(f"{ploc}: bad param kind {kind!r}")
        required = p.get("required", True)
        if required and seen_optional:
            raise FixtureError(f"{ploc}: required param after optional param")
        seen_optional = seen_optional or not required
        params.append(
            ServiceParam(
                name=_expect(p, "name", ploc),
                kind=kind,
                required=required,
                enum_values=tuple(p["enum"]) if p.get("enum") else None,
            )
        )
    param_names = {p.name for p in params}
    effects = []
    for i, e in enumerate(raw.get("effects", [])):
        eloc = f"{locus}.effects[{i}]"
        attribute = _expect(e, "attribute", eloc)
        if attribute not in attrs:
            raise FixtureError(f"{eloc}: effect targets unknown attribute {attribute!r}")
        if "param" in e:
            if e["param"] not in param_names:
                raise FixtureError(f"{eloc}: unknown param reference {e['param']!r}")
            effects.append(ServiceEffect(attribute=attribute, param=e["param"]))
        elif "value" in e:
            effects.append(ServiceEffect(attribute=attribute, value=e["value"]))
        else:
            raise FixtureError(f"{eloc}: effect needs 'value' or 'param'")
    return ServiceSchema(name=name, params=tuple(params), effects=tuple(effects))


def _parse_entity_schema(raw: dict, locus: str) -> EntitySchema:
    kind = _expect(raw, "kind", locus)
    attributes = []
    names = set()
    for i, a in enumerate(raw.get("attributes", [])):
        schema = _parse_attribute(a, f"{locus}.attributes[{i}]")
        if schema.name in names:
            raise FixtureError(f"{locus}.attributes[{i}]: duplicate name {schema.name!r}")
        names.add(schema.name)
        attributes.append(schema)
    attr_map = {a.name: a for a in attributes}
    services = [
        _parse_service(s, f"{locus}.services[{i}]", attr_map)
        for i, s in enumerate(raw.get("services", []))
    ]
    return EntitySchema(kind=kind, attributes=tuple(attributes), services=tuple(services))


def _parse_entity(raw: dict, locus: str, taxonomy: dict[str, EntitySchema]) -> Entity:
    entity_id = _expect(raw, "id", locus)
    kind = _expect(raw, "kind", locus)
    schema = taxonomy.get(kind)
    if schema is None:
        raise FixtureError(f"{locus}: unknown kind {kind!r}")
    state = dict(raw.get("state", {}))
    for name in state:
        if schema.attribute(name) is None:
            raise FixtureError(f"{locus}.state.{name}: not an attribute of kind {kind!r}")
    for attr in schema.attributes:
        state.setdefault(attr.name, attr.default)
        reason = attr.check(state[attr.name])
        if reason is not None:
            raise FixtureError(f"{locus}.state.{attr.name}: {reason}")
    media = raw.get("media_library")
    return Entity(
        id=entity_id,
        kind=kind,
        display_name=raw.get("display_name", entity_id),
        state=state,
        media_library=list(media) if media is not None else None,
    )


def environment_from_dict(doc: dict) -> Environment:
    for key in ("scenario_id", "taxonomy", "entities"):
        _expect(doc, key, "document")
    taxonomy: dict[str, EntitySchema] = {}
    for i, raw in enumerate(doc["taxonomy"]):
        schema = _parse_entity_schema(raw, f"taxonomy[{i}]")
        if schema.kind in taxonomy:
            raise FixtureError(f"taxonomy[{i}]: duplicate kind {schema.kind!r}")
        taxonomy[schema.kind] = schema
    entities: dict[str, Entity] = {}
    for i, raw in enumerate(doc["entities"]):
        ent = _parse_entity(raw, f"entities[{i}]", taxonomy)
        if ent.id in entities:
            raise FixtureError(f"entities[{i}]: duplicate id {ent.id!r}")
        entities[ent.id] = ent
    return Environment(
        scenario_id=doc["scenario_id"],
        taxonomy=taxonomy,
        entities=entities,
        clock=doc.get("clock", 0),
    )


def load_environment(fixture: str | Path) -> Environment:
    """Load a scenario from a fixture file path or an embedded fixture name."""
    path = Path(fixture)
    if not path.suffix and not path.exists():
        path = fixture_path(str(fixture))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FixtureError(f"cannot read fixture {fixture!r}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"{path.name}:{exc.lineno}: {exc.msg}") from exc
    return environment_from_dict(doc)


def serialize_environment(env: Environment) -> str:
    """Canonical JSON for an environment snapshot (sorted keys, UTF-8)."""
    return json.dumps(env.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _schema_to_dict(schema: EntitySchema) -> dict:
    out: dict = {"kind": schema.kind, "attributes": [], "services": []}
    for a in schema.attributes:
        raw: dict = {"name": a.name, "kind": a.kind, "default": a.default}
        if a.unit is not None:
            raw["unit"] = a.unit
        if a.enum_values is not None:
            raw["enum"] = list(a.enum_values)
        if a.minimum is not None:
            raw["min"] = a.minimum
        if a.maximum is not None:
            raw["max"] = a.maximum
        out["attributes"].append(raw)
    for s in schema.services:
        raw = {"name": s.name, "params": [], "effects": []}
        for p in s.params:
            praw: dict = {"name": p.name, "kind": p.kind, "required": p.required}
            if p.enum_values is not None:
                praw["enum"] = list(p.enum_values)
            raw["params"].append(praw)
        for e in s.effects:
            if e.param is not None:
                raw["effects"].append({"attribute": e.attribute, "param": e.param})
            else:
                raw["effects"].append({"attribute": e.attribute, "value": e.value})
        out["services"].append(raw)
    return out


def _entity_to_dict(ent: Entity) -> dict:
    out: dict = {
        "id": ent.id,
        "kind": ent.kind,
        "display_name": ent.display_name,
        "state": dict(ent.state),
    }
    if ent.media_library is not None:
        out["media_library"] = list(ent.media_library)
    return out


def available_services(env: Environment, entity_id: str) -> Iterable[ServiceSchema]:
    ent = env.entity(entity_id)
    return env.schema_for(ent).services
