"""REST service: sessions, simulated environments, automations, analytics.

One runtime (environment + rule store + event hub) per scenario; sessions
attach to a runtime and hold their own dialogue state. Turn handling is
serialized per session (a second in-flight turn gets 409) while distinct
sessions and scenarios run concurrently. All 2xx JSON bodies are canonical
(sorted keys, compact separators), and a per-session SSE stream pushes bot
turns, firing records, and state changes to the console.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import assets
from .analytics import TransitionMatrix, transitions
from .config import Config
from .context import FocusState
from .engine import RulePatch, RuleStore, inject, on_event, rule_from_dict
from .environment import Environment, load_environment
from .errors import (
    ConfigError,
    EcabotError,
    FixtureError,
    ProviderError,
    RuleValidationError,
    SchemaViolationError,
    UnknownAttributeError,
    UnknownEntityError,
    UnknownRuleError,
)
from .orchestrator import Orchestrator, Stage
from .providers import ProviderBundle, Script, load_script

SSE_KEEPALIVE_SECONDS = 15.0

GREETINGS = {
    "vr-museum": "Hi! I can help you automate the museum exhibits. What would you like to do?",
    "ar-home": "Hi! I can help you automate your home. What would you like to do?",
}


def _canonical(payload: Any) -> bytes:
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


class CanonicalJSONResponse(JSONResponse):
    def render(self, content: Any) -> bytes:
        return _canonical(content)


class EventHub:
    """Fan-out of server-sent events to any number of subscriber queues."""

    def __init__(self) -> None:
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, kind: str, data: dict, session_id: str | None = None) -> None:
        event = {"kind": kind, "data": data, "session_id": session_id}
        with self._lock:
            targets = list(self._subscribers)
        for q in targets:
            q.put(event)


@dataclass
class ScenarioRuntime:
    scenario: str
    env: Environment
    store: RuleStore
    hub: EventHub = field(default_factory=EventHub)
    lock: threading.RLock = field(default_factory=threading.RLock)


@dataclass
class Session:
    session_id: str
    scenario: str
    orchestrator: Orchestrator
    state: Any
    focus: FocusState = field(default_factory=FocusState)
    created_at: float = 0.0
    turn_lock: threading.Lock = field(default_factory=threading.Lock)


class AppState:
    def __init__(self, config: Config) -> None:
        self.config = config
        self.script: Script | None = None
        if config.provider == "scripted":
            self.script = load_script(config.script)
        self.runtimes: dict[str, ScenarioRuntime] = {}
        self.sessions: dict[str, Session] = {}
        self._sessions_lock = threading.Lock()
        self._remote_bundle: ProviderBundle | None = None
        for scenario in self._scenario_names():
            env = self._load_env(scenario)
            store = RuleStore()
            self.runtimes[scenario] = ScenarioRuntime(scenario=scenario, env=env, store=store)
        if self.script is not None and self.script.seed_automations:
            runtime = self.runtimes.get(self.script.scenario or "")
            if runtime is not None:
                for raw in self.script.seed_automations:
                    runtime.store.add_rule(rule_from_dict(raw), runtime.env)

    def _scenario_names(self) -> list[str]:
        if self.config.fixtures_dir is not None:
            return sorted(p.stem for p in Path(self.config.fixtures_dir).glob("*.json"))
        return assets.list_fixtures()

    def _load_env(self, scenario: str) -> Environment:
        if self.config.fixtures_dir is not None:
            return load_environment(Path(self.config.fixtures_dir) / f"{scenario}.json")
        return load_environment(scenario)

    def runtime(self, scenario: str) -> ScenarioRuntime:
        runtime = self.runtimes.get(scenario)
        if runtime is None:
            raise HTTPException(404, f"unknown scenario {scenario!r}")
        return runtime

    def session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session

    def bundle(self) -> ProviderBundle:
        if self.script is not None:
            # fresh step cursor per session
            return ProviderBundle.scripted(self.script)
        if self._remote_bundle is None:
            self._remote_bundle = ProviderBundle.remote(
                self.config.endpoint,
                self.config.model,
                api_key_var=self.config.api_key_var,
            )
        return self._remote_bundle

    def create_session(self, scenario: str) -> Session:
        runtime = self.runtime(scenario)
        orchestrator = Orchestrator(
            scenario,
            runtime.env,
            runtime.store,
            self.bundle(),
            context_budget=self.config.context_budget,
        )
        session_id = uuid.uuid4().hex
        session = Session(
            session_id=session_id,
            scenario=scenario,
            orchestrator=orchestrator,
            state=orchestrator.new_state(session_id),
            created_at=runtime.env.clock,
        )
        with self._sessions_lock:
            self.sessions[session_id] = session
        return session


def _state_digest(session: Session) -> dict:
    state = session.state
    return {
        "stage": state.stage.value,
        "mode": state.mode,
        "pending_confirmation": state.pending_confirmation,
        "draft": state.draft.to_dict(),
        "turn_count": len(state.turn_log),
    }


def create_app(config: Config) -> FastAPI:
    state = AppState(config)
    app = FastAPI(title="ecabot", default_response_class=CanonicalJSONResponse)
    app.state.ecabot = state

    # -- sessions -----------------------------------------------------------

    @app.post("/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        scenario = payload.get("scenario")
        if not isinstance(scenario, str):
            raise HTTPException(400, "body needs a 'scenario' string")
        session = state.create_session(scenario)
        greeting = {
            "stage": Stage.Define.value,
            "message": GREETINGS.get(scenario, "Hi! What would you like to automate?"),
            "intent": "continue",
        }
        return {
            "session_id": session.session_id,
            "scenario": scenario,
            "greeting": greeting,
        }

    @app.post("/sessions/{session_id}/turn")
    def turn(session_id: str, payload: dict = Body(...)):
        session = state.session(session_id)
        text = payload.get("text")
        if not isinstance(text, str) or not text.strip():
            raise HTTPException(400, "body needs a non-empty 'text' string")
        if not session.turn_lock.acquire(blocking=False):
            raise HTTPException(409, "a turn is already in flight for this session")
        try:
            runtime = state.runtime(session.scenario)
            try:
                bot_turn = session.orchestrator.step(session.state, text, session.focus)
            except ProviderError as exc:
                raise HTTPException(502, f"the language model backend failed: {exc}")
            runtime.hub.publish("bot_turn", bot_turn.to_dict(), session_id=session_id)
            return {"turn": bot_turn.to_dict(), "state": _state_digest(session)}
        finally:
            session.turn_lock.release()

    @app.post("/sessions/{session_id}/focus", status_code=204)
    def set_focus(session_id: str, payload: dict | None = Body(None)):
        session = state.session(session_id)
        runtime = state.runtime(session.scenario)
        try:
            focus = FocusState.from_dict(payload or {})
        except ConfigError as exc:
            raise HTTPException(422, str(exc))
        for entity_id in focus.all_ids():
            if entity_id not in runtime.env.entities:
                raise HTTPException(422, f"unknown entity {entity_id!r}")
        session.focus = focus
        return None

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str):
        session = state.session(session_id)
        lines = session.state.transcript_lines()
        body = "\n".join(lines) + ("\n" if lines else "")
        return PlainTextResponse(body, media_type="application/x-ndjson")

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str):
        session = state.session(session_id)
        runtime = state.runtime(session.scenario)

        def stream():
            q = runtime.hub.subscribe()
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        event = q.get(timeout=SSE_KEEPALIVE_SECONDS)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    if event["session_id"] not in (None, session_id):
                        continue
                    data = json.dumps(
                        event["data"], sort_keys=True, separators=(",", ":"), ensure_ascii=False
                    )
                    yield f"event: {event['kind']}\ndata: {data}\n\n"
            finally:
                runtime.hub.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- environments -------------------------------------------------------

    @app.get("/environments/{scenario}")
    def get_environment(scenario: str):
        runtime = state.runtime(scenario)
        with runtime.env.lock:
            return runtime.env.to_dict()

    @app.post("/environments/{scenario}/events")
    def post_event(scenario: str, payload: dict = Body(...)):
        runtime = state.runtime(scenario)
        for key in ("entity", "attribute"):
            if not isinstance(payload.get(key), str):
                raise HTTPException(400, f"body needs an '{key}' string")
        if "value" not in payload:
            raise HTTPException(400, "body needs a 'value'")
        try:
            event, records = inject(
                runtime.store,
                runtime.env,
                payload["entity"],
                payload["attribute"],
                payload["value"],
                cascade_limit=config.cascade_limit,
            )
        except (UnknownEntityError, UnknownAttributeError, SchemaViolationError) as exc:
            raise HTTPException(422, str(exc))
        _publish_engine_events(runtime, event, records)
        return {
            "event": event.to_dict() if event else None,
            "firing_records": [r.to_dict() for r in records],
        }

    @app.post("/environments/{scenario}/tick")
    def tick(scenario: str, payload: dict = Body(...)):
        runtime = state.runtime(scenario)
        seconds = payload.get("seconds")
        if not isinstance(seconds, (int, float)) or isinstance(seconds, bool) or seconds <= 0:
            raise HTTPException(400, "body needs a positive 'seconds' number")
        with runtime.env.lock:
            clock_events = runtime.env.tick(float(seconds))
            all_records = []
            for event in clock_events:
                records = on_event(
                    runtime.store, runtime.env, event, cascade_limit=config.cascade_limit
                )
                all_records.extend(records)
                _publish_engine_events(runtime, event, records)
        return {
            "clock": runtime.env.clock,
            "events": [e.to_dict() for e in clock_events],
            "firing_records": [r.to_dict() for r in all_records],
        }

    # -- automations --------------------------------------------------------

    @app.get("/automations")
    def list_automations(scenario: str):
        runtime = state.runtime(scenario)
        with runtime.lock:
            return {"automations": [rule.to_dict() for rule in runtime.store]}

    @app.post("/automations", status_code=201)
    def create_automation(payload: dict = Body(...)):
        scenario = payload.get("scenario")
        if not isinstance(scenario, str):
            raise HTTPException(400, "body needs a 'scenario' string")
        runtime = state.runtime(scenario)
        raw = {k: v for k, v in payload.items() if k != "scenario"}
        with runtime.lock:
            if "id" not in raw:
                raw["id"] = runtime.store.generate_id()
            try:
                rule = rule_from_dict(raw)
                runtime.store.add_rule(rule, runtime.env)
            except (FixtureError, RuleValidationError, EcabotError) as exc:
                raise HTTPException(422, str(exc))
        return rule.to_dict()

    @app.get("/automations/{rule_id}")
    def get_automation(rule_id: str, scenario: str):
        runtime = state.runtime(scenario)
        try:
            return runtime.store.get(rule_id).to_dict()
        except UnknownRuleError as exc:
            raise HTTPException(404, str(exc))

    @app.patch("/automations/{rule_id}")
    def patch_automation(rule_id: str, scenario: str, payload: dict = Body(...)):
        runtime = state.runtime(scenario)
        shaped = {
            "id": rule_id,
            "alias": payload.get("alias", ""),
            "triggers": payload.get("triggers", []),
            "conditions": payload.get("conditions", []),
            "actions": payload.get("actions", []),
        }
        try:
            parsed = rule_from_dict(shaped)
        except FixtureError as exc:
            raise HTTPException(422, str(exc))
        patch = RulePatch(
            alias=payload.get("alias"),
            triggers=parsed.triggers if "triggers" in payload else None,
            conditions=parsed.conditions if "conditions" in payload else None,
            actions=parsed.actions if "actions" in payload else None,
            enabled=payload.get("enabled"),
        )
        with runtime.lock:
            try:
                rule = runtime.store.modify_rule(rule_id, patch, runtime.env)
            except UnknownRuleError as exc:
                raise HTTPException(404, str(exc))
            except RuleValidationError as exc:
                raise HTTPException(422, str(exc))
        return rule.to_dict()

    @app.delete("/automations/{rule_id}", status_code=204)
    def delete_automation(rule_id: str, scenario: str):
        runtime = state.runtime(scenario)
        with runtime.lock:
            try:
                runtime.store.delete_rule(rule_id)
            except UnknownRuleError as exc:
                raise HTTPException(404, str(exc))
        return None

    # -- analytics ----------------------------------------------------------

    @app.get("/analytics/transitions")
    def analytics_transitions():
        conversations = []
        with state._sessions_lock:
            sessions = list(state.sessions.values())
        for session in sessions:
            stages = session.state.stage_sequence()
            if stages:
                conversations.append(stages)
        matrix: TransitionMatrix = transitions(conversations)
        return matrix.to_dict()

    # -- static console -----------------------------------------------------

    frontend = config.frontend_dir or "frontend/dist"
    if Path(frontend).is_dir():
        app.mount("/", StaticFiles(directory=frontend, html=True), name="console")

    return app


def _publish_engine_events(runtime: ScenarioRuntime, event, records) -> None:
    if event is not None:
        runtime.hub.publish("state_change", event.to_dict())
    for record in records:
        runtime.hub.publish("firing_record", record.to_dict())
        for emitted in record.emitted_events:
            runtime.hub.publish("state_change", emitted.to_dict())
