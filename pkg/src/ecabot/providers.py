"""Language-model provider abstraction.

Two interchangeable backends: a deterministic scripted provider replaying
canned bot turns from a script file (offline tests, demos, CI), and a
remote provider speaking the OpenAI-compatible chat-completions protocol
over HTTP. Both return parsed JSON objects, optionally checked against a
caller-supplied JSON schema; the remote provider gets one repair re-prompt
before giving up on a malformed reply.
"""

from __future__ import annotations

import copy
import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import httpx
import jsonschema

from .errors import (
    ConfigError,
    ProviderTimeoutError,
    ProviderTransportError,
    ReplySchemaError,
    ScriptNoMatchError,
)

INSTANCES = ("router", "dialogue", "export")

REQUEST_TIMEOUT = 30.0
MAX_RETRIES = 2


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass
class CompletionRequest:
    instance: str
    messages: list[ChatMessage]
    response_schema: dict | None = None

    def __post_init__(self) -> None:
        if self.instance not in INSTANCES:
            raise ConfigError(f"unknown provider instance {self.instance!r}")
        if not self.messages or self.messages[0].role != "system":
            raise ConfigError("completion request must start with a system message")


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> dict: ...


def _validate_reply(reply: Any, schema: dict | None) -> str | None:
    """Returns a violation description, or None when the reply conforms."""
    if not isinstance(reply, dict):
        return f"reply is {type(reply).__name__}, expected object"
    if schema is None:
        return None
    try:
        jsonschema.validate(reply, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        return f"{path}: {exc.message}"
    return None


# ---------------------------------------------------------------------------
# Scripted provider
# ---------------------------------------------------------------------------


@dataclass
class ScriptStep:
    match: str
    response: dict
    is_regex: bool = False
    consume: bool = True

    def hits(self, text: str) -> bool:
        if self.is_regex:
            return re.search(self.match, text, re.IGNORECASE) is not None
        return self.match.lower() in text.lower()


@dataclass
class Script:
    steps: list[ScriptStep]
    scenario: str | None = None
    turns: list[str] = field(default_factory=list)
    seed_automations: list[dict] = field(default_factory=list)


def load_script(path: str | Path) -> Script:
    """Load and structurally check a script file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"script file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}")
    if not isinstance(doc, dict) or not isinstance(doc.get("steps"), list):
        raise ConfigError(f"{path}: script needs a top-level 'steps' array")
    steps = []
    for i, raw in enumerate(doc["steps"]):
        where = f"{path}: step {i}"
        if not isinstance(raw, dict):
            raise ConfigError(f"{where}: not an object")
        match = raw.get("match")
        if not isinstance(match, str):
            raise ConfigError(f"{where}: 'match' must be a string")
        is_regex = bool(raw.get("is_regex", False))
        if is_regex:
            try:
                re.compile(match)
            except re.error as exc:
                raise ConfigError(f"{where}: bad pattern: {exc}")
        response = raw.get("response")
        if not isinstance(response, dict):
            raise ConfigError(f"{where}: 'response' must be an object")
        if not isinstance(response.get("stage"), str):
            raise ConfigError(f"{where}: response needs a string 'stage'")
        if not isinstance(response.get("message"), str):
            raise ConfigError(f"{where}: response needs a string 'message'")
        steps.append(
            ScriptStep(
                match=match,
                response=response,
                is_regex=is_regex,
                consume=bool(raw.get("consume", True)),
            )
        )
    turns = doc.get("turns", [])
    if not isinstance(turns, list) or not all(isinstance(t, str) for t in turns):
        raise ConfigError(f"{path}: 'turns' must be an array of strings")
    seeds = doc.get("seed_automations", [])
    if not isinstance(seeds, list):
        raise ConfigError(f"{path}: 'seed_automations' must be an array")
    return Script(
        steps=steps,
        scenario=doc.get("scenario"),
        turns=list(turns),
        seed_automations=list(seeds),
    )


class ScriptedProvider:
    """Deterministic provider: replies come from ordered script steps.

    The latest user message is matched against the first unconsumed step
    whose pattern hits. Router requests peek without consuming, so the
    dialogue request for the same turn lands on the same step; a pure
    function of the script and the message sequence.
    """

    def __init__(self, script: Script) -> None:
        self.script = script
        self._consumed = [False] * len(script.steps)

    def complete(self, request: CompletionRequest) -> dict:
        text = _latest_user_text(request)
        step = self._find(text)
        if step is None:
            raise ScriptNoMatchError(text)
        if request.instance == "router":
            reply: dict = {"stage": step.response["stage"]}
        else:
            if step.consume:
                self._consumed[self.script.steps.index(step)] = True
            reply = copy.deepcopy(step.response)
        violation = _validate_reply(reply, request.response_schema)
        if violation is not None:
            raise ReplySchemaError(violation)
        return reply

    def _find(self, text: str) -> ScriptStep | None:
        for step, used in zip(self.script.steps, self._consumed):
            if used:
                continue
            if step.hits(text):
                return step
        return None


def _latest_user_text(request: CompletionRequest) -> str:
    for message in reversed(request.messages):
        if message.role == "user":
            return message.content
    raise ConfigError("completion request carries no user message")


# ---------------------------------------------------------------------------
# Remote provider
# ---------------------------------------------------------------------------

API_KEY_VAR = "ECABOT_API_KEY"

_REPAIR_PROMPT = (
    "Your previous reply was not valid ({violation}). "
    "Reply again with a single JSON object that conforms to the required shape, "
    "with no surrounding prose or code fences."
)


class RemoteProvider:
    """OpenAI-compatible chat-completions client.

    Transport errors and timeouts are retried up to ``MAX_RETRIES`` times;
    a schema-violating reply earns exactly one repair re-prompt before
    :class:`ReplySchemaError` is raised. Router and export calls use
    temperature 0 so routing and saving stay reproducible.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        api_key_var: str = API_KEY_VAR,
        timeout: float = REQUEST_TIMEOUT,
        retries: int = MAX_RETRIES,
        temperature: float = 0.7,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_var, "")
        self.timeout = timeout
        self.retries = retries
        self.temperature = temperature
        self._client = httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def complete(self, request: CompletionRequest) -> dict:
        deadline = time.monotonic() + self.timeout * (1 + self.retries)
        messages = [m.to_dict() for m in request.messages]
        reply = self._round_trip(request.instance, messages, deadline)
        violation = _validate_reply(reply, request.response_schema)
        if violation is None:
            return reply
        # one repair attempt: feed the bad reply and the violation back
        messages = messages + [
            {"role": "assistant", "content": json.dumps(reply)},
            {"role": "user", "content": _REPAIR_PROMPT.format(violation=violation)},
        ]
        reply = self._round_trip(request.instance, messages, deadline)
        violation = _validate_reply(reply, request.response_schema)
        if violation is not None:
            raise ReplySchemaError(violation)
        return reply

    def _round_trip(self, instance: str, messages: list[dict], deadline: float) -> Any:
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": 0.0 if instance in ("router", "export") else self.temperature,
            "response_format": {"type": "json_object"},
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(1 + self.retries):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProviderTimeoutError(
                    f"deadline exhausted after {attempt} attempt(s): {last_error}"
                )
            try:
                response = self._client.post(
                    f"{self.endpoint}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=min(self.timeout, remaining),
                )
            except httpx.TimeoutException as exc:
                last_error = exc
                continue
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = ProviderTransportError(f"server returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise ProviderTransportError(
                    f"server returned {response.status_code}: {response.text[:200]}"
                )
            return _extract_content(response)
        if isinstance(last_error, httpx.TimeoutException):
            raise ProviderTimeoutError(str(last_error))
        raise ProviderTransportError(str(last_error))


def _extract_content(response: httpx.Response) -> Any:
    try:
        payload = response.json()
        content = payload["choices"][0]["message"]["content"]
    except (ValueError, LookupError, TypeError) as exc:
        raise ProviderTransportError(f"malformed completion payload: {exc}")
    try:
        return json.loads(content)
    except json.JSONDecodeError:
        # a reply that is not JSON at all counts as a schema violation,
        # which the caller may repair once
        return {"_raw": content}


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------


@dataclass
class ProviderBundle:
    """The three logical model instances a session talks to.

    In scripted mode all three share one provider object so the step cursor
    stays aligned across router peeks and dialogue consumes. In remote mode
    they are independent clients.
    """

    router: Provider
    dialogue: Provider
    export: Provider

    @classmethod
    def scripted(cls, script: Script) -> "ProviderBundle":
        shared = ScriptedProvider(script)
        return cls(router=shared, dialogue=shared, export=shared)

    @classmethod
    def remote(cls, endpoint: str, model: str, **kwargs) -> "ProviderBundle":
        return cls(
            router=RemoteProvider(endpoint, model, **kwargs),
            dialogue=RemoteProvider(endpoint, model, **kwargs),
            export=RemoteProvider(endpoint, model, **kwargs),
        )
