"""Uniform chat-completion access for agents.

Two binding kinds behind one `complete()` call: remote hosted models speaking
the de-facto chat-completions HTTP schema, and scripted stand-ins that make
session tests and offline runs fully deterministic.

Credentials are resolved from the environment at call time and never appear
in serialized binding config or in log output.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import httpx

from ..core import ValidationError

logger = logging.getLogger("storypoker.gateway")

ROLES = ("system", "user", "assistant")


class GatewayError(Exception):
    """Base class for model-access failures."""


class TransportError(GatewayError):
    """Transient transport failures persisted through every retry."""


class ModelHTTPError(GatewayError):
    """The endpoint answered with a non-success status."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body_excerpt = body[:200]
        super().__init__(f"chat-completion endpoint returned {status}: {self.body_excerpt}")


class ScriptUnderrunError(GatewayError):
    """A scripted binding ran out of replies - a test-script bug, not a model
    failure, so it is never swallowed by fallback logic."""


@dataclass(frozen=True)
class ChatTurn:
    """One message of a conversation, system-first convention."""

    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValidationError(f"chat role must be one of {ROLES}, got {self.role!r}")
        if not isinstance(self.content, str):
            raise ValidationError("chat content must be a string")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


def validate_conversation(turns: Sequence[ChatTurn]) -> None:
    """At most one system turn, and only in front; then user/assistant
    strictly alternating starting with user."""
    if not turns:
        raise ValidationError("conversation must have at least one turn")
    rest = list(turns)
    if rest[0].role == "system":
        rest = rest[1:]
    expected = "user"
    for turn in rest:
        if turn.role == "system":
            raise ValidationError("system turn allowed only at the start")
        if turn.role != expected:
            raise ValidationError(
                f"conversation roles must alternate user/assistant, got {turn.role!r} "
                f"where {expected!r} was expected"
            )
        expected = "assistant" if expected == "user" else "user"


class ScriptedBinding:
    """Deterministic stand-in for a model.

    Replies come either from an ordered list (exhaustion raises
    ScriptUnderrunError) or from a reply function of the last user turn's
    content. Calls are serialized by a lock so reply order is reproducible,
    and every conversation received is kept in `calls` for assertions.
    """

    kind = "scripted"

    def __init__(
        self,
        name: str,
        replies: Optional[Sequence[str]] = None,
        reply_fn: Optional[Callable[[str], str]] = None,
    ):
        if (replies is None) == (reply_fn is None):
            raise ValidationError("scripted binding takes either replies or reply_fn")
        self.name = name
        self._replies = list(replies) if replies is not None else None
        self._reply_fn = reply_fn
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls: List[Tuple[ChatTurn, ...]] = []

    def complete(self, turns: Sequence[ChatTurn]) -> str:
        with self._lock:
            self.calls.append(tuple(turns))
            if self._replies is not None:
                if self._cursor >= len(self._replies):
                    raise ScriptUnderrunError(
                        f"scripted binding {self.name!r} exhausted after "
                        f"{len(self._replies)} replies"
                    )
                reply = self._replies[self._cursor]
                self._cursor += 1
                return reply
            last_user = next((t.content for t in reversed(turns) if t.role == "user"), "")
            return self._reply_fn(last_user)

    def to_config(self) -> dict:
        return {"name": self.name, "kind": self.kind}


class _TokenBucket:
    """Classic token bucket: capacity = one minute's worth of requests."""

    def __init__(self, per_minute: float, clock: Callable[[], float]):
        self.rate = per_minute / 60.0
        self.capacity = max(per_minute, 1.0)
        self.tokens = self.capacity
        self.updated = clock()
        self.clock = clock
        self.lock = threading.Lock()

    def reserve(self) -> float:
        """Take one token, returning how long the caller must wait for it."""
        with self.lock:
            now = self.clock()
            self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
            self.updated = now
            self.tokens -= 1.0
            if self.tokens >= 0:
                return 0.0
            return -self.tokens / self.rate


def _jittered_backoff(attempt: int, base: float, rng: random.Random) -> float:
    return base * (2 ** attempt) + rng.uniform(0, base / 2)


class RemoteBinding:
    """A hosted model behind a chat-completions endpoint.

    `api_key_env` names the environment variable holding the credential; the
    value itself is read per request and never stored, serialized, or logged.
    """

    kind = "remote"

    RETRYABLE_STATUSES = (429, 500, 502, 503, 504)

    def __init__(
        self,
        name: str,
        model: str,
        base_url: str,
        api_key_env: Optional[str] = None,
        temperature: Optional[float] = None,
        max_output_tokens: Optional[int] = None,
        timeout_seconds: float = 30.0,
        max_attempts: int = 3,
        backoff_base_seconds: float = 0.5,
        requests_per_minute: Optional[float] = None,
        sleeper: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        if max_attempts < 1:
            raise ValidationError("max_attempts must be >= 1")
        self.name = name
        self.model = model
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.timeout_seconds = timeout_seconds
        self.max_attempts = max_attempts
        self.backoff_base_seconds = backoff_base_seconds
        self._sleeper = sleeper
        self._rng = random.Random()
        self._bucket = (
            _TokenBucket(requests_per_minute, clock) if requests_per_minute else None
        )
        self._client: Optional[httpx.Client] = None
        self._client_lock = threading.Lock()

    def to_config(self) -> dict:
        """Serializable view. Carries the credential's env var name only."""
        return {
            "name": self.name,
            "kind": self.kind,
            "model": self.model,
            "base_url": self.base_url,
            "api_key_env": self.api_key_env,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "timeout_seconds": self.timeout_seconds,
            "max_attempts": self.max_attempts,
        }

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                self._client = httpx.Client(timeout=self.timeout_seconds)
            return self._client

    def close(self) -> None:
        with self._client_lock:
            if self._client is not None:
                self._client.close()
                self._client = None

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise TransportError(
                    f"binding {self.name!r}: environment variable "
                    f"{self.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _payload(self, turns: Sequence[ChatTurn]) -> dict:
        payload = {
            "model": self.model,
            "messages": [t.to_dict() for t in turns],
        }
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        if self.max_output_tokens is not None:
            payload["max_tokens"] = self.max_output_tokens
        return payload

    def complete(self, turns: Sequence[ChatTurn]) -> str:
        if self._bucket is not None:
            wait = self._bucket.reserve()
            if wait > 0:
                self._sleeper(wait)
        url = self.base_url + "/chat/completions"
        last_error: Optional[Exception] = None
        for attempt in range(self.max_attempts):
            if attempt:
                delay = _jittered_backoff(attempt - 1, self.backoff_base_seconds, self._rng)
                logger.warning(
                    "binding %s: retrying in %.2fs (attempt %d/%d)",
                    self.name, delay, attempt + 1, self.max_attempts,
                )
                self._sleeper(delay)
            logger.debug("binding %s: POST %s model=%s", self.name, url, self.model)
            try:
                response = self._http().post(
                    url, json=self._payload(turns), headers=self._headers()
                )
            except httpx.HTTPError as err:
                last_error = err
                logger.warning("binding %s: transport failure: %s", self.name, err)
                continue
            if response.status_code in self.RETRYABLE_STATUSES:
                last_error = ModelHTTPError(response.status_code, response.text)
                logger.warning(
                    "binding %s: status %d, will retry", self.name, response.status_code
                )
                continue
            if response.status_code != 200:
                raise ModelHTTPError(response.status_code, response.text)
            return self._extract_text(response)
        raise TransportError(
            f"binding {self.name!r}: {self.max_attempts} attempts failed "
            f"({last_error})"
        )

    def _extract_text(self, response: httpx.Response) -> str:
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as err:
            raise ModelHTTPError(response.status_code, response.text) from err
        if not isinstance(text, str):
            raise ModelHTTPError(response.status_code, response.text)
        return text


def complete(binding, turns: Sequence[ChatTurn]) -> str:
    """One model call: validate the conversation shape, then dispatch."""
    validate_conversation(turns)
    return binding.complete(turns)


_CREDENTIAL_WORDS = ("api_key", "apikey", "token", "secret", "password", "authorization", "bearer")

_REMOTE_CONFIG_KEYS = {
    "name",
    "kind",
    "model",
    "base_url",
    "api_key_env",
    "temperature",
    "max_output_tokens",
    "timeout_seconds",
    "max_attempts",
    "backoff_base_seconds",
    "requests_per_minute",
}


def binding_from_config(record: dict):
    """Build a binding from one config record.

    Keys that look like raw credentials are rejected outright: config files
    may only carry the *name* of the environment variable (api_key_env).
    """
    if not isinstance(record, dict):
        raise ValidationError(f"binding config must be an object, got {type(record).__name__}")
    for key in record:
        lowered = str(key).lower()
        # max_output_tokens contains "token" but is schema, not a secret
        if lowered.endswith("_env") or key in _REMOTE_CONFIG_KEYS:
            continue
        if any(word in lowered for word in _CREDENTIAL_WORDS):
            raise ValidationError(
                f"binding config key {key!r} looks like a raw credential; "
                "credentials belong in the environment (set api_key_env to the variable name)"
            )
    kind = record.get("kind", "remote")
    name = record.get("name")
    if not name or not isinstance(name, str):
        raise ValidationError("binding config needs a nonempty 'name'")
    if kind == "scripted":
        replies = record.get("replies")
        if not isinstance(replies, list) or not all(isinstance(r, str) for r in replies):
            raise ValidationError(f"scripted binding {name!r} needs a 'replies' list of strings")
        return ScriptedBinding(name=name, replies=replies)
    if kind != "remote":
        raise ValidationError(f"binding {name!r}: unknown kind {kind!r}")
    unknown = set(record) - _REMOTE_CONFIG_KEYS
    if unknown:
        raise ValidationError(f"binding {name!r}: unknown config keys {sorted(unknown)}")
    for field_name in ("model", "base_url"):
        if not record.get(field_name):
            raise ValidationError(f"binding {name!r}: missing {field_name!r}")
    kwargs = {key: record[key] for key in _REMOTE_CONFIG_KEYS - {"kind"} if key in record}
    return RemoteBinding(**kwargs)


def load_bindings(path) -> dict:
    """Read a bindings config file: a JSON list of records (or an object
    with a 'bindings' list) keyed by unique names."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"bindings file {path} does not exist")
    try:
        parsed = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ValidationError(f"bindings file {path}: invalid JSON: {err}") from err
    records = parsed.get("bindings") if isinstance(parsed, dict) else parsed
    if not isinstance(records, list):
        raise ValidationError(f"bindings file {path}: expected a list of binding objects")
    bindings = {}
    for index, record in enumerate(records):
        try:
            binding = binding_from_config(record)
        except ValidationError as err:
            raise ValidationError(f"bindings file {path} entry {index}: {err}") from err
        if binding.name in bindings:
            raise ValidationError(f"bindings file {path}: duplicate binding name {binding.name!r}")
        bindings[binding.name] = binding
    return bindings
