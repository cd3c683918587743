"""Chat-completion gateway: per-role model routing, tool calls, token
accounting, and record/replay backends for deterministic runs.

Live traffic uses the standard chat-completions HTTP shape (messages array,
optional tools, tool_calls in the response). Recorded transcripts replay the
same exchanges byte-for-byte, keyed by role and message digest, so a full run
against a fixed transcript is reproducible without network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .errors import BudgetExceeded, ReplayMiss, SchemaViolation, TransportFailure

log = logging.getLogger(__name__)

ROLES = ("retriever", "analyzer", "planner", "coder", "improver", "verifier")

ENV_API_BASE = "AUTOMIND_API_BASE"
ENV_API_KEY = "AUTOMIND_API_KEY"

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_SECONDS = 1.0


@dataclass(frozen=True)
class RoleModelConfig:
    """Model identifier for each agent role."""

    retriever: str
    analyzer: str
    planner: str
    coder: str
    improver: str
    verifier: str

    def __post_init__(self) -> None:
        for role in ROLES:
            if not getattr(self, role):
                raise ValueError(f"model for role {role!r} must be non-empty")

    def model_for(self, role: str) -> str:
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}; expected one of {ROLES}")
        return getattr(self, role)


@dataclass(frozen=True)
class Message:
    speaker: str  # system | user | assistant
    text: str


@dataclass(frozen=True)
class Sampling:
    temperature: float = 0.5
    max_output_tokens: int = 8192


@dataclass(frozen=True)
class ChatRequest:
    role: str
    messages: tuple[Message, ...]
    tool_schema: dict | None = None
    sampling: Sampling = Sampling()

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass(frozen=True)
class ChatResponse:
    kind: str  # "text" | "tool_call"
    text: str | None = None
    tool_name: str | None = None
    tool_arguments: dict | None = None
    usage: Usage = Usage()

    def __post_init__(self) -> None:
        if self.kind == "text" and self.text is None:
            raise ValueError("text response must carry text")
        if self.kind == "tool_call" and (
            self.tool_name is None or self.tool_arguments is None
        ):
            raise ValueError("tool_call response must carry name and arguments")


class Backend(Protocol):
    def send(self, model: str, request: ChatRequest) -> ChatResponse: ...


def request_digest(request: ChatRequest) -> str:
    """Stable digest of a request's role and messages.

    Sampling parameters are excluded so replays are insensitive to
    temperature settings.
    """
    payload = json.dumps(
        {
            "role": request.role,
            "messages": [[m.speaker, m.text] for m in request.messages],
        },
        ensure_ascii=True,
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class TokenLedger:
    """Thread-safe accumulator of per-run token usage."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.input_tokens = 0
        self.output_tokens = 0

    def add(self, usage: Usage) -> None:
        with self._lock:
            self.input_tokens += usage.input_tokens
            self.output_tokens += usage.output_tokens

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "input": self.input_tokens,
                "output": self.output_tokens,
                "total": self.input_tokens + self.output_tokens,
            }


def validate_tool_arguments(arguments: dict, schema: dict) -> None:
    """Check tool-call arguments against the declared function schema.

    Supports the subset of JSON schema the verifier tool uses: required
    keys and scalar types, with numeric fields allowed to be null.
    """
    params = schema.get("function", schema).get("parameters", {})
    properties = params.get("properties", {})
    for key in params.get("required", []):
        if key not in arguments:
            raise SchemaViolation(f"tool arguments missing required field {key!r}")
    checks: dict[str, Callable[[object], bool]] = {
        "boolean": lambda v: isinstance(v, bool),
        "string": lambda v: isinstance(v, str),
        "number": lambda v: v is None
        or (isinstance(v, (int, float)) and not isinstance(v, bool)),
        "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "object": lambda v: isinstance(v, dict),
        "array": lambda v: isinstance(v, list),
    }
    for key, spec in properties.items():
        if key not in arguments:
            continue
        expected = spec.get("type")
        check = checks.get(expected)
        if check is not None and not check(arguments[key]):
            raise SchemaViolation(
                f"tool argument {key!r} is not of type {expected!r}: "
                f"{arguments[key]!r}"
            )


class Gateway:
    """Routes requests to the configured model per role, with bounded retries
    on transport failures and a shared token ledger."""

    def __init__(
        self,
        models: RoleModelConfig,
        backend: Backend,
        token_budget: int | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.models = models
        self.backend = backend
        self.ledger = TokenLedger()
        self.token_budget = token_budget
        self._sleep = sleep

    def complete(self, request: ChatRequest) -> ChatResponse:
        model = self.models.model_for(request.role)
        if (
            self.token_budget is not None
            and self.ledger.total_tokens >= self.token_budget
        ):
            raise BudgetExceeded(
                f"token budget {self.token_budget} exhausted "
                f"({self.ledger.total_tokens} used)"
            )
        last_error: Exception | None = None
        for attempt in range(RETRY_ATTEMPTS):
            try:
                response = self.backend.send(model, request)
                break
            except TransportFailure as exc:
                last_error = exc
                if attempt + 1 < RETRY_ATTEMPTS:
                    delay = RETRY_BACKOFF_SECONDS * (2**attempt)
                    log.warning(
                        "transport failure (attempt %d/%d), retrying in %.1fs: %s",
                        attempt + 1,
                        RETRY_ATTEMPTS,
                        delay,
                        exc,
                    )
                    self._sleep(delay)
        else:
            raise TransportFailure(
                f"backend failed after {RETRY_ATTEMPTS} attempts: {last_error}"
            )
        self.ledger.add(response.usage)
        if response.kind == "tool_call" and request.tool_schema is not None:
            validate_tool_arguments(response.tool_arguments, request.tool_schema)
        return response


# ---------------------------------------------------------------------------
# Transcript record / replay
# ---------------------------------------------------------------------------


def _request_to_wire(request: ChatRequest) -> dict:
    return {
        "role": request.role,
        "messages": [[m.speaker, m.text] for m in request.messages],
        "has_tool": request.tool_schema is not None,
    }


def _response_to_wire(response: ChatResponse) -> dict:
    return {
        "kind": response.kind,
        "text": response.text,
        "tool_name": response.tool_name,
        "tool_arguments": response.tool_arguments,
        "usage": {
            "input_tokens": response.usage.input_tokens,
            "output_tokens": response.usage.output_tokens,
        },
    }


def _response_from_wire(payload: dict) -> ChatResponse:
    usage = payload.get("usage", {})
    return ChatResponse(
        kind=payload["kind"],
        text=payload.get("text"),
        tool_name=payload.get("tool_name"),
        tool_arguments=payload.get("tool_arguments"),
        usage=Usage(
            input_tokens=int(usage.get("input_tokens", 0)),
            output_tokens=int(usage.get("output_tokens", 0)),
        ),
    )


class RecordingBackend:
    """Wraps a live backend and appends every exchange to a transcript file."""

    def __init__(self, inner: Backend, path: str | Path) -> None:
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def send(self, model: str, request: ChatRequest) -> ChatResponse:
        response = self.inner.send(model, request)
        record = {
            "role": request.role,
            "request_digest": request_digest(request),
            "request": _request_to_wire(request),
            "response": _response_to_wire(response),
        }
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=True) + "\n")
        return response


class ReplayBackend:
    """Serves recorded exchanges keyed by (role, message digest), in order.

    Repeated identical requests receive successive recorded responses, which
    is what lets self-consistency voting rounds replay distinct samples.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._queues: dict[tuple[str, str], deque[ChatResponse]] = {}
        if not self.path.exists():
            raise ReplayMiss(f"transcript not found: {self.path}")
        with self.path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ReplayMiss(
                        f"malformed transcript line {line_no} in {self.path}"
                    ) from exc
                key = (record["role"], record["request_digest"])
                self._queues.setdefault(key, deque()).append(
                    _response_from_wire(record["response"])
                )

    def send(self, model: str, request: ChatRequest) -> ChatResponse:
        key = (request.role, request_digest(request))
        with self._lock:
            queue = self._queues.get(key)
            if not queue:
                raise ReplayMiss(
                    f"no recorded exchange for role={request.role} "
                    f"digest={key[1][:12]}..."
                )
            return queue.popleft()


class HttpBackend:
    """Chat-completions HTTP client. Base URL and key come from the
    environment unless passed explicitly."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout_seconds: float = 600.0,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout_seconds = timeout_seconds

    def send(self, model: str, request: ChatRequest) -> ChatResponse:
        import requests

        payload: dict = {
            "model": model,
            "messages": [
                {"role": m.speaker, "content": m.text} for m in request.messages
            ],
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_output_tokens,
        }
        if request.tool_schema is not None:
            payload["tools"] = [request.tool_schema]
            payload["tool_choice"] = "required"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            http_response = requests.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout_seconds,
            )
        except requests.RequestException as exc:
            raise TransportFailure(str(exc)) from exc
        if http_response.status_code != 200:
            raise TransportFailure(
                f"HTTP {http_response.status_code}: {http_response.text[:500]}"
            )
        try:
            body = http_response.json()
            choice = body["choices"][0]["message"]
            usage_raw = body.get("usage", {})
            usage = Usage(
                input_tokens=int(usage_raw.get("prompt_tokens", 0)),
                output_tokens=int(usage_raw.get("completion_tokens", 0)),
            )
            tool_calls = choice.get("tool_calls")
            if tool_calls:
                call = tool_calls[0]["function"]
                return ChatResponse(
                    kind="tool_call",
                    tool_name=call["name"],
                    tool_arguments=json.loads(call["arguments"]),
                    usage=usage,
                )
            return ChatResponse(
                kind="text", text=choice.get("content") or "", usage=usage
            )
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise TransportFailure(f"malformed completion payload: {exc}") from exc
