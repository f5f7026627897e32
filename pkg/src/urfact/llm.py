"""Chat-completion gateway: live HTTP and offline transcript backends, retries,
per-call cost accounting, and structured-output parsing.

The gateway retries transient transport failures with exponential backoff and
jitter; authentication failures are never retried. Every successful call is
billed to a thread-safe :class:`CostLedger`. A deterministic transcript
backend replays canned responses so the entire downstream pipeline can run
offline and bit-for-bit reproducibly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT_TOKENS = 2500
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_SECONDS = 1.0

# Expected output shapes for structured parsing.
FREE_TEXT = "free-text"
ITEMIZED_LIST = "itemized-list"
LABELED_JUDGMENT = "labeled-judgment"
OUTPUT_SHAPES = (FREE_TEXT, ITEMIZED_LIST, LABELED_JUDGMENT)


class GatewayError(Exception):
    """Base error for gateway failures."""


class AuthenticationError(GatewayError):
    """Credentials rejected by the backend; never retried."""


class TransientBackendError(GatewayError):
    """Transport or 5xx-class failure that is safe to retry."""


class RetriesExhaustedError(GatewayError):
    """All retry attempts failed."""


class MockTranscriptError(GatewayError):
    """A mock backend received a request it has no canned response for."""


class StructuredParseError(GatewayError):
    """Model output could not be parsed into the expected shape.

    Carries the raw model text for logging and diagnostics.
    """

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request.

    ``tag`` names the prompt template that produced ``user_text``; it is used
    for transcript routing in mock runs and for diagnostics.
    """

    model_id: str
    user_text: str
    system_text: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    tag: str | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be > 0")


@dataclass(frozen=True)
class ChatResponse:
    """Model reply plus usage accounting."""

    text: str
    input_tokens: int
    output_tokens: int
    latency: float = 0.0
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class ModelPricing:
    """Per-token prices for one model."""

    model_id: str
    price_per_input_token: float
    price_per_output_token: float

    def __post_init__(self) -> None:
        if self.price_per_input_token < 0 or self.price_per_output_token < 0:
            raise ValueError("prices must be >= 0")


class PricingTable:
    """Model pricing as configuration data.

    Unknown models cost zero (with a one-time warning); prices drift too fast
    to hard-code.
    """

    def __init__(self, models: dict[str, ModelPricing] | None = None):
        self.models = dict(models or {})
        self._warned: set[str] = set()

    @classmethod
    def from_file(cls, path: str | Path) -> "PricingTable":
        """Load pricing from a JSON file.

        Format: {"models": {"<model_id>": {"price_per_input_token": ...,
        "price_per_output_token": ...}}}
        """
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        models = {}
        for model_id, entry in data.get("models", {}).items():
            models[model_id] = ModelPricing(
                model_id=model_id,
                price_per_input_token=float(entry["price_per_input_token"]),
                price_per_output_token=float(entry["price_per_output_token"]),
            )
        return cls(models)

    def cost(self, model_id: str, input_tokens: int, output_tokens: int) -> float:
        pricing = self.models.get(model_id)
        if pricing is None:
            if model_id not in self._warned:
                self._warned.add(model_id)
                logger.warning("no pricing configured for model %s; billing 0", model_id)
            return 0.0
        return (
            input_tokens * pricing.price_per_input_token
            + output_tokens * pricing.price_per_output_token
        )


class CostLedger:
    """Thread-safe accumulator of model and search spend for one run.

    All aggregates are monotonically non-decreasing; updates are atomic.
    """

    def __init__(self) -> None:
        self.llm_cost = 0.0
        self.search_cost = 0.0
        self.llm_calls = 0
        self.search_calls = 0
        self.input_tokens = 0
        self.output_tokens = 0
        self._lock = threading.Lock()

    @property
    def total(self) -> float:
        return self.llm_cost + self.search_cost

    def add_llm_call(self, cost: float, input_tokens: int, output_tokens: int) -> None:
        if cost < 0 or input_tokens < 0 or output_tokens < 0:
            raise ValueError("ledger increments must be >= 0")
        with self._lock:
            self.llm_cost += cost
            self.llm_calls += 1
            self.input_tokens += input_tokens
            self.output_tokens += output_tokens

    def add_search_call(self, cost: float) -> None:
        if cost < 0:
            raise ValueError("ledger increments must be >= 0")
        with self._lock:
            self.search_cost += cost
            self.search_calls += 1

    def merge(self, other: "CostLedger") -> None:
        """Fold another ledger's totals into this one."""
        with self._lock:
            self.llm_cost += other.llm_cost
            self.search_cost += other.search_cost
            self.llm_calls += other.llm_calls
            self.search_calls += other.search_calls
            self.input_tokens += other.input_tokens
            self.output_tokens += other.output_tokens

    def to_dict(self) -> dict:
        return {
            "llm_cost": self.llm_cost,
            "search_cost": self.search_cost,
            "total_cost": self.total,
            "llm_calls": self.llm_calls,
            "search_calls": self.search_calls,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
        }


def estimate_tokens(text: str) -> int:
    """Deterministic token-count estimate used when a backend reports no usage."""
    if not text:
        return 0
    return max(1, (len(text) + 3) // 4)


def request_fingerprint(request: ChatRequest) -> str:
    """Stable fingerprint of (template tag, prompt text) for transcript keying."""
    payload = f"{request.tag or ''}\n{request.user_text}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class BackendReply:
    """Raw backend result before pricing and ledger accounting."""

    text: str
    input_tokens: int
    output_tokens: int
    truncated: bool = False


class HttpChatBackend:
    """Live chat-completion backend speaking the common HTTP wire protocol.

    Sends {model, messages, temperature, max_tokens} and reads the first
    choice's message content plus usage.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        session: requests.Session | None = None,
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.session = session or requests.Session()
        self.timeout = timeout

    def complete(self, request: ChatRequest) -> BackendReply:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload = {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        try:
            response = self.session.post(
                self.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthenticationError(f"authentication failed ({response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"backend returned {response.status_code}")
        if response.status_code >= 400:
            raise GatewayError(f"backend returned {response.status_code}: {response.text[:200]}")
        data = response.json()
        choice = data["choices"][0]
        text = choice["message"]["content"] or ""
        usage = data.get("usage") or {}
        return BackendReply(
            text=text,
            input_tokens=int(usage.get("prompt_tokens", estimate_tokens(request.user_text))),
            output_tokens=int(usage.get("completion_tokens", estimate_tokens(text))),
            truncated=choice.get("finish_reason") == "length",
        )


class TranscriptChatBackend:
    """Deterministic offline backend replaying canned responses.

    Entries match a request by template tag plus either a ``contains``
    substring of the rendered prompt or an exact request ``fingerprint``
    (see :func:`request_fingerprint`). The first matching entry wins. A
    request with no matching entry raises :class:`MockTranscriptError`, so a
    mock-backed run can never silently fall through to the network.

    Entry fields:
      template        optional template tag to match (absent matches any tag)
      contains        substring the prompt must contain
      fingerprint     exact request fingerprint, alternative to ``contains``
      response        canned reply text
      responses       list of replies consumed one per matching call
                      (the last one repeats once exhausted)
      input_tokens / output_tokens   optional usage override
      error           "transient" or "auth" to raise instead of replying
    """

    def __init__(self, entries: list[dict]):
        self.entries = [dict(entry) for entry in entries]
        self.calls: list[tuple[str | None, str]] = []
        self._use_counts = [0] * len(self.entries)
        self._lock = threading.Lock()
        for i, entry in enumerate(self.entries):
            if "error" not in entry and "response" not in entry and "responses" not in entry:
                raise ValueError(f"transcript entry {i} has no response or error")

    @classmethod
    def from_file(cls, path: str | Path) -> "TranscriptChatBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["entries"])

    def _matches(self, entry: dict, request: ChatRequest) -> bool:
        template = entry.get("template")
        if template is not None and template != request.tag:
            return False
        if "fingerprint" in entry:
            return entry["fingerprint"] == request_fingerprint(request)
        if "contains" in entry:
            return entry["contains"] in request.user_text
        return True

    def complete(self, request: ChatRequest) -> BackendReply:
        with self._lock:
            self.calls.append((request.tag, request.user_text))
            for i, entry in enumerate(self.entries):
                if not self._matches(entry, request):
                    continue
                if entry.get("error") == "auth":
                    raise AuthenticationError("canned authentication failure")
                if entry.get("error"):
                    raise TransientBackendError(f"canned {entry['error']} failure")
                if "responses" in entry:
                    replies = entry["responses"]
                    text = replies[min(self._use_counts[i], len(replies) - 1)]
                else:
                    text = entry["response"]
                self._use_counts[i] += 1
                return BackendReply(
                    text=text,
                    input_tokens=int(entry.get("input_tokens", estimate_tokens(request.user_text))),
                    output_tokens=int(entry.get("output_tokens", estimate_tokens(text))),
                )
        head = request.user_text[:120].replace("\n", " ")
        raise MockTranscriptError(
            f"no transcript entry for tag={request.tag!r}, prompt starts: {head!r}"
        )


class LLMGateway:
    """Uniform access to a chat backend with retries, pricing, and a ledger."""

    def __init__(
        self,
        backend,
        pricing: PricingTable | None = None,
        ledger: CostLedger | None = None,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_seconds: float = DEFAULT_BACKOFF_SECONDS,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.backend = backend
        self.pricing = pricing or PricingTable()
        self.ledger = ledger if ledger is not None else CostLedger()
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self._sleep = sleep
        self._rng = rng or random.Random()

    def bound_to(self, ledger: CostLedger) -> "LLMGateway":
        """A view of this gateway that bills to a different ledger.

        The backend, pricing, and retry policy are shared.
        """
        view = LLMGateway.__new__(LLMGateway)
        view.__dict__.update(self.__dict__)
        view.ledger = ledger
        return view

    def complete(self, request: ChatRequest) -> ChatResponse:
        started = time.perf_counter()
        reply: BackendReply | None = None
        for attempt in range(self.max_attempts):
            try:
                reply = self.backend.complete(request)
                break
            except TransientBackendError as exc:
                if attempt + 1 >= self.max_attempts:
                    raise RetriesExhaustedError(
                        f"gave up after {self.max_attempts} attempts: {exc}"
                    ) from exc
                delay = self.backoff_seconds * (2 ** attempt) * (0.5 + self._rng.random())
                logger.warning(
                    "transient backend failure (attempt %d/%d), retrying in %.1fs: %s",
                    attempt + 1,
                    self.max_attempts,
                    delay,
                    exc,
                )
                self._sleep(delay)
        assert reply is not None
        cost = self.pricing.cost(request.model_id, reply.input_tokens, reply.output_tokens)
        self.ledger.add_llm_call(cost, reply.input_tokens, reply.output_tokens)
        return ChatResponse(
            text=reply.text,
            input_tokens=reply.input_tokens,
            output_tokens=reply.output_tokens,
            latency=time.perf_counter() - started,
            truncated=reply.truncated or reply.output_tokens >= request.max_output_tokens,
        )


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\s*\n(.*?)```", re.DOTALL)


def _strip_fences(text: str) -> str:
    match = _FENCE_RE.search(text)
    return match.group(1) if match else text


def _first_json_value(text: str, opener: str, raw: str) -> object:
    decoder = json.JSONDecoder()
    for i, char in enumerate(text):
        if char == opener:
            try:
                value, _ = decoder.raw_decode(text[i:])
            except ValueError:
                continue
            return value
    raise StructuredParseError("no well-formed JSON value found in model output", raw)


def _parse_binary_label(value: object, raw: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise StructuredParseError(f"judgment label must be true or false, got {value!r}", raw)


def parse_structured(text: str, expected_shape: str):
    """Parse model output into the expected structured shape.

    Tolerates surrounding code fences and leading/trailing prose with a
    single repair pass (strip fences, extract the first well-formed JSON
    value) before failing. Failures raise :class:`StructuredParseError`
    carrying the raw text.

    Shapes:
      free-text         stripped text
      itemized-list     list of non-empty strings (JSON array)
      labeled-judgment  {"label": bool, "reasoning": str, "correction": str | None}
    """
    if expected_shape not in OUTPUT_SHAPES:
        raise ValueError(f"unknown output shape {expected_shape!r}")
    if expected_shape == FREE_TEXT:
        return text.strip()

    raw = text
    stripped = text.strip()
    if not stripped:
        raise StructuredParseError("empty model output", raw)

    opener = "[" if expected_shape == ITEMIZED_LIST else "{"
    try:
        value = json.loads(stripped)
    except ValueError:
        repaired = _strip_fences(stripped).strip()
        value = _first_json_value(repaired, opener, raw)

    if expected_shape == ITEMIZED_LIST:
        if not isinstance(value, list):
            raise StructuredParseError(f"expected a JSON array, got {type(value).__name__}", raw)
        items = []
        for item in value:
            if not isinstance(item, str):
                raise StructuredParseError("list items must be strings", raw)
            item = item.strip()
            if item:
                items.append(item)
        return items

    if not isinstance(value, dict):
        raise StructuredParseError(f"expected a JSON object, got {type(value).__name__}", raw)
    if "label" not in value:
        raise StructuredParseError("judgment missing 'label'", raw)
    label = _parse_binary_label(value["label"], raw)
    reasoning = value.get("reasoning")
    if not isinstance(reasoning, str) or not reasoning.strip():
        raise StructuredParseError("judgment missing non-empty 'reasoning'", raw)
    correction = value.get("correction")
    if correction is not None:
        correction = str(correction).strip() or None
    return {"label": label, "reasoning": reasoning.strip(), "correction": correction}
