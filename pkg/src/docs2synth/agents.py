"""Unified multimodal LLM provider layer.

One OpenAI-compatible wire shape covers remote APIs and local engines
(Ollama, vLLM) through their compatibility endpoints; a deterministic
mock provider driven by fixture files keeps the rest of the pipeline
testable offline. API keys come only from environment variables.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ("openai-compatible", "ollama", "mock")
BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0
DEFAULT_MAX_IN_FLIGHT = 4

_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*(.*?)```", re.DOTALL)


class ProviderError(RuntimeError):
    """Base class for provider failures."""


class ProviderUnreachable(ProviderError):
    """Transport failure or 5xx after exhausting retries."""


class AuthError(ProviderError):
    """401/403 from the provider; never retried."""


class BudgetExceeded(ProviderError):
    """429 still present after exhausting retries."""


class MalformedResponse(ProviderError):
    """Response body missing required fields or not parseable.

    For complete_json failures both raw reply texts are attached.
    """

    def __init__(self, message: str, replies: list[str] | None = None):
        super().__init__(message)
        self.replies = replies or []


class FixtureError(ValueError):
    """Mock fixture missing or structurally invalid."""


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    media_type: str
    data_b64: str


@dataclass(frozen=True)
class ChatMessage:
    role: str
    parts: tuple

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad role {self.role!r}")
        if not self.parts:
            raise ValueError("message needs at least one part")

    @classmethod
    def text(cls, role: str, content: str) -> "ChatMessage":
        return cls(role=role, parts=(TextPart(content),))

    def text_content(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    kind: str
    base_url: str  # for mock kind this is the fixture path
    api_key_env: str = ""
    model: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_s: int = 60
    max_retries: int = 2
    requests_per_minute: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "mock" and not self.base_url:
            raise ValueError("mock provider requires a fixture path in base_url")
        if self.kind != "mock" and not self.base_url:
            raise ValueError(f"provider {self.name!r} requires a base_url")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1 or self.timeout_s < 1 or self.max_retries < 0:
            raise ValueError("max_tokens/timeout_s must be >= 1, max_retries >= 0")


@dataclass(frozen=True)
class AgentReply:
    text: str
    raw: dict
    usage: dict | None = None
    latency_ms: int = 0


@dataclass(frozen=True)
class MockRule:
    match: str
    regex: bool
    response: str


@dataclass
class MockRuleSet:
    rules: list[MockRule]
    default: str


def mock_provider_from_fixture(path, name: str = "mock") -> tuple[ProviderConfig, MockRuleSet]:
    """Load a fixture and return a ready-to-use mock provider config."""
    rules = _load_fixture(Path(path))
    config = ProviderConfig(name=name, kind="mock", base_url=str(path))
    return config, rules


def _load_fixture(path: Path) -> MockRuleSet:
    if not path.exists():
        raise FixtureError(f"fixture not found: {path}")
    rules: list[MockRule] = []
    default: str | None = None
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FixtureError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
        if "default" in record:
            default = str(record["default"])
            continue
        if "match" not in record or "response" not in record:
            raise FixtureError(f"{path}:{lineno}: rule needs 'match' and 'response'")
        rules.append(
            MockRule(
                match=str(record["match"]),
                regex=bool(record.get("regex", False)),
                response=str(record["response"]),
            )
        )
    if default is None:
        raise FixtureError(f"{path}: fixture must end with a {{\"default\": ...}} line")
    return MockRuleSet(rules=rules, default=default)


_fixture_cache: dict[tuple[str, float], MockRuleSet] = {}


def _fixture_for(config: ProviderConfig) -> MockRuleSet:
    path = Path(config.base_url)
    if not path.exists():
        raise FixtureError(f"fixture not found: {path}")
    key = (str(path.resolve()), path.stat().st_mtime)
    if key not in _fixture_cache:
        _fixture_cache[key] = _load_fixture(path)
    return _fixture_cache[key]


def _mock_complete(config: ProviderConfig, messages: list[ChatMessage]) -> AgentReply:
    ruleset = _fixture_for(config)
    user_text = "\n".join(
        m.text_content() for m in messages if m.role == "user"
    )
    for i, rule in enumerate(ruleset.rules):
        if rule.regex:
            m = re.search(rule.match, user_text)
            if m:
                try:
                    text = m.expand(rule.response)
                except (re.error, IndexError) as exc:
                    raise FixtureError(
                        f"bad response template {rule.response!r}: {exc}"
                    ) from exc
                return AgentReply(text=text, raw={"mock": True, "rule_index": i})
        elif rule.match in user_text:
            return AgentReply(text=rule.response, raw={"mock": True, "rule_index": i})
    return AgentReply(text=ruleset.default, raw={"mock": True, "rule_index": None})


def _to_openai_body(config: ProviderConfig, messages: list[ChatMessage], temperature: float) -> dict:
    wire_messages = []
    for m in messages:
        content = []
        for part in m.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                content.append(
                    {
                        "type": "image_url",
                        "image_url": {
                            "url": f"data:{part.media_type};base64,{part.data_b64}"
                        },
                    }
                )
        wire_messages.append({"role": m.role, "content": content})
    return {
        "model": config.model,
        "messages": wire_messages,
        "temperature": temperature,
        "max_tokens": config.max_tokens,
    }


def _http_post(url: str, headers: dict, body: dict, timeout: int):
    """Thin wrapper so tests can fake the transport."""
    response = requests.post(url, headers=headers, json=body, timeout=timeout)
    try:
        payload = response.json()
    except ValueError:
        payload = {"raw_text": response.text}
    return response.status_code, payload


class _RateLimiter:
    def __init__(self, requests_per_minute: int | None):
        self.interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self.lock = threading.Lock()
        self.next_allowed = 0.0

    def acquire(self) -> None:
        if self.interval <= 0:
            return
        with self.lock:
            now = time.monotonic()
            wait = self.next_allowed - now
            self.next_allowed = max(now, self.next_allowed) + self.interval
        if wait > 0:
            time.sleep(wait)


_provider_state_lock = threading.Lock()
_provider_semaphores: dict[str, threading.Semaphore] = {}
_provider_limiters: dict[str, _RateLimiter] = {}


def _provider_gate(config: ProviderConfig) -> tuple[threading.Semaphore, _RateLimiter]:
    with _provider_state_lock:
        if config.name not in _provider_semaphores:
            _provider_semaphores[config.name] = threading.Semaphore(DEFAULT_MAX_IN_FLIGHT)
            _provider_limiters[config.name] = _RateLimiter(config.requests_per_minute)
        return _provider_semaphores[config.name], _provider_limiters[config.name]


def _extract_text(payload: dict) -> str:
    try:
        choice = payload["choices"][0]
        content = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"response missing choices[0].message.content: {payload}") from exc
    if content is None:
        return ""
    if isinstance(content, list):
        return "".join(
            p.get("text", "") for p in content if isinstance(p, dict) and p.get("type") == "text"
        )
    return str(content)


def complete(
    config: ProviderConfig,
    messages: list[ChatMessage],
    temperature: float | None = None,
) -> AgentReply:
    """One chat completion with retry on transport/5xx/429, never on other 4xx.

    Backoff is exponential (base 1s, factor 2) with full jitter.
    """
    if not messages:
        raise ValueError("messages must be non-empty")
    if config.kind == "mock":
        return _mock_complete(config, messages)

    temp = config.temperature if temperature is None else temperature
    url = config.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    body = _to_openai_body(config, messages, temp)
    semaphore, limiter = _provider_gate(config)

    last_error: Exception | None = None
    last_status: int | None = None
    attempts = config.max_retries + 1
    for attempt in range(attempts):
        if attempt > 0:
            time.sleep(random.uniform(0, BACKOFF_BASE_S * BACKOFF_FACTOR ** (attempt - 1)))
        started = time.monotonic()
        with semaphore:
            limiter.acquire()
            try:
                status, payload = _http_post(url, headers, body, config.timeout_s)
            except requests.RequestException as exc:
                last_error, last_status = exc, None
                logger.warning("provider %s attempt %d transport error: %s", config.name, attempt + 1, exc)
                continue
        latency_ms = int((time.monotonic() - started) * 1000)
        if status == 200:
            return AgentReply(
                text=_extract_text(payload),
                raw=payload,
                usage=payload.get("usage"),
                latency_ms=latency_ms,
            )
        last_status = status
        if status in (401, 403):
            raise AuthError(f"provider {config.name}: HTTP {status}: {payload}")
        if status == 429 or status >= 500:
            logger.warning("provider %s attempt %d: HTTP %d", config.name, attempt + 1, status)
            continue
        raise ProviderError(f"provider {config.name}: HTTP {status}: {payload}")

    if last_status == 429:
        raise BudgetExceeded(f"provider {config.name}: 429 after {attempts} attempts")
    raise ProviderUnreachable(
        f"provider {config.name}: unreachable after {attempts} attempts "
        f"(last status {last_status}, last error {last_error})"
    )


def _try_parse_json(text: str):
    """First syntactically valid top-level object/array in the text, or None."""
    candidates = [m.strip() for m in _FENCE_RE.findall(text)]
    candidates.append(text.strip())
    for candidate in candidates:
        if not candidate:
            continue
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(value, (dict, list)):
            return value
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "{[":
            try:
                value, _ = decoder.raw_decode(text[i:])
            except json.JSONDecodeError:
                continue
            if isinstance(value, (dict, list)):
                return value
    return None


def complete_json(
    config: ProviderConfig,
    messages: list[ChatMessage],
    schema_hint: str = "",
    temperature: float | None = None,
):
    """Completion parsed as JSON; one corrective re-prompt before giving up."""
    reply = complete(config, messages, temperature=temperature)
    value = _try_parse_json(reply.text)
    if value is not None:
        return value
    retry_messages = list(messages) + [
        ChatMessage.text("assistant", reply.text),
        ChatMessage.text(
            "user",
            "Return only valid JSON." + (f" Schema: {schema_hint}" if schema_hint else ""),
        ),
    ]
    second = complete(config, retry_messages, temperature=temperature)
    value = _try_parse_json(second.text)
    if value is not None:
        return value
    raise MalformedResponse(
        "no parseable JSON after corrective re-prompt",
        replies=[reply.text, second.text],
    )
