"""Minimal chat-completions client with bounded retry.

Talks to any endpoint speaking the chat-completions wire format
(POST {endpoint}/chat/completions with a messages array, first choice text in
choices[0].message.content).  The credential comes from ARCHEVO_API_KEY (or
OPENAI_API_KEY); the endpoint, model, and sampling settings come from run
config.  Response content is never interpreted here.
"""
from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field

import requests

API_KEY_ENV = "ARCHEVO_API_KEY"
API_KEY_ENV_FALLBACK = "OPENAI_API_KEY"


class LlmError(Exception):
    pass


class AuthError(LlmError):
    """Credential rejected; never retried."""


class RateLimitedError(LlmError):
    pass


class ServerError(LlmError):
    pass


class TransportError(LlmError):
    """Connection failure or timeout."""


class MalformedResponseError(LlmError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    messages: tuple[dict, ...]
    temperature: float = 0.7
    max_tokens: int = 4096

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].get("role") not in ("system", "user"):
            raise ValueError("first message must have role system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def payload(self) -> dict:
        return {
            "model": self.model,
            "messages": list(self.messages),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    multiplier: float = 2.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def delay(self, attempt: int) -> float:
        """Backoff before retry number `attempt` (1-based); non-decreasing."""
        return self.base_delay * (self.multiplier ** (attempt - 1))


@dataclass(frozen=True)
class Completion:
    text: str
    usage: dict
    attempts: int


@dataclass
class ChatClient:
    """Shareable client; a semaphore bounds concurrent in-flight requests."""

    endpoint: str
    api_key: str | None = None
    concurrency: int = 4
    timeout: float = 120.0
    sleep: object = time.sleep  # injectable for tests
    _sem: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self):
        self._sem = threading.Semaphore(self.concurrency)

    def _key(self) -> str | None:
        return self.api_key or os.environ.get(API_KEY_ENV) or os.environ.get(API_KEY_ENV_FALLBACK)

    def _post_once(self, req: CompletionRequest) -> Completion:
        headers = {"Content-Type": "application/json"}
        key = self._key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.endpoint.rstrip("/") + "/chat/completions"
        try:
            with self._sem:
                resp = requests.post(url, json=req.payload(), headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"credential rejected (HTTP {resp.status_code})")
        if resp.status_code == 429:
            raise RateLimitedError("rate limited (HTTP 429)")
        if resp.status_code >= 500:
            raise ServerError(f"server error (HTTP {resp.status_code})")
        if resp.status_code != 200:
            raise MalformedResponseError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise MalformedResponseError(f"cannot extract completion text: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponseError(f"completion text is {type(text).__name__}, not str")
        return Completion(text=text, usage=body.get("usage", {}) or {}, attempts=1)

    def complete(self, req: CompletionRequest, policy: RetryPolicy | None = None) -> Completion:
        """First choice text, retrying rate limits, 5xx, and transport errors."""
        policy = policy or RetryPolicy()
        last: LlmError | None = None
        for attempt in range(1, policy.max_attempts + 1):
            try:
                result = self._post_once(req)
                return Completion(result.text, result.usage, attempts=attempt)
            except (RateLimitedError, ServerError, TransportError) as exc:
                last = exc
                if attempt < policy.max_attempts:
                    self.sleep(policy.delay(attempt))
        assert last is not None
        raise last
