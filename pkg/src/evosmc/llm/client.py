"""OpenAI-compatible chat-completions client.

The transport is pluggable (tests inject fakes); the default posts JSON via
`requests`.  Transient failures (connection errors, 429, 5xx) retry with
exponential backoff up to a cap, and every run honors a request budget
counter.  Transcripts are recorded with the bearer token redacted.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ChatRequest",
    "ChatError",
    "TransportError",
    "HttpStatusError",
    "BudgetExhausted",
    "MalformedApiResponse",
    "OpenAiChatClient",
]

DEFAULT_TEMPERATURE = 1.0
DEFAULT_MAX_TOKENS = 4096

_TRANSIENT_STATUSES = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatRequest:
    model: str
    system: str
    user: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS


class ChatError(RuntimeError):
    pass


class TransportError(ChatError):
    pass


class HttpStatusError(ChatError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class BudgetExhausted(ChatError):
    pass


class MalformedApiResponse(ChatError):
    pass


def _requests_transport(url: str, payload: dict, headers: dict, timeout: float) -> tuple[int, dict | str]:
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    try:
        return resp.status_code, resp.json()
    except ValueError:
        return resp.status_code, resp.text


@dataclass
class OpenAiChatClient:
    endpoint: str  # base URL; /v1/chat/completions is appended if absent
    models: tuple[str, ...] = ("gpt-5-mini",)
    api_key_env: str = "EVOSMC_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_base_s: float = 0.5
    request_budget: int | None = None
    transport: Callable = _requests_transport
    ensemble_rng: np.random.Generator | None = None
    requests_sent: int = 0
    model_counts: dict = field(default_factory=dict)
    transcripts: list = field(default_factory=list)

    def _url(self) -> str:
        base = self.endpoint.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/v1/chat/completions"

    def pick_model(self) -> str:
        """Per-request Bernoulli routing between two models, uniform beyond."""
        if len(self.models) == 1:
            return self.models[0]
        rng = self.ensemble_rng
        if rng is None:
            rng = self.ensemble_rng = np.random.default_rng(0)
        return self.models[int(rng.integers(len(self.models)))]

    def chat(self, request: ChatRequest) -> str:
        """Send one chat request; returns the first choice's message content."""
        if self.request_budget is not None and self.requests_sent >= self.request_budget:
            raise BudgetExhausted(f"request budget of {self.request_budget} exhausted")
        api_key = os.environ.get(self.api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

        attempts = []
        last_error: ChatError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt > 0:
                time.sleep(self.backoff_base_s * 2 ** (attempt - 1))
            try:
                status, body = self.transport(self._url(), payload, headers, self.timeout_s)
            except TransportError as exc:
                attempts.append({"attempt": attempt, "error": str(exc)})
                last_error = exc
                continue
            attempts.append({"attempt": attempt, "status": status})
            if status in _TRANSIENT_STATUSES:
                last_error = HttpStatusError(status, str(body))
                continue
            if status != 200:
                self._record(request, payload, attempts, error=f"HTTP {status}")
                raise HttpStatusError(status, str(body))
            self.requests_sent += 1
            self.model_counts[request.model] = self.model_counts.get(request.model, 0) + 1
            content = self._extract_content(body)
            self._record(request, payload, attempts, content=content)
            return content
        self._record(request, payload, attempts, error=str(last_error))
        raise last_error if last_error is not None else TransportError("no attempts made")

    @staticmethod
    def _extract_content(body) -> str:
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedApiResponse(f"unexpected response shape: {str(body)[:200]}") from None
        if not isinstance(content, str):
            raise MalformedApiResponse("message content is not a string")
        return content

    def _record(self, request: ChatRequest, payload: dict, attempts: list, content: str | None = None, error: str | None = None) -> None:
        self.transcripts.append(
            {
                "model": request.model,
                "payload": payload,  # no credentials: auth travels in headers only
                "attempts": attempts,
                "content": content,
                "error": error,
            }
        )
