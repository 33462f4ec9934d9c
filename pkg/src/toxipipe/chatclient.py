"""Chat-completion clients used by pre-annotation, evaluation and translation.

The pipeline never runs the pre-annotation model locally; it talks to an
OpenAI-compatible chat endpoint. Endpoint coordinates come from the
``TOXI_LLM_BASE_URL`` / ``TOXI_LLM_API_KEY`` / ``TOXI_LLM_MODEL``
environment variables.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

ENV_BASE_URL = "TOXI_LLM_BASE_URL"
ENV_API_KEY = "TOXI_LLM_API_KEY"
ENV_MODEL = "TOXI_LLM_MODEL"


class ChatClientError(RuntimeError):
    """Raised once a request has exhausted its retry budget."""


class ChatClient(Protocol):
    """Minimal completion interface: prompt text in, completion text out.

    ``request_id`` identifies a logical request so retries (and resumed
    runs) stay idempotent; implementations may use it for caching or
    de-duplication but must not require it to be unique across runs.
    """

    def complete(self, prompt: str, request_id: str) -> str: ...


@dataclass
class HttpChatClient:
    """OpenAI-style ``/chat/completions`` client with exponential backoff."""

    base_url: str
    model: str
    api_key: str = ""
    max_retries: int = 3
    backoff_base: float = 0.5
    timeout: float = 60.0
    temperature: float = 0.0
    _sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    @classmethod
    def from_env(cls, **kwargs) -> "HttpChatClient":
        base_url = os.environ.get(ENV_BASE_URL)
        model = os.environ.get(ENV_MODEL)
        if not base_url or not model:
            raise ChatClientError(
                f"{ENV_BASE_URL} and {ENV_MODEL} must be set to use the HTTP client"
            )
        return cls(base_url=base_url, model=model,
                   api_key=os.environ.get(ENV_API_KEY, ""), **kwargs)

    def complete(self, prompt: str, request_id: str) -> str:
        url = self.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                response = httpx.post(url, json=payload, headers=headers, timeout=self.timeout)
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = ChatClientError(
                        f"{request_id}: HTTP {response.status_code}"
                    )
                    continue
                if response.status_code >= 400:
                    # client errors are deterministic; retrying wastes budget
                    raise ChatClientError(f"{request_id}: HTTP {response.status_code}")
                data = response.json()
                return data["choices"][0]["message"]["content"]
            except httpx.HTTPError as exc:
                last_error = exc
        raise ChatClientError(f"request {request_id} failed after retries") from last_error


@dataclass
class ScriptedChatClient:
    """Test double: returns canned completions, records every call.

    ``script`` maps a request id to the completion text; ``fallback``
    handles ids not in the script (raising by default).
    """

    script: dict[str, str] = field(default_factory=dict)
    fallback: Callable[[str, str], str] | None = None
    calls: list[str] = field(default_factory=list)

    def complete(self, prompt: str, request_id: str) -> str:
        self.calls.append(request_id)
        if request_id in self.script:
            return self.script[request_id]
        if self.fallback is not None:
            return self.fallback(prompt, request_id)
        raise ChatClientError(f"no scripted completion for {request_id}")
