"""Chat-completion client for OpenAI-compatible endpoints, plus test doubles.

Every pipeline component that talks to a language model goes through the
``ChatClient`` protocol so runs can be driven by a live endpoint, a
scripted mock, or a recorded journal interchangeably.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Protocol

import httpx

ENDPOINT_ENV = "FALCON_LLM_ENDPOINT"
API_KEY_ENV = "FALCON_LLM_API_KEY"
MODEL_ENV = "FALCON_LLM_MODEL"


class LlmError(Exception):
    """Transport or protocol failure talking to the model endpoint."""


@dataclass
class LlmConfig:
    endpoint_url: str | None = None
    api_key: str | None = None
    model_name: str = "gpt-4o"
    temperature: float = 0.2
    max_tokens: int = 2048
    timeout: float = 120.0
    retries: int = 3

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @classmethod
    def from_env(cls) -> "LlmConfig":
        return cls(
            endpoint_url=os.environ.get(ENDPOINT_ENV),
            api_key=os.environ.get(API_KEY_ENV),
            model_name=os.environ.get(MODEL_ENV, "gpt-4o"),
        )


class ChatClient(Protocol):
    def complete(self, messages: list[dict], config: LlmConfig) -> str:
        """Return the assistant message text for a chat exchange."""
        ...


class OpenAiChatClient:
    """Talks to any endpoint speaking the chat-completions wire format."""

    def complete(self, messages: list[dict], config: LlmConfig) -> str:
        if not config.endpoint_url:
            raise LlmError(f"no LLM endpoint configured (set {ENDPOINT_ENV})")
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        payload = {
            "model": config.model_name,
            "messages": messages,
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        }
        last_error: Exception | None = None
        for attempt in range(config.retries):
            try:
                resp = httpx.post(
                    config.endpoint_url, json=payload, headers=headers, timeout=config.timeout
                )
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < config.retries:
                    time.sleep(min(2.0**attempt * 0.5, 10.0))
        raise LlmError(f"chat completion failed after {config.retries} attempts: {last_error}")


class MockChatClient:
    """Scripted client: returns canned completions in order.

    Exhausting the script raises, which keeps tests honest about how many
    iterations a pipeline run actually performed.
    """

    def __init__(self, completions: list[str]):
        self._completions = list(completions)
        self.requests: list[list[dict]] = []

    def complete(self, messages: list[dict], config: LlmConfig) -> str:
        self.requests.append(messages)
        if not self._completions:
            raise LlmError("mock script exhausted")
        return self._completions.pop(0)
