"""LLM providers: a string-in/string-out completion contract.

``ScriptedProvider`` replays a fixture for deterministic tests;
``HttpProvider`` talks to any OpenAI-compatible ``/chat/completions`` endpoint.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx


class ProviderError(RuntimeError):
    pass


class FixtureExhausted(ProviderError):
    pass


class ExpectationFailed(ProviderError):
    def __init__(self, index: int, missing: str):
        self.index = index
        self.missing = missing
        super().__init__(f"fixture record {index}: expected {missing!r} in user prompt")


class ProviderHTTPError(ProviderError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"HTTP {status}: {body[:500]}")


class MalformedResponse(ProviderError):
    pass


@dataclass(frozen=True)
class Exchange:
    system: str
    user: str
    response: str


class Provider:
    """Base provider. Subclasses implement ``_complete``."""

    def __init__(self):
        self.transcript: list[Exchange] = []
        self._lock = threading.Lock()

    def complete(self, system_prompt: str, user_prompt: str) -> str:
        response = self._complete(system_prompt, user_prompt)
        with self._lock:
            self.transcript.append(Exchange(system_prompt, user_prompt, response))
        return response

    def _complete(self, system_prompt: str, user_prompt: str) -> str:
        raise NotImplementedError

    @property
    def calls(self) -> int:
        return len(self.transcript)


class CallableProvider(Provider):
    """Wraps a plain ``llm(system_prompt, user_prompt) -> str`` function."""

    def __init__(self, fn: Callable[[str, str], str]):
        super().__init__()
        self.fn = fn

    def _complete(self, system_prompt, user_prompt):
        return self.fn(system_prompt, user_prompt)


def as_provider(obj) -> Provider:
    if isinstance(obj, Provider):
        return obj
    if callable(obj):
        return CallableProvider(obj)
    raise TypeError(f"not a provider: {obj!r}")


@dataclass(frozen=True)
class FixtureRecord:
    response: str
    expect_substring: str | None = None


class ScriptedProvider(Provider):
    """Returns fixture responses strictly in order; no wraparound."""

    def __init__(self, records):
        super().__init__()
        self.records = [r if isinstance(r, FixtureRecord) else FixtureRecord(**r) if isinstance(r, dict) else FixtureRecord(r)
                        for r in records]
        self._next = 0

    @classmethod
    def from_file(cls, path) -> ScriptedProvider:
        return cls(load_fixture(path))

    @property
    def remaining(self) -> int:
        return len(self.records) - self._next

    def _complete(self, system_prompt, user_prompt):
        with self._lock:
            index = self._next
            if index >= len(self.records):
                raise FixtureExhausted(f"fixture exhausted after {len(self.records)} record(s)")
            self._next += 1
        record = self.records[index]
        if record.expect_substring is not None and record.expect_substring not in user_prompt:
            raise ExpectationFailed(index, record.expect_substring)
        return record.response


def load_fixture(path) -> list[FixtureRecord]:
    """Read a fixture file: a JSON list of ``{"response", "expect_substring"?}``
    objects, or an object with a ``records`` list."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data["records"]
    out = []
    for i, rec in enumerate(data):
        if isinstance(rec, str):
            out.append(FixtureRecord(rec))
        elif isinstance(rec, dict) and isinstance(rec.get("response"), str):
            out.append(FixtureRecord(rec["response"], rec.get("expect_substring")))
        else:
            raise ValueError(f"bad fixture record {i} in {path}")
    return out


def save_fixture(records, path) -> None:
    recs = [r if isinstance(r, FixtureRecord) else FixtureRecord(r) for r in records]
    payload = [
        {"response": r.response, **({"expect_substring": r.expect_substring} if r.expect_substring is not None else {})}
        for r in recs
    ]
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")


@dataclass
class HttpProviderConfig:
    base_url: str
    model: str
    api_key: str = field(default="", repr=False)
    temperature: float = 0.0
    timeout: float = 60.0

    def __post_init__(self):
        if not self.base_url:
            raise ValueError("base_url must be non-empty")

    @classmethod
    def from_env(cls, **overrides) -> HttpProviderConfig:
        values = {
            "base_url": os.environ.get("LLM_BASE_URL", "https://api.openai.com/v1"),
            "model": os.environ.get("LLM_MODEL", "gpt-4o"),
            "api_key": os.environ.get("LLM_API_KEY", ""),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class HttpProvider(Provider):
    def __init__(self, config: HttpProviderConfig, transport: httpx.BaseTransport | None = None):
        super().__init__()
        self.config = config
        headers = {"Authorization": f"Bearer {config.api_key}"} if config.api_key else {}
        self._client = httpx.Client(timeout=config.timeout, headers=headers, transport=transport)

    def close(self):
        self._client.close()

    def _complete(self, system_prompt, user_prompt):
        return http_complete(self.config, system_prompt, user_prompt, client=self._client)


def http_complete(config: HttpProviderConfig, system: str, user: str, client: httpx.Client | None = None) -> str:
    body = {
        "model": config.model,
        "temperature": config.temperature,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    }
    url = config.base_url.rstrip("/") + "/chat/completions"
    owned = client is None
    if owned:
        headers = {"Authorization": f"Bearer {config.api_key}"} if config.api_key else {}
        client = httpx.Client(timeout=config.timeout, headers=headers)
    try:
        resp = client.post(url, json=body)
    except httpx.HTTPError as exc:
        raise ProviderError(f"transport error: {exc}") from exc
    finally:
        if owned:
            client.close()
    if not 200 <= resp.status_code < 300:
        raise ProviderHTTPError(resp.status_code, resp.text)
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"malformed response body: {resp.text[:500]}") from exc
    if not isinstance(content, str):
        raise MalformedResponse(f"message content is not text: {content!r}")
    return content
