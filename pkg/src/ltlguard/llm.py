"""Text-completion backends: HTTP chat client, mock, and record/replay.

Every backend exposes complete(prompt) -> str. The HTTP client keeps all
wire-format details out of the rest of the package; tests run on the mock
or on recorded fixtures so nothing here ever needs a network.

The auth token is read from an environment variable at request time and
is never stored on any object, never written to fixtures and never put
into log or error text.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import requests

from .errors import BackendError, BackendTimeoutError, FixtureMissError

_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class CompletionRequest:
    """Sampling parameters; temperature 0 keeps agent runs reproducible."""

    temperature: float = 0.0
    max_tokens: int = 512
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model: str
    auth_env: str = "LTLGUARD_API_TOKEN"
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5
    max_in_flight: int = 4

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


def prompt_key(prompt: str) -> str:
    """Stable fixture key for a prompt."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class HttpChatBackend:
    """Chat-completion client over the common messages-array convention.

    The transport argument exists for tests: anything with a post()
    returning an object with .status_code, .json(), .text works.
    """

    def __init__(
        self,
        config: BackendConfig,
        request: CompletionRequest = CompletionRequest(),
        transport=None,
    ):
        self.config = config
        self.request = request
        self._transport = transport if transport is not None else requests.Session()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def _headers(self) -> dict[str, str]:
        token = os.environ.get(self.config.auth_env)
        if not token:
            raise BackendError(
                f"auth token environment variable {self.config.auth_env} is not set"
            )
        return {"Authorization": f"Bearer {token}"}

    def _payload(self, prompt: str) -> dict:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.request.temperature,
            "max_tokens": self.request.max_tokens,
        }
        if self.request.stop:
            payload["stop"] = list(self.request.stop)
        return payload

    def complete(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        attempts = self.config.retries + 1
        last_error: BackendError | None = None
        with self._slots:
            for attempt in range(attempts):
                if attempt:
                    time.sleep(self.config.backoff * (2 ** (attempt - 1)))
                try:
                    response = self._transport.post(
                        self.config.endpoint,
                        json=self._payload(prompt),
                        headers=self._headers(),
                        timeout=self.config.timeout,
                    )
                except requests.Timeout:
                    last_error = BackendTimeoutError(
                        f"no answer within {self.config.timeout}s"
                    )
                    continue
                except requests.ConnectionError as exc:
                    last_error = BackendError(f"transport failure: {exc}")
                    continue
                if response.status_code in _RETRYABLE_STATUS:
                    last_error = BackendError(
                        f"transient status {response.status_code}",
                        status=response.status_code,
                    )
                    continue
                if response.status_code != 200:
                    raise BackendError(
                        f"status {response.status_code}: {response.text[:200]}",
                        status=response.status_code,
                    )
                return self._extract(response)
        raise last_error

    @staticmethod
    def _extract(response) -> str:
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc


class MockBackend:
    """Deterministic fixture-backed backend for tests.

    Fixtures map prompt_key(prompt) to the reply. Strict mode raises on
    unknown prompts, which is how accidental prompt drift shows up in CI.
    """

    def __init__(self, fixtures: Mapping[str, str], strict: bool = True):
        self.fixtures = dict(fixtures)
        self.strict = strict
        self.calls: list[str] = []

    @staticmethod
    def for_prompts(pairs: Mapping[str, str], strict: bool = True) -> "MockBackend":
        """Build from {prompt text: reply}, hashing the keys."""
        return MockBackend(
            {prompt_key(p): reply for p, reply in pairs.items()}, strict=strict
        )

    def complete(self, prompt: str) -> str:
        key = prompt_key(prompt)
        self.calls.append(key)
        if key in self.fixtures:
            return self.fixtures[key]
        if self.strict:
            raise FixtureMissError(f"no fixture for prompt hash {key[:12]}")
        return ""


class RecordReplayBackend:
    """Persist (prompt, reply) pairs, one JSON file per prompt hash.

    record mode forwards to the wrapped backend and saves its replies;
    replay mode serves saved replies only and raises FixtureMissError on
    anything unrecorded, so CI provably makes no live calls.
    """

    def __init__(self, directory: str | Path, inner=None, mode: str = "replay"):
        if mode not in ("record", "replay"):
            raise ValueError(f"mode must be record or replay, got {mode!r}")
        if mode == "record" and inner is None:
            raise ValueError("record mode needs a backend to record")
        self.directory = Path(directory)
        self.inner = inner
        self.mode = mode
        if mode == "record":
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def complete(self, prompt: str) -> str:
        key = prompt_key(prompt)
        path = self._path(key)
        if path.exists():
            return json.loads(path.read_text())["reply"]
        if self.mode == "replay":
            raise FixtureMissError(f"no recording for prompt hash {key[:12]}")
        reply = self.inner.complete(prompt)
        path.write_text(json.dumps({"prompt": prompt, "reply": reply}, indent=1))
        return reply
