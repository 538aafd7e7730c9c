"""Provider interfaces: configuration, retry/backoff, rate limiting, call logs.

Three provider kinds back the pipeline: generation (structured text),
image (prompt -> raster bytes), and embedding (text or image bytes ->
unit vector). Remote providers talk HTTP; the offline suite (see
``drawsim.providers.offline``) implements the same interfaces as pure
functions of (request, seed) so every test runs without network access.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

from drawsim.errors import DrawSimError


class ProviderError(DrawSimError):
    """Base class for provider failures."""


class RetryableProviderError(ProviderError):
    """Transient failure (timeout, connection reset); safe to retry."""


class RateLimitError(RetryableProviderError):
    """Provider asked us to back off."""


class SchemaViolationError(ProviderError):
    """Structured response failed schema validation after the repair budget."""

    def __init__(self, message: str, *, errors=()):
        super().__init__(message)
        self.errors = list(errors)


class ContentPolicyError(ProviderError):
    """Image provider rejected the prompt; the provider message is surfaced."""


VALID_KINDS = ("generation", "image", "embedding")


@dataclass
class ProviderConfig:
    """Connection settings for one remote provider.

    ``credential_ref`` names an environment variable; the credential value
    itself is never stored in configs, logs, or artifact metadata.
    """

    kind: str
    endpoint: str = ""
    credential_ref: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    rate_limit: int = 60  # requests per minute

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown provider kind: {self.kind!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass
class StructuredRequest:
    """One structured-generation request.

    ``template_id`` selects a prompt template, ``variables`` bind its
    placeholders, ``expected_schema`` names the response schema the result
    must validate against, and ``seed`` pins deterministic providers.
    """

    template_id: str
    variables: dict[str, Any] = field(default_factory=dict)
    expected_schema: str = ""
    seed: int = 0

    def with_variables(self, **extra: Any) -> "StructuredRequest":
        merged = dict(self.variables)
        merged.update(extra)
        return StructuredRequest(
            template_id=self.template_id,
            variables=merged,
            expected_schema=self.expected_schema,
            seed=self.seed,
        )


class GenerationProvider(Protocol):
    provider_id: str

    def generate(self, req: StructuredRequest) -> dict: ...


class ImageProvider(Protocol):
    provider_id: str

    def generate_image(self, prompt: str, seed: int) -> bytes: ...


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed(self, content: "str | bytes") -> list[float]: ...


def prompt_sha256(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class CallLog:
    """Append-only line-delimited log of provider calls.

    Records template ids, prompt hashes, attempt counts, and outcomes.
    Credentials and raw prompts are never written.
    """

    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[dict] = []
        self._lock = threading.Lock()

    def record(self, **fields: Any) -> None:
        entry = {"ts": time.time(), **fields}
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry) + "\n")

    def attempts(self, **match: Any) -> int:
        with self._lock:
            return sum(
                1
                for e in self.entries
                if all(e.get(k) == v for k, v in match.items())
            )


class TokenBucket:
    """Client-side rate limiter: ``rate_per_minute`` tokens, burst = rate."""

    def __init__(self, rate_per_minute: int, *, clock=time.monotonic, sleep=time.sleep):
        self.rate = max(1, rate_per_minute)
        self.capacity = float(self.rate)
        self.tokens = float(self.rate)
        self.updated = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(
                    self.capacity, self.tokens + (now - self.updated) * self.rate / 60.0
                )
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) * 60.0 / self.rate
            self._sleep(wait)


def call_with_retry(
    fn: Callable[[], Any],
    *,
    max_retries: int,
    log: CallLog | None = None,
    sleep=time.sleep,
    backoff_base: float = 0.5,
    tag: str = "",
):
    """Run ``fn`` retrying transient failures with exponential backoff.

    Total attempts never exceed ``1 + max_retries``; each attempt is
    observable in the call log.
    """
    last_err: Exception | None = None
    for attempt in range(1 + max_retries):
        try:
            result = fn()
            if log is not None:
                log.record(tag=tag, attempt=attempt + 1, outcome="ok")
            return result
        except RetryableProviderError as err:
            last_err = err
            if log is not None:
                log.record(tag=tag, attempt=attempt + 1, outcome="retryable", error=str(err))
            if attempt < max_retries:
                sleep(backoff_base * (2**attempt))
    raise RetryableProviderError(
        f"{tag or 'provider call'} failed after {1 + max_retries} attempts: {last_err}"
    )
