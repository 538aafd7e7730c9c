"""HTTP-backed providers for hosted generation, image, and embedding services.

The wire format is a plain JSON POST; credentials come from the environment
variable named by ``credential_ref`` and are sent as a bearer header, never
logged or persisted. All clients share the retry/backoff and token-bucket
rate limiting from ``drawsim.providers.base``.
"""

from __future__ import annotations

import base64
import os

import httpx

from drawsim.providers.base import (
    ContentPolicyError,
    ProviderConfig,
    ProviderError,
    RateLimitError,
    RetryableProviderError,
    StructuredRequest,
    TokenBucket,
)


class _RemoteClient:
    def __init__(self, cfg: ProviderConfig, *, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        self._bucket = TokenBucket(cfg.rate_limit)
        self._client = httpx.Client(timeout=cfg.timeout, transport=transport)

    @property
    def provider_id(self) -> str:
        return f"remote-{self.cfg.kind}:{self.cfg.endpoint}"

    def _headers(self) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if self.cfg.credential_ref:
            token = os.environ.get(self.cfg.credential_ref, "")
            if token:
                headers["authorization"] = f"Bearer {token}"
        return headers

    def _post(self, payload: dict) -> dict:
        self._bucket.acquire()
        try:
            resp = self._client.post(self.cfg.endpoint, json=payload, headers=self._headers())
        except (httpx.TimeoutException, httpx.TransportError) as err:
            raise RetryableProviderError(str(err)) from err
        if resp.status_code == 429:
            raise RateLimitError("rate limited by provider")
        if resp.status_code >= 500:
            raise RetryableProviderError(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            body = resp.json() if "json" in resp.headers.get("content-type", "") else {}
            if body.get("error") == "content_policy":
                raise ContentPolicyError(body.get("message", "content policy rejection"))
            raise ProviderError(f"provider error {resp.status_code}: {resp.text[:200]}")
        return resp.json()


class RemoteGenerationProvider(_RemoteClient):
    def generate(self, req: StructuredRequest) -> dict:
        if self.cfg.kind != "generation":
            raise ValueError("config kind must be 'generation'")
        return self._post(
            {
                "template_id": req.template_id,
                "variables": req.variables,
                "expected_schema": req.expected_schema,
                "seed": req.seed,
            }
        )


class RemoteImageProvider(_RemoteClient):
    def generate_image(self, prompt: str, seed: int) -> bytes:
        if self.cfg.kind != "image":
            raise ValueError("config kind must be 'image'")
        if not prompt.strip():
            raise ValueError("prompt must be non-empty")
        body = self._post({"prompt": prompt, "seed": seed})
        return base64.b64decode(body["image_b64"])


class RemoteEmbeddingProvider(_RemoteClient):
    def __init__(self, cfg: ProviderConfig, *, dim: int = 512, transport=None):
        super().__init__(cfg, transport=transport)
        self.dim = dim

    def embed(self, content: str | bytes) -> list[float]:
        if self.cfg.kind != "embedding":
            raise ValueError("config kind must be 'embedding'")
        if isinstance(content, bytes):
            payload = {"content_b64": base64.b64encode(content).decode("ascii"), "kind": "image"}
        else:
            payload = {"content": content, "kind": "text"}
        vector = self._post(payload)["vector"]
        if len(vector) != self.dim:
            raise ProviderError(f"expected dimension {self.dim}, got {len(vector)}")
        return [float(v) for v in vector]
