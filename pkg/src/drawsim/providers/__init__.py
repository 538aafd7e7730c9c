"""Provider layer: uniform generation/image/embedding interfaces.

Offline deterministic implementations back all tests; remote HTTP
implementations plug in through the same interfaces via configuration.
"""

from drawsim.providers.base import (
    CallLog,
    ContentPolicyError,
    EmbeddingProvider,
    GenerationProvider,
    ImageProvider,
    ProviderConfig,
    ProviderError,
    RateLimitError,
    RetryableProviderError,
    SchemaViolationError,
    StructuredRequest,
    TokenBucket,
    call_with_retry,
    prompt_sha256,
)
from drawsim.providers.offline import (
    OfflineEmbeddingProvider,
    OfflineGenerationProvider,
    OfflineImageProvider,
)
from drawsim.providers.schemas import generate_structured, validate_request

__all__ = [
    "CallLog",
    "ContentPolicyError",
    "EmbeddingProvider",
    "GenerationProvider",
    "ImageProvider",
    "OfflineEmbeddingProvider",
    "OfflineGenerationProvider",
    "OfflineImageProvider",
    "ProviderConfig",
    "ProviderError",
    "RateLimitError",
    "RetryableProviderError",
    "SchemaViolationError",
    "StructuredRequest",
    "TokenBucket",
    "call_with_retry",
    "generate_structured",
    "prompt_sha256",
    "validate_request",
]
