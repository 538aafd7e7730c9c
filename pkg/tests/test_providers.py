import json
import math

import httpx
import pytest

from drawsim.metrics import edge_density
from drawsim.providers import (
    CallLog,
    ProviderConfig,
    RetryableProviderError,
    SchemaViolationError,
    StructuredRequest,
    TokenBucket,
    generate_structured,
    validate_request,
)
from drawsim.providers.base import ContentPolicyError
from drawsim.providers.offline import (
    OfflineEmbeddingProvider,
    OfflineGenerationProvider,
    OfflineImageProvider,
    split_prompt_sentences,
)
from drawsim.providers.remote import RemoteGenerationProvider, RemoteImageProvider


def decompose_request(code="3-LS1-1", seed=0):
    return StructuredRequest(
        template_id="decompose",
        variables={
            "code": code,
            "statement": "Develop models to describe life cycles.",
            "seps": ["Developing and Using Models"],
            "dcis": ["LS1.B"],
            "cccs": ["Patterns"],
            "grade": 3,
        },
        expected_schema="decompose",
        seed=seed,
    )


class TestConfigAndRequests:
    def test_config_invariants(self):
        with pytest.raises(ValueError):
            ProviderConfig(kind="generation", timeout=0)
        with pytest.raises(ValueError):
            ProviderConfig(kind="generation", max_retries=-1)
        with pytest.raises(ValueError):
            ProviderConfig(kind="other")

    def test_unbound_placeholder_rejected(self):
        req = StructuredRequest(template_id="decompose", variables={}, expected_schema="decompose")
        with pytest.raises(ValueError, match="unbound"):
            validate_request(req)

    def test_unknown_schema_rejected(self):
        req = decompose_request()
        req.expected_schema = "nope"
        with pytest.raises(ValueError, match="schema"):
            validate_request(req)


class TestGenerateStructured:
    def test_offline_byte_identical(self):
        gen = OfflineGenerationProvider()
        a = generate_structured(decompose_request(seed=3), gen)
        b = generate_structured(decompose_request(seed=3), gen)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_fixture_matches_curated_evidence(self):
        gen = OfflineGenerationProvider()
        resp = generate_structured(decompose_request(), gen)
        texts = [s["text"] for s in resp["statements"]]
        assert any("draw and label the main stages" in t for t in texts)
        assert any("cyclic nature of life cycles" in t for t in texts)

    def test_missing_field_one_repair_then_terminal(self):
        class Malformed:
            provider_id = "stub-malformed"
            calls = 0

            def generate(self, req):
                self.calls += 1
                return {"wrong": []}

        stub = Malformed()
        log = CallLog()
        with pytest.raises(SchemaViolationError):
            generate_structured(decompose_request(), stub, max_repairs=1, log=log)
        assert stub.calls == 2  # initial + one repair re-ask
        assert log.attempts(tag="gen:decompose", outcome="schema-violation") == 2

    def test_repair_reask_carries_validation_error(self):
        class FixesItself:
            provider_id = "stub-fixer"

            def generate(self, req):
                if "validation_error" in req.variables:
                    return {"statements": [{"id": "e1", "text": "The student can draw it."}]}
                return {"statements": [{"id": "e1", "text": ""}]}

        resp = generate_structured(decompose_request(), FixesItself())
        assert resp["statements"][0]["text"].startswith("The student")

    def test_retry_with_backoff_bounded(self):
        class Flaky:
            provider_id = "stub-flaky"

            def __init__(self, failures):
                self.failures = failures
                self.calls = 0

            def generate(self, req):
                self.calls += 1
                if self.calls <= self.failures:
                    raise RetryableProviderError("timeout")
                return OfflineGenerationProvider().generate(req)

        log = CallLog()
        sleeps = []
        resp = generate_structured(
            decompose_request(),
            Flaky(2),
            max_retries=2,
            log=log,
            sleep=sleeps.append,
        )
        assert resp["statements"]
        assert log.attempts(tag="gen:decompose", outcome="retryable") == 2
        assert sleeps == [0.5, 1.0]  # exponential backoff

        with pytest.raises(RetryableProviderError):
            generate_structured(decompose_request(), Flaky(5), max_retries=1, sleep=lambda s: None)


class TestOfflineImage:
    def test_deterministic_for_seed(self):
        img = OfflineImageProvider()
        prompt = "Draw a sun. Draw a tree. Marker and pencil style. Draw like a Grade 4 student."
        assert img.generate_image(prompt, 7) == img.generate_image(prompt, 7)
        assert img.generate_image(prompt, 7) != img.generate_image(prompt, 8)

    def test_complexity_tracks_positive_count(self):
        img = OfflineImageProvider()
        style = "Marker and pencil style. Draw like a Grade 5 student."
        p3 = "Draw a sun. Draw a tree. Draw a river. " + style
        p7 = (
            "Draw a sun. Draw a tree. Draw a river. Draw a cloud. "
            "Draw a mountain. Draw a fish. Draw a bird. " + style
        )
        d3 = edge_density(img.generate_image(p3, 1)).edge_density
        d7 = edge_density(img.generate_image(p7, 1)).edge_density
        assert d7 > d3

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            OfflineImageProvider().generate_image("   ", 0)

    def test_sentence_classification(self):
        pos, neg, sty = split_prompt_sentences(
            "Draw a sun. Do NOT include clouds. Leave out the rain. "
            "Hand-drawn crayon style. Draw like a Grade 2 student."
        )
        assert len(pos) == 1
        assert len(neg) == 2
        assert len(sty) == 2


class TestOfflineEmbedding:
    def test_identical_inputs_identical_vectors(self):
        emb = OfflineEmbeddingProvider()
        assert emb.embed("the water cycle") == emb.embed("the water cycle")

    def test_unit_norm(self):
        emb = OfflineEmbeddingProvider()
        for content in ("a drawing of the water cycle", b"\x89PNG fake bytes" * 40):
            vec = emb.embed(content)
            assert len(vec) == 256
            assert abs(math.sqrt(sum(v * v for v in vec)) - 1.0) <= 1e-6

    def test_disjoint_token_sets_below_floor(self):
        emb = OfflineEmbeddingProvider()
        a = emb.embed("sun arrows evaporation lake water rising heat")
        b = emb.embed("mitochondria nucleus membrane organelle cytoplasm ribosome")
        cos = sum(x * y for x, y in zip(a, b))
        assert abs(cos) < 0.15

    def test_configurable_dimension(self):
        assert len(OfflineEmbeddingProvider(dim=64).embed("hello world")) == 64

    def test_empty_content_rejected(self):
        with pytest.raises(ValueError):
            OfflineEmbeddingProvider().embed("")


class TestTokenBucket:
    def test_blocks_when_exhausted(self):
        now = [0.0]
        sleeps = []

        def clock():
            return now[0]

        def sleep(s):
            sleeps.append(s)
            now[0] += s

        bucket = TokenBucket(60, clock=clock, sleep=sleep)  # 1 token/second
        for _ in range(60):
            bucket.acquire()
        bucket.acquire()  # 61st must wait ~1s
        assert sleeps and abs(sum(sleeps) - 1.0) < 1e-6


class TestRemoteProviders:
    def test_generation_round_trip(self):
        def handler(request):
            payload = json.loads(request.content)
            assert payload["template_id"] == "decompose"
            return httpx.Response(
                200, json={"statements": [{"id": "e1", "text": "The student can draw it."}]}
            )

        cfg = ProviderConfig(kind="generation", endpoint="http://unit.test/gen")
        remote = RemoteGenerationProvider(cfg, transport=httpx.MockTransport(handler))
        resp = generate_structured(decompose_request(), remote)
        assert resp["statements"][0]["id"] == "e1"

    def test_server_error_retryable_and_content_policy_surfaced(self):
        def failing(request):
            return httpx.Response(500)

        cfg = ProviderConfig(kind="image", endpoint="http://unit.test/img", max_retries=0)
        remote = RemoteImageProvider(cfg, transport=httpx.MockTransport(failing))
        with pytest.raises(RetryableProviderError):
            remote.generate_image("a drawing", 0)

        def rejecting(request):
            return httpx.Response(
                400,
                json={"error": "content_policy", "message": "blocked subject"},
                headers={"content-type": "application/json"},
            )

        remote = RemoteImageProvider(
            ProviderConfig(kind="image", endpoint="http://unit.test/img"),
            transport=httpx.MockTransport(rejecting),
        )
        with pytest.raises(ContentPolicyError, match="blocked subject"):
            remote.generate_image("a drawing", 0)

    def test_credentials_come_from_env_not_logs(self, monkeypatch):
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return httpx.Response(200, json={"statements": [{"text": "The student can x."}]})

        monkeypatch.setenv("UNIT_TOKEN", "sekrit")
        cfg = ProviderConfig(
            kind="generation", endpoint="http://unit.test/gen", credential_ref="UNIT_TOKEN"
        )
        remote = RemoteGenerationProvider(cfg, transport=httpx.MockTransport(handler))
        log = CallLog()
        generate_structured(decompose_request(), remote, log=log)
        assert seen["auth"] == "Bearer sekrit"
        assert "sekrit" not in json.dumps(log.entries)
