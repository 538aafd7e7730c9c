import json

import pytest

from drawsim.errors import CoverageError
from drawsim.profiles import PerformanceLevel, build_profile
from drawsim.providers import RetryableProviderError
from drawsim.providers.offline import OfflineGenerationProvider, OfflineImageProvider
from drawsim.synthesis import (
    ImagePromptSpec,
    UnifiedOutput,
    compose_prompt_text,
    generate_baseline,
    generate_unified,
    grade_style_marker,
    narrative_is_first_person,
    narrative_references_gap,
    render_drawing,
    verify_alignment,
)


@pytest.fixture(scope="module")
def plant_advanced(providers, plant_topic):
    profile = build_profile(plant_topic, PerformanceLevel.ADVANCED, providers.generation)
    out = generate_unified(plant_topic, 3, profile, providers.generation)
    return profile, out


@pytest.fixture(scope="module")
def water_developing(providers, water_topic):
    profile = build_profile(water_topic, PerformanceLevel.DEVELOPING, providers.generation)
    out = generate_unified(water_topic, 5, profile, providers.generation)
    return profile, out


class TestGenerateUnified:
    def test_plant_advanced_fixture(self, plant_advanced):
        _, out = plant_advanced
        assert "I might forget to label some smaller details" in out.narrative.text
        assert grade_style_marker(3) == "Draw like a Grade 3 student"
        assert grade_style_marker(3) in out.prompt.composed
        assert out.prompt.composed.rstrip().endswith("hand-drawn crayon style.")

    def test_water_developing_negatives(self, water_developing):
        _, out = water_developing
        assert any(
            "do not connect the cycle back" in n.lower() for n in out.prompt.negative
        )

    def test_deterministic_for_seed(self, providers, water_topic):
        profile = build_profile(water_topic, PerformanceLevel.EMERGENT, providers.generation)
        a = generate_unified(water_topic, 5, profile, providers.generation, seed=9)
        b = generate_unified(water_topic, 5, profile, providers.generation, seed=9)
        assert a.to_dict() == b.to_dict()

    def test_every_cannot_gets_negative(self, providers, generic_topic):
        for level in PerformanceLevel:
            profile = build_profile(generic_topic, level, providers.generation)
            out = generate_unified(
                generic_topic, generic_topic.pe.grade, profile, providers.generation
            )
            covered = out.prompt.ids_with("negative")
            assert set(profile.cannot_yet_do) <= covered

    def test_grade_band_mismatch_rejected(self, providers, plant_topic):
        profile = build_profile(plant_topic, PerformanceLevel.EMERGENT, providers.generation)
        with pytest.raises(ValueError, match="band"):
            generate_unified(plant_topic, 9, profile, providers.generation)

    def test_marker_appended_when_missing(self, providers, generic_topic):
        base = OfflineGenerationProvider()

        class NoStyle:
            provider_id = "stub-nostyle"

            def generate(self, req):
                resp = base.generate(req)
                if req.template_id == "unified":
                    resp["stylistic"] = ["Pencil sketch style only"]
                return resp

        profile = build_profile(generic_topic, PerformanceLevel.DEVELOPING, base)
        out = generate_unified(generic_topic, 8, profile, NoStyle())
        assert grade_style_marker(8) in out.prompt.composed

    def test_uncoverable_gap_raises_with_ids(self, providers, water_topic):
        base = OfflineGenerationProvider()

        class DropsNegative:
            provider_id = "stub-dropneg"

            def generate(self, req):
                resp = base.generate(req)
                if req.template_id == "unified":
                    resp["negatives"] = resp["negatives"][1:]
                return resp

        profile = build_profile(water_topic, PerformanceLevel.DEVELOPING, base)
        with pytest.raises(CoverageError) as exc:
            generate_unified(water_topic, 5, profile, DropsNegative())
        assert exc.value.uncovered_cannot

    def test_coverage_repaired_on_reask(self, providers, water_topic):
        base = OfflineGenerationProvider()

        class DropsOnce:
            provider_id = "stub-droponce"

            def generate(self, req):
                resp = base.generate(req)
                if req.template_id == "unified" and "validation_error" not in req.variables:
                    resp["negatives"] = resp["negatives"][1:]
                return resp

        profile = build_profile(water_topic, PerformanceLevel.DEVELOPING, base)
        out = generate_unified(water_topic, 5, profile, DropsOnce())
        assert verify_alignment(out, profile).passed


class TestComposePrompt:
    def test_order_and_verbatim_inclusion(self):
        spec = ImagePromptSpec(
            positive=["Draw a sun"],
            negative=["Do NOT include clouds"],
            stylistic=["Hand-drawn crayon style"],
        )
        text = compose_prompt_text(spec)
        assert text == "Draw a sun. Do NOT include clouds. Hand-drawn crayon style."
        i_pos = text.index("Draw a sun")
        i_neg = text.index("Do NOT include clouds")
        i_sty = text.index("Hand-drawn crayon style")
        assert i_pos < i_neg < i_sty

    def test_appendix_spec_contains_crayon_style(self, plant_advanced):
        _, out = plant_advanced
        assert "hand-drawn crayon style" in compose_prompt_text(out.prompt)

    def test_empty_positives_guarded(self):
        spec = ImagePromptSpec(positive=[], negative=["Do NOT x"], stylistic=["style"])
        with pytest.raises(ValueError, match="positive"):
            compose_prompt_text(spec)

    def test_idempotent_and_order_stable(self, water_developing):
        _, out = water_developing
        assert compose_prompt_text(out.prompt) == compose_prompt_text(out.prompt)
        assert compose_prompt_text(out.prompt) == out.prompt.composed

    def test_all_constraints_verbatim(self, water_developing):
        _, out = water_developing
        for constraint in (
            *out.prompt.positive,
            *out.prompt.negative,
            *out.prompt.stylistic,
        ):
            assert constraint in out.prompt.composed


class TestVerifyAlignment:
    def test_fully_covered_passes(self, water_developing):
        profile, out = water_developing
        report = verify_alignment(out, profile)
        assert report.passed
        assert report.uncovered_can_do == []
        assert report.uncovered_cannot_yet_do == []

    def test_missing_negative_listed(self, water_developing):
        profile, out = water_developing
        broken = UnifiedOutput.from_dict(json.loads(json.dumps(out.to_dict())))
        victim = profile.cannot_yet_do[0]
        broken.prompt.constraint_index[victim]["negative"] = []
        report = verify_alignment(broken, profile)
        assert not report.passed
        assert victim in report.uncovered_cannot_yet_do

    def test_contradiction_detected(self, water_developing):
        profile, out = water_developing
        broken = UnifiedOutput.from_dict(json.loads(json.dumps(out.to_dict())))
        victim = profile.cannot_yet_do[0]
        broken.prompt.constraint_index[victim]["positive"] = [0]
        report = verify_alignment(broken, profile)
        assert victim in report.contradictions

    def test_advanced_fixture_covers_both_gaps(self, plant_advanced):
        profile, out = plant_advanced
        report = verify_alignment(out, profile)
        assert report.passed
        assert set(profile.cannot_yet_do) <= out.prompt.ids_with("negative")

    def test_profile_mismatch_rejected(self, providers, water_topic, plant_advanced):
        profile, _ = plant_advanced
        wrong = build_profile(water_topic, PerformanceLevel.DEVELOPING, providers.generation)
        out = generate_unified(water_topic, 5, wrong, providers.generation)
        with pytest.raises(ValueError, match="references profile"):
            verify_alignment(out, profile)

    def test_exclusion_satisfies_can_coverage(self, water_developing):
        profile, out = water_developing
        relaxed = UnifiedOutput.from_dict(json.loads(json.dumps(out.to_dict())))
        victim = profile.can_do[0]
        relaxed.prompt.constraint_index[victim]["positive"] = []
        report = verify_alignment(relaxed, profile)
        assert victim in report.uncovered_can_do
        relaxed.prompt.exclusions[victim] = "kept implicit in the background scene"
        report = verify_alignment(relaxed, profile)
        assert victim not in report.uncovered_can_do


class TestNarrativeHeuristics:
    def test_first_person(self):
        assert narrative_is_first_person("I'm drawing the water cycle.")
        assert not narrative_is_first_person("The student draws the water cycle.")

    def test_gap_reference_requires_hedge_and_content(self, water_developing):
        _, out = water_developing
        assert narrative_references_gap(out.narrative.text, out.prompt)
        assert not narrative_references_gap("I drew everything perfectly.", out.prompt)


class TestRenderDrawing:
    def test_content_addressed_roundtrip(self, tmp_path):
        img = OfflineImageProvider()
        prompt = "Draw a sun. Draw a tree. Marker and pencil style. Draw like a Grade 4 student."
        ref = render_drawing(prompt, img, 7, tmp_path)
        stored = (tmp_path / ref.path).read_bytes()
        assert stored == img.generate_image(prompt, 7)
        assert ref.sha256 in ref.path
        assert ref.width == 512 and ref.height == 512
        assert ref.provider_id == "offline-img-v1"

    def test_retry_bounded(self, tmp_path):
        class Down:
            provider_id = "stub-down"
            calls = 0

            def generate_image(self, prompt, seed):
                self.calls += 1
                raise RetryableProviderError("unreachable")

        stub = Down()
        with pytest.raises(RetryableProviderError):
            render_drawing("Draw a sun.", stub, 0, tmp_path, max_retries=2, sleep=lambda s: None)
        assert stub.calls == 3

    def test_empty_prompt_guarded(self, tmp_path):
        with pytest.raises(ValueError):
            render_drawing("  ", OfflineImageProvider(), 0, tmp_path)


class TestBaselines:
    def test_independent_narrative_loses_gap_hedging(self, providers, water_topic):
        profile = build_profile(water_topic, PerformanceLevel.DEVELOPING, providers.generation)
        unified = generate_unified(water_topic, 5, profile, providers.generation)
        assert narrative_references_gap(unified.narrative.text, unified.prompt)

        independent = generate_baseline(
            water_topic, 5, profile, providers.generation, strategy="independent"
        )
        assert not narrative_references_gap(independent.narrative.text, independent.prompt)

    def test_sequential_drops_negative_coverage(self, providers, water_topic):
        profile = build_profile(water_topic, PerformanceLevel.DEVELOPING, providers.generation)
        sequential = generate_baseline(
            water_topic, 5, profile, providers.generation, strategy="sequential"
        )
        report = verify_alignment(sequential, profile)
        assert not report.passed
        assert set(report.uncovered_cannot_yet_do) == set(profile.cannot_yet_do)

    def test_unknown_strategy_rejected(self, providers, water_topic):
        profile = build_profile(water_topic, PerformanceLevel.DEVELOPING, providers.generation)
        with pytest.raises(ValueError):
            generate_baseline(water_topic, 5, profile, providers.generation, strategy="magic")
