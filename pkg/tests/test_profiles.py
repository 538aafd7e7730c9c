import json

import pytest

from drawsim.errors import InvariantViolation
from drawsim.profiles import (
    LEVEL_DESCRIPTORS,
    CapabilityProfile,
    PerformanceLevel,
    build_profile,
    build_profile_ladder,
)
from drawsim.providers.offline import OfflineGenerationProvider
from drawsim.standards import decompose


class TestLevels:
    def test_exactly_four_levels_with_fixed_descriptors(self):
        assert [int(level) for level in PerformanceLevel] == [1, 2, 3, 4]
        assert LEVEL_DESCRIPTORS[PerformanceLevel.EMERGENT].startswith(
            "Minimal conceptual integration"
        )
        assert "meets the standard" in LEVEL_DESCRIPTORS[PerformanceLevel.PROFICIENT]


class TestBuildProfile:
    def test_plant_advanced_partition(self, providers, plant_topic):
        profile = build_profile(plant_topic, PerformanceLevel.ADVANCED, providers.generation)
        assert len(profile.can_do) == 6
        assert len(profile.cannot_yet_do) == 2
        texts = {
            eid: e.text for eid, e in zip(plant_topic.evidence_ids(), plant_topic.evidence)
        }
        cannot_text = " ".join(texts[i].lower() for i in profile.cannot_yet_do)
        assert "label" in cannot_text  # omitted-labels gap
        assert "predictions" in cannot_text  # inconsistent-predictions gap

    def test_water_developing_contents(self, providers, water_topic):
        profile = build_profile(water_topic, PerformanceLevel.DEVELOPING, providers.generation)
        assert "ev2" in profile.can_do  # evaporation arrows
        assert "ev5" in profile.cannot_yet_do  # clouds-to-precipitation link
        assert "ev3" in profile.cannot_yet_do

    def test_partition_covers_every_id(self, providers, generic_topic):
        for level in PerformanceLevel:
            profile = build_profile(generic_topic, level, providers.generation)
            assert len(profile.can_do) + len(profile.cannot_yet_do) == len(
                generic_topic.evidence
            )
            assert not set(profile.can_do) & set(profile.cannot_yet_do)

    def test_gloss_only_references_known_ids(self, providers, plant_topic):
        profile = build_profile(plant_topic, PerformanceLevel.ADVANCED, providers.generation)
        known = set(profile.can_do) | set(profile.cannot_yet_do)
        assert set(profile.gloss) <= known

    def test_partition_violation_repaired(self, plant_topic):
        good = OfflineGenerationProvider()

        class BadThenGood:
            provider_id = "stub-partition"

            def generate(self, req):
                if req.template_id == "profile" and "validation_error" not in req.variables:
                    return {"can_do": ["s1"], "cannot_yet_do": ["s2"], "gloss": {}}
                return good.generate(req)

        profile = build_profile(plant_topic, PerformanceLevel.DEVELOPING, BadThenGood())
        profile.validate(plant_topic)

    def test_partition_violation_terminal(self, plant_topic):
        class AlwaysBad:
            provider_id = "stub-bad"

            def generate(self, req):
                return {"can_do": ["s1"], "cannot_yet_do": ["s2"], "gloss": {}}

        with pytest.raises(InvariantViolation, match="partition"):
            build_profile(plant_topic, PerformanceLevel.DEVELOPING, AlwaysBad())


class TestLadder:
    def test_subset_chain_by_direct_comparison(self, providers, plant_topic, water_topic):
        for topic in (plant_topic, water_topic):
            ladder = build_profile_ladder(topic, providers.generation)
            sets = [set(ladder[level].can_do) for level in PerformanceLevel]
            assert sets[0] <= sets[1] <= sets[2] <= sets[3]

    def test_generic_eight_id_sizes(self, providers, bundled_pes):
        # 2-PS1-4 decomposes to 8 generic statements at seed 0; the default
        # progression over 8 ids is 2/4/6/7.
        topic = decompose(bundled_pes["2-PS1-4"], providers.generation)
        assert len(topic.evidence) == 8
        ladder = build_profile_ladder(topic, providers.generation)
        sizes = [len(ladder[level].can_do) for level in PerformanceLevel]
        assert sizes == [2, 4, 6, 7]
        sets = [set(ladder[level].can_do) for level in PerformanceLevel]
        assert sets[0] <= sets[1] <= sets[2] <= sets[3]

    def test_same_seed_identical(self, providers, water_topic):
        a = build_profile_ladder(water_topic, providers.generation, seed=5)
        b = build_profile_ladder(water_topic, providers.generation, seed=5)
        assert {k: v.to_dict() for k, v in a.items()} == {k: v.to_dict() for k, v in b.items()}

    def test_broken_chain_rejected_after_repair(self, generic_topic):
        good = OfflineGenerationProvider()

        class BrokenTop:
            provider_id = "stub-broken-ladder"

            def generate(self, req):
                resp = good.generate(req)
                if req.template_id == "profile" and int(req.variables["level"]) == 4:
                    # drop an id that level 3 has, breaking the chain
                    lower = good.generate(
                        req.with_variables(level=3)
                    )
                    keep = [i for i in resp["can_do"] if i != lower["can_do"][0]]
                    drop = [i for i in resp["cannot_yet_do"]] + [lower["can_do"][0]]
                    return {"can_do": keep, "cannot_yet_do": drop, "gloss": {}}
                return resp

        with pytest.raises(InvariantViolation, match="monotonicity"):
            build_profile_ladder(generic_topic, BrokenTop())


class TestProfileInvariants:
    def test_roundtrip_identity(self, providers, plant_topic):
        profile = build_profile(plant_topic, PerformanceLevel.PROFICIENT, providers.generation)
        again = CapabilityProfile.from_dict(json.loads(json.dumps(profile.to_dict())))
        assert again.to_dict() == profile.to_dict()

    def test_overlap_rejected(self):
        p = CapabilityProfile("t", PerformanceLevel.EMERGENT, ["a", "b"], ["b"], {})
        with pytest.raises(InvariantViolation, match="both"):
            p.validate()

    def test_empty_side_rejected(self):
        p = CapabilityProfile("t", PerformanceLevel.ADVANCED, ["a", "b"], [], {})
        with pytest.raises(InvariantViolation, match="non-empty"):
            p.validate()

    def test_unknown_gloss_rejected(self):
        p = CapabilityProfile("t", PerformanceLevel.EMERGENT, ["a"], ["b"], {"zz": "?"})
        with pytest.raises(InvariantViolation, match="gloss"):
            p.validate()

    def test_wrong_topic_rejected(self, providers, plant_topic, water_topic):
        profile = build_profile(plant_topic, PerformanceLevel.EMERGENT, providers.generation)
        with pytest.raises(InvariantViolation, match="does not belong"):
            profile.validate(water_topic)
