"""Capability profiles: per-level partitions of a topic's evidence ids.

A profile splits every evidence statement into mastered (can-do) or
not-yet-mastered (cannot-yet-do); both sides stay non-empty at every
level so each artifact remains diagnostically interesting. Profiles built
as a ladder additionally satisfy a subset chain from Emergent to Advanced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from drawsim.errors import InvariantViolation
from drawsim.providers import GenerationProvider, StructuredRequest, generate_structured
from drawsim.standards import TopicSpec


class PerformanceLevel(IntEnum):
    EMERGENT = 1
    DEVELOPING = 2
    PROFICIENT = 3
    ADVANCED = 4

    @property
    def descriptor(self) -> str:
        return LEVEL_DESCRIPTORS[self]


# Canonical rubric wording for the four levels.
LEVEL_DESCRIPTORS: dict[PerformanceLevel, str] = {
    PerformanceLevel.EMERGENT: (
        "Minimal conceptual integration; partial or inaccurate representation; "
        "often lacks labels or clear spatial organization."
    ),
    PerformanceLevel.DEVELOPING: (
        "Basic concept recognition with limited integration; often contains "
        "specific hybrid misconceptions mixing scientific and intuitive ideas."
    ),
    PerformanceLevel.PROFICIENT: (
        "Grade-appropriate reasoning with integrated three-dimensional "
        "understanding; meets the standard."
    ),
    PerformanceLevel.ADVANCED: (
        "Sophisticated reasoning with accurate, complete representations; often "
        "includes details beyond the grade-level requirement."
    ),
}


@dataclass
class CapabilityProfile:
    """Shared conditioning state for all downstream generation."""

    topic_ref: str
    level: PerformanceLevel
    can_do: list[str]
    cannot_yet_do: list[str]
    gloss: dict[str, str] = field(default_factory=dict)

    @property
    def profile_id(self) -> str:
        return f"{self.topic_ref}:L{int(self.level)}"

    def validate(self, topic: TopicSpec | None = None) -> None:
        can, cannot = set(self.can_do), set(self.cannot_yet_do)
        if can & cannot:
            raise InvariantViolation(
                f"{self.profile_id}: ids in both can_do and cannot_yet_do: {sorted(can & cannot)}"
            )
        if not can or not cannot:
            raise InvariantViolation(
                f"{self.profile_id}: can_do and cannot_yet_do must both be non-empty"
            )
        if topic is not None:
            full = set(topic.evidence_ids())
            if self.topic_ref != topic.topic_ref:
                raise InvariantViolation(
                    f"profile {self.profile_id} does not belong to topic {topic.topic_ref}"
                )
            if can | cannot != full:
                missing = sorted(full - (can | cannot))
                extra = sorted((can | cannot) - full)
                raise InvariantViolation(
                    f"{self.profile_id}: not a partition of the evidence set "
                    f"(missing={missing}, unknown={extra})"
                )
        unknown_gloss = set(self.gloss) - (can | cannot)
        if unknown_gloss:
            raise InvariantViolation(
                f"{self.profile_id}: gloss references unknown ids {sorted(unknown_gloss)}"
            )

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "topic_ref": self.topic_ref,
            "level": int(self.level),
            "can_do": list(self.can_do),
            "cannot_yet_do": list(self.cannot_yet_do),
            "gloss": dict(self.gloss),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CapabilityProfile":
        profile = cls(
            topic_ref=data["topic_ref"],
            level=PerformanceLevel(int(data["level"])),
            can_do=list(data["can_do"]),
            cannot_yet_do=list(data["cannot_yet_do"]),
            gloss=dict(data.get("gloss", {})),
        )
        profile.validate()
        return profile


def _profile_request(topic: TopicSpec, level: PerformanceLevel, seed: int) -> StructuredRequest:
    return StructuredRequest(
        template_id="profile",
        variables={
            "topic_ref": topic.topic_ref,
            "evidence": [e.to_dict() for e in topic.evidence],
            "level": int(level),
            "level_name": level.name.title(),
            "descriptor": level.descriptor,
        },
        expected_schema="profile",
        seed=seed,
    )


def build_profile(
    topic: TopicSpec,
    level: PerformanceLevel,
    gen: GenerationProvider,
    *,
    seed: int = 0,
    max_repairs: int = 1,
) -> CapabilityProfile:
    """Partition the topic's evidence ids for one performance level.

    A partition violation triggers one repair re-ask before failing.
    """
    topic.validate()
    level = PerformanceLevel(level)
    req = _profile_request(topic, level, seed)
    last_err: InvariantViolation | None = None
    for _ in range(2):
        resp = generate_structured(req, gen, max_repairs=max_repairs)
        profile = CapabilityProfile(
            topic_ref=topic.topic_ref,
            level=level,
            can_do=list(resp["can_do"]),
            cannot_yet_do=list(resp["cannot_yet_do"]),
            gloss=dict(resp.get("gloss", {})),
        )
        try:
            profile.validate(topic)
            return profile
        except InvariantViolation as err:
            last_err = err
            req = req.with_variables(validation_error=str(err))
    raise last_err  # type: ignore[misc]


def build_profile_ladder(
    topic: TopicSpec,
    gen: GenerationProvider,
    *,
    seed: int = 0,
    max_repairs: int = 1,
) -> dict[PerformanceLevel, CapabilityProfile]:
    """Build all four levels and enforce the can-do subset chain.

    A broken chain gets one coordinated repair re-ask for the offending
    level before the ladder is rejected.
    """
    ladder = {
        level: build_profile(topic, level, gen, seed=seed, max_repairs=max_repairs)
        for level in PerformanceLevel
    }
    violation = _chain_violation(ladder)
    if violation is not None:
        lower, upper = violation
        req = _profile_request(topic, upper, seed).with_variables(
            validation_error=(
                f"can_do of level {int(lower)} must be a subset of level {int(upper)}"
            )
        )
        resp = generate_structured(req, gen, max_repairs=max_repairs)
        repaired = CapabilityProfile(
            topic_ref=topic.topic_ref,
            level=upper,
            can_do=list(resp["can_do"]),
            cannot_yet_do=list(resp["cannot_yet_do"]),
            gloss=dict(resp.get("gloss", {})),
        )
        repaired.validate(topic)
        ladder[upper] = repaired
        violation = _chain_violation(ladder)
        if violation is not None:
            lower, upper = violation
            raise InvariantViolation(
                f"{topic.topic_ref}: ladder monotonicity violated between "
                f"levels {int(lower)} and {int(upper)}"
            )
    return ladder


def _chain_violation(
    ladder: dict[PerformanceLevel, CapabilityProfile],
) -> tuple[PerformanceLevel, PerformanceLevel] | None:
    levels = sorted(ladder)
    for lo, hi in zip(levels, levels[1:]):
        if not set(ladder[lo].can_do) <= set(ladder[hi].can_do):
            return lo, hi
    return None
