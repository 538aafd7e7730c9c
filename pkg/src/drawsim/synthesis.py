"""Unified synthesis: narrative + image-prompt spec + alignment explanation.

The three outputs are produced in one coordinated pass conditioned on the
same capability profile, then mechanically re-verified: every can-do id
must map to a positive constraint (or an explicit exclusion), every
cannot-yet-do id to a negative constraint, and no id may appear on both
sides. Rendering goes through the image provider and persists bytes at a
content-addressed path.
"""

from __future__ import annotations

import hashlib
import io
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from drawsim.errors import CoverageError, InvariantViolation
from drawsim.profiles import CapabilityProfile, PerformanceLevel
from drawsim.providers import (
    CallLog,
    GenerationProvider,
    ImageProvider,
    StructuredRequest,
    call_with_retry,
    generate_structured,
    prompt_sha256,
)
from drawsim.standards import GradeBand, TopicSpec

# Grade-band style descriptors; configurable via the style_table argument
# or the provider config file.
DEFAULT_STYLE_TABLE: dict[GradeBand, str] = {
    GradeBand.K2: "Hand-drawn crayon style, uneven lines, simple 2D perspective",
    GradeBand.G35: "Marker and pencil style, simple labels",
    GradeBand.G68: "Pencil sketch style, labeled arrows",
    GradeBand.G912: "Pen diagram style, precise annotations",
}

_WORD_RE = re.compile(r"[a-z']+")
_FIRST_PERSON = frozenset({"i", "i'm", "i'll", "i've", "my", "me", "mine"})
_HEDGES = (
    "might",
    "maybe",
    "not sure",
    "don't know",
    "do not know",
    "unsure",
    "forget",
    "i think",
    "probably",
    "tricky",
    "skip",
)
_CONTENT_STOP = frozenset(
    "show draw include with that this from into over each their them does "
    "not sure make clearly small smaller such what when where some".split()
)


def grade_style_marker(grade: int) -> str:
    if grade == 0:
        return "Draw like a kindergarten student"
    return f"Draw like a Grade {grade} student"


def style_for_grade(grade: int, style_table: dict[GradeBand, str] | None = None) -> str:
    table = style_table or DEFAULT_STYLE_TABLE
    return table[GradeBand.for_grade(grade)]


@dataclass
class ImagePromptSpec:
    """Structured prompt: positive / negative / stylistic constraints.

    ``constraint_index`` maps each evidence id to the positions of its
    constraints in the positive and negative lists; ``exclusions`` records
    can-do ids deliberately left out of the drawing, with a rationale.
    """

    positive: list[str]
    negative: list[str]
    stylistic: list[str]
    composed: str = ""
    constraint_index: dict[str, dict[str, list[int]]] = field(default_factory=dict)
    exclusions: dict[str, str] = field(default_factory=dict)

    def ids_with(self, side: str) -> set[str]:
        return {eid for eid, idx in self.constraint_index.items() if idx.get(side)}

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "positive": list(self.positive),
            "negative": list(self.negative),
            "stylistic": list(self.stylistic),
            "composed": self.composed,
            "constraint_index": {
                k: {"positive": list(v.get("positive", [])), "negative": list(v.get("negative", []))}
                for k, v in self.constraint_index.items()
            },
            "exclusions": dict(self.exclusions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImagePromptSpec":
        return cls(
            positive=list(data["positive"]),
            negative=list(data["negative"]),
            stylistic=list(data["stylistic"]),
            composed=data.get("composed", ""),
            constraint_index={
                k: {"positive": list(v.get("positive", [])), "negative": list(v.get("negative", []))}
                for k, v in data.get("constraint_index", {}).items()
            },
            exclusions=dict(data.get("exclusions", {})),
        )


@dataclass
class ReasoningNarrative:
    text: str
    vocabulary_grade: int

    def to_dict(self) -> dict:
        return {"text": self.text, "vocabulary_grade": self.vocabulary_grade}

    @classmethod
    def from_dict(cls, data: dict) -> "ReasoningNarrative":
        return cls(text=data["text"], vocabulary_grade=int(data["vocabulary_grade"]))


@dataclass
class AlignmentExplanation:
    text: str
    covered_can: list[str]
    covered_cannot: list[str]

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "covered_can": list(self.covered_can),
            "covered_cannot": list(self.covered_cannot),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AlignmentExplanation":
        return cls(
            text=data["text"],
            covered_can=list(data["covered_can"]),
            covered_cannot=list(data["covered_cannot"]),
        )


@dataclass
class UnifiedOutput:
    narrative: ReasoningNarrative
    prompt: ImagePromptSpec
    alignment: AlignmentExplanation
    profile_ref: str

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "narrative": self.narrative.to_dict(),
            "prompt": self.prompt.to_dict(),
            "alignment": self.alignment.to_dict(),
            "profile_ref": self.profile_ref,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UnifiedOutput":
        return cls(
            narrative=ReasoningNarrative.from_dict(data["narrative"]),
            prompt=ImagePromptSpec.from_dict(data["prompt"]),
            alignment=AlignmentExplanation.from_dict(data["alignment"]),
            profile_ref=data["profile_ref"],
        )


@dataclass
class AlignmentReport:
    """Mechanical coverage check result, independent of the provider's
    own alignment explanation."""

    uncovered_can_do: list[str]
    uncovered_cannot_yet_do: list[str]
    contradictions: list[str]
    passed: bool

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "uncovered_can_do": list(self.uncovered_can_do),
            "uncovered_cannot_yet_do": list(self.uncovered_cannot_yet_do),
            "contradictions": list(self.contradictions),
            "passed": self.passed,
        }


def narrative_is_first_person(text: str) -> bool:
    """Heuristic first-person check (documented as approximate)."""
    return any(tok in _FIRST_PERSON for tok in _WORD_RE.findall(text.lower()))


def narrative_references_gap(text: str, spec: ImagePromptSpec) -> bool:
    """True when the narrative hedges about at least one negative constraint.

    Requires a hedging marker plus a content word shared with some
    negative-constraint text; approximate by design.
    """
    lowered = text.lower()
    if not any(h in lowered for h in _HEDGES):
        return False
    narrative_words = set(_WORD_RE.findall(lowered))
    for negative in spec.negative:
        for word in _WORD_RE.findall(negative.lower()):
            if len(word) >= 4 and word not in _CONTENT_STOP and word in narrative_words:
                return True
    return False


def compose_prompt_text(spec: ImagePromptSpec) -> str:
    """Concatenate constraints: scene positives, then negatives, then style.

    Pure and order-stable; every constraint appears verbatim as its own
    sentence. Guards: at least one positive and one stylistic constraint.
    """
    if not spec.positive:
        raise ValueError("prompt spec has no positive constraints")
    if not spec.stylistic:
        raise ValueError("prompt spec has no stylistic constraints")
    parts = [_sentence(t) for t in (*spec.positive, *spec.negative, *spec.stylistic)]
    return " ".join(parts)


def _sentence(text: str) -> str:
    stripped = text.strip()
    return stripped if stripped.endswith((".", "!", "?")) else stripped + "."


def verify_alignment(out: UnifiedOutput, profile: CapabilityProfile) -> AlignmentReport:
    """Recompute prompt-profile coverage from the constraint index.

    Pass means every cannot-yet-do id has a negative constraint and every
    can-do id has a positive constraint or a recorded exclusion.
    Contradictions (an id on both sides) are reported separately.
    """
    if out.profile_ref != profile.profile_id:
        raise ValueError(
            f"output references profile {out.profile_ref!r}, expected {profile.profile_id!r}"
        )
    spec = out.prompt
    covered_pos = spec.ids_with("positive")
    covered_neg = spec.ids_with("negative")
    uncovered_can = [
        eid for eid in profile.can_do if eid not in covered_pos and eid not in spec.exclusions
    ]
    uncovered_cannot = [eid for eid in profile.cannot_yet_do if eid not in covered_neg]
    contradictions = sorted(covered_pos & covered_neg)
    return AlignmentReport(
        uncovered_can_do=uncovered_can,
        uncovered_cannot_yet_do=uncovered_cannot,
        contradictions=contradictions,
        passed=not uncovered_can and not uncovered_cannot,
    )


def _spec_from_response(resp: dict, marker: str) -> ImagePromptSpec:
    positive: list[str] = []
    negative: list[str] = []
    index: dict[str, dict[str, list[int]]] = {}

    def slot(eid: str) -> dict[str, list[int]]:
        return index.setdefault(eid, {"positive": [], "negative": []})

    for item in resp["positives"]:
        slot(item["evidence_id"])["positive"].append(len(positive))
        positive.append(item["text"])
    for item in resp["negatives"]:
        slot(item["evidence_id"])["negative"].append(len(negative))
        negative.append(item["text"])

    stylistic = [s for s in resp.get("stylistic", []) if s.strip()]
    if not any(marker in s for s in stylistic):
        stylistic.append(marker)
    spec = ImagePromptSpec(
        positive=positive,
        negative=negative,
        stylistic=stylistic,
        constraint_index=index,
        exclusions={e["evidence_id"]: e["rationale"] for e in resp.get("exclusions", [])},
    )
    spec.composed = compose_prompt_text(spec)
    return spec


def generate_unified(
    topic: TopicSpec,
    grade: int,
    profile: CapabilityProfile,
    gen: GenerationProvider,
    *,
    seed: int = 0,
    style_table: dict[GradeBand, str] | None = None,
    max_repairs: int = 1,
) -> UnifiedOutput:
    """One coordinated pass producing narrative, prompt spec, and alignment.

    Coverage or narrative-voice violations get one repair re-ask; a second
    failure raises with the uncovered ids attached.
    """
    profile.validate(topic)
    if grade not in topic.pe.grade_band.grades():
        raise ValueError(
            f"grade {grade} outside topic band {topic.pe.grade_band.value}"
        )
    marker = grade_style_marker(grade)
    evidence_by_id = {e.id: e for e in topic.evidence}
    req = StructuredRequest(
        template_id="unified",
        variables={
            "topic_ref": topic.topic_ref,
            "topic_name": topic.topic_name,
            "grade": grade,
            "level": int(profile.level),
            "marker": marker,
            "style_hint": style_for_grade(grade, style_table),
            "can": [{"id": i, "text": evidence_by_id[i].text} for i in profile.can_do],
            "cannot": [{"id": i, "text": evidence_by_id[i].text} for i in profile.cannot_yet_do],
        },
        expected_schema="unified",
        seed=seed,
    )

    report: AlignmentReport | None = None
    issues: list[str] = []
    for _ in range(1 + max_repairs):
        resp = generate_structured(req, gen, max_repairs=max_repairs)
        narrative = ReasoningNarrative(
            text=resp["narrative"], vocabulary_grade=int(resp["vocabulary_grade"])
        )
        spec = _spec_from_response(resp, marker)
        explanation = AlignmentExplanation(
            text=resp["alignment"]["text"],
            covered_can=list(resp["alignment"]["covered_can"]),
            covered_cannot=list(resp["alignment"]["covered_cannot"]),
        )
        out = UnifiedOutput(
            narrative=narrative,
            prompt=spec,
            alignment=explanation,
            profile_ref=profile.profile_id,
        )

        issues = []
        if not narrative_is_first_person(narrative.text):
            issues.append("narrative is not in first person")
        if not narrative_references_gap(narrative.text, spec):
            issues.append("narrative does not hedge about any cannot-yet-do gap")
        if not set(explanation.covered_can) <= set(profile.can_do):
            issues.append("alignment covered_can contains ids outside the profile")
        if not set(explanation.covered_cannot) <= set(profile.cannot_yet_do):
            issues.append("alignment covered_cannot contains ids outside the profile")
        report = verify_alignment(out, profile)
        if report.contradictions:
            issues.append(f"ids constrained both ways: {report.contradictions}")
        if not report.passed:
            issues.append(
                f"uncovered can={report.uncovered_can_do} cannot={report.uncovered_cannot_yet_do}"
            )
        if not issues:
            return out
        req = req.with_variables(validation_error="; ".join(issues))

    assert report is not None
    if not report.passed or report.contradictions:
        raise CoverageError(
            f"{profile.profile_id}: prompt-profile coverage failed after repair: {issues}",
            uncovered_can=report.uncovered_can_do,
            uncovered_cannot=report.uncovered_cannot_yet_do,
        )
    raise InvariantViolation(
        f"{profile.profile_id}: unified output invalid after repair: {issues}"
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


@dataclass
class ImageRef:
    """Pointer to persisted image bytes (path relative to the store root)."""

    path: str
    sha256: str
    width: int
    height: int
    provider_id: str
    seed: int
    prompt_sha256: str

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "sha256": self.sha256,
            "width": self.width,
            "height": self.height,
            "provider_id": self.provider_id,
            "seed": self.seed,
            "prompt_sha256": self.prompt_sha256,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImageRef":
        return cls(
            path=data["path"],
            sha256=data["sha256"],
            width=int(data["width"]),
            height=int(data["height"]),
            provider_id=data["provider_id"],
            seed=int(data["seed"]),
            prompt_sha256=data["prompt_sha256"],
        )


def render_drawing(
    prompt: str,
    img: ImageProvider,
    style_seed: int,
    root: Path,
    *,
    subdir: str = "images",
    max_retries: int = 2,
    log: CallLog | None = None,
    sleep=time.sleep,
    backoff_base: float = 0.5,
) -> ImageRef:
    """Render the prompt and persist bytes at a content-addressed path."""
    if not prompt.strip():
        raise ValueError("prompt must be non-empty")
    data = call_with_retry(
        lambda: img.generate_image(prompt, style_seed),
        max_retries=max_retries,
        log=log,
        sleep=sleep,
        backoff_base=backoff_base,
        tag="image",
    )
    sha = hashlib.sha256(data).hexdigest()
    rel = f"{subdir}/{sha[:32]}.png"
    target = Path(root) / rel
    target.parent.mkdir(parents=True, exist_ok=True)
    if not target.exists():
        target.write_bytes(data)
    with Image.open(io.BytesIO(data)) as decoded:
        width, height = decoded.size
    if log is not None:
        log.record(tag="image", prompt_sha256=prompt_sha256(prompt), seed=style_seed, outcome="persisted")
    return ImageRef(
        path=rel,
        sha256=sha,
        width=width,
        height=height,
        provider_id=img.provider_id,
        seed=style_seed,
        prompt_sha256=prompt_sha256(prompt),
    )


# ---------------------------------------------------------------------------
# Rejected-strategy baselines (kept only to demonstrate contradiction risk)
# ---------------------------------------------------------------------------


def generate_baseline(
    topic: TopicSpec,
    grade: int,
    profile: CapabilityProfile,
    gen: GenerationProvider,
    *,
    seed: int = 0,
    strategy: str = "independent",
    style_table: dict[GradeBand, str] | None = None,
) -> UnifiedOutput:
    """Uncoordinated generation baselines ('independent' / 'sequential').

    Not used by the pipeline: the narrative is generated without the
    profile's gap set, so it can claim skills the prompt spec suppresses.
    Returned without coordination checks so tests can show the failure.
    """
    if strategy not in ("independent", "sequential"):
        raise ValueError(f"unknown baseline strategy: {strategy}")
    profile.validate(topic)
    evidence_by_id = {e.id: e for e in topic.evidence}
    marker = grade_style_marker(grade)
    all_ids = topic.evidence_ids()

    narrative_req = StructuredRequest(
        template_id="unified",
        variables={
            "topic_ref": topic.topic_ref,
            "topic_name": topic.topic_name,
            "grade": grade,
            "level": int(PerformanceLevel.ADVANCED),
            "marker": marker,
            "style_hint": style_for_grade(grade, style_table),
            "can": [{"id": i, "text": evidence_by_id[i].text} for i in all_ids],
            "cannot": [],
        },
        expected_schema="unified",
        seed=seed,
    )
    narrative_resp = generate_structured(narrative_req, gen)

    coordinated = generate_unified(
        topic, grade, profile, gen, seed=seed, style_table=style_table
    )
    if strategy == "sequential":
        # Sequential passes the narrative forward but drops the profile's
        # negative constraints on the way, losing gap coverage.
        spec = ImagePromptSpec(
            positive=list(coordinated.prompt.positive),
            negative=[],
            stylistic=list(coordinated.prompt.stylistic),
            constraint_index={
                eid: {"positive": list(v.get("positive", [])), "negative": []}
                for eid, v in coordinated.prompt.constraint_index.items()
            },
        )
        spec.composed = compose_prompt_text(spec)
    else:
        spec = coordinated.prompt
    return UnifiedOutput(
        narrative=ReasoningNarrative(
            text=narrative_resp["narrative"],
            vocabulary_grade=int(narrative_resp["vocabulary_grade"]),
        ),
        prompt=spec,
        alignment=coordinated.alignment,
        profile_ref=profile.profile_id,
    )
