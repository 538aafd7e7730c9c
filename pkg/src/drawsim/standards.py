"""Performance expectations and their decomposition into drawing evidence.

A standards file is line-delimited JSON, one performance expectation per
line (see ``docs`` section in the README for the schema). Each expectation
is decomposed, through a generation provider, into 5-8 observable evidence
statements describing concrete visual features a drawing can show.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from drawsim.errors import InvariantViolation, StandardsParseError
from drawsim.providers import GenerationProvider, StructuredRequest, generate_structured

CODE_RE = re.compile(r"^(K|MS|HS|1[0-2]|[1-9])-(PS|LS|ESS)(\d+)-(\d+)$")


class GradeBand(str, Enum):
    K2 = "K-2"
    G35 = "3-5"
    G68 = "6-8"
    G912 = "9-12"

    @classmethod
    def for_grade(cls, grade: int) -> "GradeBand":
        if 0 <= grade <= 2:
            return cls.K2
        if 3 <= grade <= 5:
            return cls.G35
        if 6 <= grade <= 8:
            return cls.G68
        if 9 <= grade <= 12:
            return cls.G912
        raise ValueError(f"grade out of range: {grade}")

    def grades(self) -> range:
        lo, hi = {"K-2": (0, 2), "3-5": (3, 5), "6-8": (6, 8), "9-12": (9, 12)}[self.value]
        return range(lo, hi + 1)


class Domain(str, Enum):
    PHYSICAL = "Physical"
    LIFE = "Life"
    EARTH_SPACE = "EarthSpace"


@dataclass
class PerformanceExpectation:
    """One curriculum standard with its three dimensions."""

    code: str
    grade: int
    grade_band: GradeBand
    domain: Domain
    statement: str
    seps: list[str]
    dcis: list[str]
    cccs: list[str]

    def validate(self) -> None:
        if not CODE_RE.match(self.code):
            raise InvariantViolation(f"{self.code}: code does not match the standard pattern")
        if not 0 <= self.grade <= 12:
            raise InvariantViolation(f"{self.code}: grade {self.grade} out of range")
        if self.grade not in self.grade_band.grades():
            raise InvariantViolation(
                f"{self.code}: grade {self.grade} inconsistent with band {self.grade_band.value}"
            )
        for name, dim in (("seps", self.seps), ("dcis", self.dcis), ("cccs", self.cccs)):
            if not dim or any(not t.strip() for t in dim):
                raise InvariantViolation(f"{self.code}: {name} must be non-empty")
        if not self.statement.strip():
            raise InvariantViolation(f"{self.code}: statement must be non-empty")

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "grade": self.grade,
            "grade_band": self.grade_band.value,
            "domain": self.domain.value,
            "statement": self.statement,
            "seps": list(self.seps),
            "dcis": list(self.dcis),
            "cccs": list(self.cccs),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PerformanceExpectation":
        pe = cls(
            code=data["code"],
            grade=int(data["grade"]),
            grade_band=GradeBand(data["grade_band"]),
            domain=Domain(data["domain"]),
            statement=data["statement"],
            seps=list(data["seps"]),
            dcis=list(data["dcis"]),
            cccs=list(data["cccs"]),
        )
        pe.validate()
        return pe


@dataclass
class EvidenceStatement:
    """An observable visual feature expected in student work."""

    id: str
    text: str
    tags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "tags": list(self.tags)}

    @classmethod
    def from_dict(cls, data: dict) -> "EvidenceStatement":
        return cls(id=data["id"], text=data["text"], tags=list(data.get("tags", [])))


@dataclass
class TopicSpec:
    """A decomposed topic: the expectation plus its evidence statements."""

    topic_name: str
    pe: PerformanceExpectation
    evidence: list[EvidenceStatement]

    @property
    def topic_ref(self) -> str:
        return self.pe.code

    def evidence_ids(self) -> list[str]:
        return [e.id for e in self.evidence]

    def validate(self) -> None:
        self.pe.validate()
        if not 5 <= len(self.evidence) <= 8:
            raise InvariantViolation(
                f"{self.topic_ref}: expected 5-8 evidence statements, got {len(self.evidence)}"
            )
        ids = self.evidence_ids()
        if len(set(ids)) != len(ids):
            raise InvariantViolation(f"{self.topic_ref}: duplicate evidence ids")
        if any(not e.text.strip() for e in self.evidence):
            raise InvariantViolation(f"{self.topic_ref}: empty evidence text")

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "topic_name": self.topic_name,
            "pe": self.pe.to_dict(),
            "evidence": [e.to_dict() for e in self.evidence],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TopicSpec":
        topic = cls(
            topic_name=data["topic_name"],
            pe=PerformanceExpectation.from_dict(data["pe"]),
            evidence=[EvidenceStatement.from_dict(e) for e in data["evidence"]],
        )
        topic.validate()
        return topic


def load_standards(source: str | Path) -> list[PerformanceExpectation]:
    """Load performance expectations from a line-delimited JSON file.

    Blank lines and ``#`` comment lines are skipped. Parse and invariant
    errors carry the file path and 1-based record number.
    """
    path = Path(source)
    if not path.exists():
        raise StandardsParseError(f"standards file not found: {path}", path=str(path))
    records: list[PerformanceExpectation] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                data = json.loads(stripped)
            except json.JSONDecodeError as err:
                raise StandardsParseError(
                    f"{path}:{lineno}: invalid JSON: {err.msg}", path=str(path), record=lineno
                ) from err
            try:
                records.append(PerformanceExpectation.from_dict(data))
            except (KeyError, ValueError, InvariantViolation) as err:
                code = data.get("code", "<missing code>") if isinstance(data, dict) else "<bad record>"
                raise StandardsParseError(
                    f"{path}:{lineno}: record {code}: {err}", path=str(path), record=lineno
                ) from err
    return records


def bundled_standards_path() -> Path:
    """Path of the sample standards file shipped with the package."""
    return Path(__file__).parent / "data" / "standards_sample.ndjson"


def load_topic_names(source: str | Path) -> dict[str, str]:
    """Read optional ``topic_name`` fields from a standards file."""
    path = Path(source)
    names: dict[str, str] = {}
    if not path.exists():
        return names
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                data = json.loads(stripped)
            except json.JSONDecodeError:
                continue
            if isinstance(data, dict) and data.get("topic_name") and data.get("code"):
                names[data["code"]] = data["topic_name"]
    return names


def default_topic_name(pe: PerformanceExpectation) -> str:
    words = pe.statement.rstrip(".").split()
    return " ".join(words[:8]) if words else pe.code


def decompose(
    pe: PerformanceExpectation,
    gen: GenerationProvider,
    *,
    seed: int = 0,
    topic_name: str | None = None,
    max_repairs: int = 2,
) -> TopicSpec:
    """Decompose an expectation into 5-8 observable evidence statements.

    Deterministic for the seeded offline provider: the result is a pure
    function of (pe, seed). If the provider returns more than 8 statements
    the list is truncated; fewer than 5 triggers one re-ask, then an error.
    """
    pe.validate()
    req = StructuredRequest(
        template_id="decompose",
        variables={
            "code": pe.code,
            "statement": pe.statement,
            "seps": pe.seps,
            "dcis": pe.dcis,
            "cccs": pe.cccs,
            "grade": pe.grade,
        },
        expected_schema="decompose",
        seed=seed,
    )
    statements = _ask_for_statements(req, gen, max_repairs=max_repairs)
    if len(statements) < 5:
        retry = req.with_variables(
            validation_error=f"need at least 5 statements, got {len(statements)}"
        )
        statements = _ask_for_statements(retry, gen, max_repairs=max_repairs)
        if len(statements) < 5:
            raise InvariantViolation(
                f"{pe.code}: provider returned {len(statements)} evidence statements (< 5)"
            )
    statements = statements[:8]

    evidence = []
    seen: set[str] = set()
    for i, item in enumerate(statements):
        eid = item.get("id") or f"e{i + 1}"
        if eid in seen:
            eid = f"e{i + 1}"
        seen.add(eid)
        evidence.append(EvidenceStatement(id=eid, text=item["text"].strip()))
    topic = TopicSpec(
        topic_name=topic_name or default_topic_name(pe),
        pe=pe,
        evidence=evidence,
    )
    topic.validate()
    return topic


def _ask_for_statements(req: StructuredRequest, gen: GenerationProvider, *, max_repairs: int) -> list[dict]:
    resp = generate_structured(req, gen, max_repairs=max_repairs)
    return resp["statements"]
