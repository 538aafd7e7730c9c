"""Response schemas for structured generation.

Every structured call names an ``expected_schema``; the raw provider
response is validated against the matching model before the pipeline
accepts it. Malformed responses trigger a bounded repair re-ask (the
validation error is appended to the request variables) and then fail
terminally.
"""

from __future__ import annotations

import time
from typing import Optional

from pydantic import BaseModel, Field, ValidationError

from drawsim.providers.base import (
    CallLog,
    GenerationProvider,
    SchemaViolationError,
    StructuredRequest,
    call_with_retry,
)


class EvidenceItem(BaseModel):
    id: Optional[str] = None
    text: str = Field(min_length=1)


class DecomposeResponse(BaseModel):
    statements: list[EvidenceItem] = Field(min_length=1)


class ProfileResponse(BaseModel):
    can_do: list[str]
    cannot_yet_do: list[str]
    gloss: dict[str, str] = Field(default_factory=dict)


class ConstraintItem(BaseModel):
    evidence_id: str
    text: str = Field(min_length=1)


class ExclusionItem(BaseModel):
    evidence_id: str
    rationale: str = Field(min_length=1)


class UnifiedAlignment(BaseModel):
    text: str = Field(min_length=1)
    covered_can: list[str]
    covered_cannot: list[str]


class UnifiedResponse(BaseModel):
    narrative: str = Field(min_length=1)
    vocabulary_grade: int = Field(ge=0, le=12)
    positives: list[ConstraintItem]
    negatives: list[ConstraintItem]
    stylistic: list[str] = Field(default_factory=list)
    exclusions: list[ExclusionItem] = Field(default_factory=list)
    alignment: UnifiedAlignment


class CmapNodeItem(BaseModel):
    id: str
    layer: str
    label: str = Field(min_length=1)
    misconception: bool = False
    evidence_ref: Optional[str] = None


class CmapResponse(BaseModel):
    nodes: list[CmapNodeItem] = Field(min_length=1)
    edges: list[tuple[str, str]]


SCHEMAS: dict[str, type[BaseModel]] = {
    "decompose": DecomposeResponse,
    "profile": ProfileResponse,
    "unified": UnifiedResponse,
    "cmap": CmapResponse,
}

# Required template variables, checked before dispatch so a request with
# unbound placeholders fails fast instead of inside the provider.
TEMPLATES: dict[str, frozenset[str]] = {
    "decompose": frozenset({"code", "statement", "seps", "dcis", "cccs", "grade"}),
    "profile": frozenset({"topic_ref", "evidence", "level", "level_name", "descriptor"}),
    "unified": frozenset(
        {"topic_ref", "topic_name", "grade", "level", "marker", "style_hint", "can", "cannot"}
    ),
    "cmap": frozenset(
        {"topic_ref", "topic_name", "level", "can", "cannot", "positives", "negatives"}
    ),
}


def validate_request(req: StructuredRequest) -> None:
    required = TEMPLATES.get(req.template_id)
    if required is None:
        raise ValueError(f"unknown template: {req.template_id!r}")
    missing = required - set(req.variables)
    if missing:
        raise ValueError(
            f"template {req.template_id!r} has unbound placeholders: {sorted(missing)}"
        )
    if req.expected_schema not in SCHEMAS:
        raise ValueError(f"unknown schema: {req.expected_schema!r}")


def generate_structured(
    req: StructuredRequest,
    provider: GenerationProvider,
    *,
    max_repairs: int = 1,
    max_retries: int = 2,
    log: CallLog | None = None,
    sleep=time.sleep,
    backoff_base: float = 0.5,
) -> dict:
    """Call the provider and return a schema-validated response dict.

    Transient failures are retried with backoff; schema violations get
    ``max_repairs`` repair re-asks (the validation error is passed back to
    the provider) before a terminal ``SchemaViolationError``.
    """
    validate_request(req)
    model = SCHEMAS[req.expected_schema]
    current = req
    last_errors: list[str] = []
    for round_no in range(1 + max_repairs):
        raw = call_with_retry(
            lambda r=current: provider.generate(r),
            max_retries=max_retries,
            log=log,
            sleep=sleep,
            backoff_base=backoff_base,
            tag=f"gen:{req.template_id}",
        )
        try:
            validated = model.model_validate(raw)
        except ValidationError as err:
            last_errors = [str(e) for e in err.errors()]
            if log is not None:
                log.record(
                    tag=f"gen:{req.template_id}",
                    repair_round=round_no + 1,
                    outcome="schema-violation",
                )
            current = current.with_variables(validation_error="; ".join(last_errors))
            continue
        return validated.model_dump()
    raise SchemaViolationError(
        f"{req.template_id} response failed schema {req.expected_schema!r} "
        f"after {max_repairs} repair attempt(s)",
        errors=last_errors,
    )
