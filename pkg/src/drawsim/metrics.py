"""Metrics: cross-modal consistency, image complexity, survey aggregation.

Edge detection is defined entirely in integer arithmetic (integer
luminance, 3x3 Sobel, squared-magnitude thresholds, integer sector tests
for non-maximum suppression) so that this vectorized implementation and an
independent brute-force reference can agree bit-for-bit:

    1. gray  = (299 R + 587 G + 114 B) // 1000
    2. gx,gy = 3x3 Sobel with replicate padding
    3. m2    = gx^2 + gy^2, compared against low^2 / high^2
       (thresholds follow the usual 0-255 convention; Sobel magnitudes
       may exceed 255)
    4. NMS sectors: east-west when (|gy|+|gx|)^2 <= 2 gx^2; north-south
       when |gy| >= |gx| and (|gy|-|gx|)^2 >= 2 gx^2; otherwise the
       diagonal chosen by sign(gx*gy). A pixel survives when its m2 is >=
       both neighbors along the gradient (out-of-bounds neighbors count 0).
    5. hysteresis: weak survivors (m2 >= low^2) 8-connected to a strong
       survivor (m2 >= high^2) are edges.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, Field
from scipy import ndimage

from drawsim.conceptmap import map_to_text
from drawsim.corpus import Artifact, CorpusManifest, ProviderSet, derive_seed
from drawsim.errors import DrawSimError
from drawsim.profiles import PerformanceLevel, build_profile_ladder
from drawsim.providers import EmbeddingProvider
from drawsim.providers.offline import phrase_of, _imperative
from drawsim.standards import TopicSpec
from drawsim.synthesis import (
    ImagePromptSpec,
    compose_prompt_text,
    generate_unified,
    grade_style_marker,
    style_for_grade,
)

# ---------------------------------------------------------------------------
# Cross-modal consistency
# ---------------------------------------------------------------------------


@dataclass
class ConsistencyScores:
    """Pairwise cosines plus their mean; the mean identity is enforced."""

    text_draw: float
    cmap_draw: float
    text_cmap: float
    overall: float

    def __post_init__(self):
        expected = (self.text_draw + self.cmap_draw + self.text_cmap) / 3
        if abs(self.overall - expected) > 1e-12:
            raise ValueError("overall must equal the mean of the three pairwise scores")

    @classmethod
    def from_components(cls, text_draw: float, cmap_draw: float, text_cmap: float) -> "ConsistencyScores":
        return cls(
            text_draw=text_draw,
            cmap_draw=cmap_draw,
            text_cmap=text_cmap,
            overall=(text_draw + cmap_draw + text_cmap) / 3,
        )

    def to_dict(self) -> dict:
        return {
            "text_draw": self.text_draw,
            "cmap_draw": self.cmap_draw,
            "text_cmap": self.text_cmap,
            "overall": self.overall,
        }


def cosine(a, b) -> float:
    va, vb = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
    if denom == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, float(va @ vb) / denom)))


def pairwise_consistency(artifact: Artifact, embed: EmbeddingProvider) -> ConsistencyScores:
    """Cosines among the narrative, image, and flattened concept map."""
    if artifact.image_bytes is None:
        raise ValueError(f"artifact {artifact.id} has no image bytes loaded")
    text_vec = embed.embed(artifact.unified.narrative.text)
    draw_vec = embed.embed(artifact.image_bytes)
    cmap_vec = embed.embed(map_to_text(artifact.cmap))
    return ConsistencyScores.from_components(
        text_draw=cosine(text_vec, draw_vec),
        cmap_draw=cosine(cmap_vec, draw_vec),
        text_cmap=cosine(text_vec, cmap_vec),
    )


_LEVEL_NAMES = {1: "Emergent", 2: "Developing", 3: "Proficient", 4: "Advanced"}
_COLUMNS = ("text_draw", "cmap_draw", "text_cmap", "overall")


def consistency_report(sample: list[Artifact], embed: EmbeddingProvider) -> dict:
    """Group means of the pairwise scores, by level and by grade band."""
    if not sample:
        raise ValueError("sample must be non-empty")
    rows = [(a, pairwise_consistency(a, embed)) for a in sample]

    def group_mean(items: list[ConsistencyScores]) -> dict:
        return {
            col: sum(getattr(s, col) for s in items) / len(items) for col in _COLUMNS
        } | {"n": len(items)}

    report: dict = {
        "schema_version": 1,
        "n": len(rows),
        "overall": group_mean([s for _, s in rows]),
        "by_level": {},
        "by_grade_band": {},
    }
    for value, name in _LEVEL_NAMES.items():
        member = [s for a, s in rows if int(a.level) == value]
        if member:
            report["by_level"][name] = group_mean(member)
        else:
            warnings.warn(f"consistency report: empty level group {name}", stacklevel=2)
    for band in sorted({a.grade_band.value for a, _ in rows}):
        member = [s for a, s in rows if a.grade_band.value == band]
        report["by_grade_band"][band] = group_mean(member)
    return report


def consistency_table(report: dict) -> str:
    """Aligned text table of a consistency report (3 decimal places)."""
    header = f"{'Group':<14}{'Text-Draw':>10}{'CMap-Draw':>10}{'Text-CMap':>10}{'Overall':>10}{'N':>6}"
    lines = [header, "-" * len(header)]

    def row(name: str, group: dict) -> str:
        return (
            f"{name:<14}"
            + "".join(f"{group[c]:>10.3f}" for c in _COLUMNS)
            + f"{group['n']:>6}"
        )

    lines.append(row("Overall", report["overall"]))
    for name, group in report["by_level"].items():
        lines.append(row(name, group))
    for name, group in report["by_grade_band"].items():
        lines.append(row(name, group))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Image complexity (Canny edge density)
# ---------------------------------------------------------------------------


@dataclass
class ComplexityScore:
    edge_density: float

    def __post_init__(self):
        if not 0.0 <= self.edge_density <= 1.0:
            raise ValueError(f"edge density out of range: {self.edge_density}")


def to_gray(rgb: np.ndarray) -> np.ndarray:
    arr = rgb.astype(np.int64)
    return (299 * arr[..., 0] + 587 * arr[..., 1] + 114 * arr[..., 2]) // 1000


def nearest_resize(gray: np.ndarray, size: int) -> np.ndarray:
    h, w = gray.shape
    ys = (np.arange(size) * h) // size
    xs = (np.arange(size) * w) // size
    return gray[np.ix_(ys, xs)]


def canny_edges(gray: np.ndarray, low: int, high: int) -> np.ndarray:
    """Boolean edge map per the integer pipeline in the module docstring."""
    g = gray.astype(np.int64)
    p = np.pad(g, 1, mode="edge")
    gx = (
        p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]
        - p[:-2, :-2] - 2 * p[1:-1, :-2] - p[2:, :-2]
    )
    gy = (
        p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]
        - p[:-2, :-2] - 2 * p[:-2, 1:-1] - p[:-2, 2:]
    )
    m2 = gx * gx + gy * gy
    agx, agy = np.abs(gx), np.abs(gy)

    ew = (agy + agx) ** 2 <= 2 * agx * agx
    ns = ~ew & (agy >= agx) & ((agy - agx) ** 2 >= 2 * agx * agx)
    diag_pos = ~ew & ~ns & (gx * gy > 0)
    diag_neg = ~ew & ~ns & (gx * gy < 0)

    mp = np.pad(m2, 1, mode="constant", constant_values=0)
    center = mp[1:-1, 1:-1]
    left, right = mp[1:-1, :-2], mp[1:-1, 2:]
    up, down = mp[:-2, 1:-1], mp[2:, 1:-1]
    ul, dr = mp[:-2, :-2], mp[2:, 2:]
    ur, dl = mp[:-2, 2:], mp[2:, :-2]

    n1 = np.where(ew, left, np.where(ns, up, np.where(diag_pos, ul, ur)))
    n2 = np.where(ew, right, np.where(ns, down, np.where(diag_pos, dr, dl)))
    keep = (center >= n1) & (center >= n2)

    strong = keep & (m2 >= high * high)
    weak = keep & (m2 >= low * low)
    if not strong.any():
        return np.zeros_like(weak)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    strong_labels = np.unique(labels[strong])
    return weak & np.isin(labels, strong_labels[strong_labels > 0])


def decode_image(data: "bytes | np.ndarray") -> np.ndarray:
    """Decode to an integer grayscale array."""
    if isinstance(data, np.ndarray):
        arr = data
    else:
        try:
            with Image.open(io.BytesIO(data)) as img:
                arr = np.asarray(img.convert("RGB"))
        except (UnidentifiedImageError, OSError) as err:
            raise DrawSimError(f"undecodable image: {err}") from err
    if arr.ndim == 3:
        return to_gray(arr)
    if arr.ndim == 2:
        return arr.astype(np.int64)
    raise DrawSimError(f"unsupported image shape: {arr.shape}")


DEFAULT_CANONICAL_SIZE = 512


def edge_density(
    data: "bytes | np.ndarray",
    thresholds: tuple[int, int] = (100, 200),
    *,
    canonical_size: int | None = None,
) -> ComplexityScore:
    """Edge-pixel fraction of the image after Canny detection.

    ``canonical_size`` resizes (nearest-neighbor) to a square frame first;
    corpus-level reports pass DEFAULT_CANONICAL_SIZE for cross-image
    comparability, while the default works on native pixels so results
    can be checked against a per-pixel reference.
    """
    low, high = thresholds
    if not (0 <= low < high <= 255):
        raise ValueError(f"thresholds must satisfy 0 <= low < high <= 255, got {thresholds}")
    gray = decode_image(data)
    if canonical_size:
        gray = nearest_resize(gray, canonical_size)
    edges = canny_edges(gray, low, high)
    return ComplexityScore(edge_density=float(edges.sum() / edges.size))


def level_complexity_sd(cell_means) -> float:
    """Population SD of exactly four per-level mean densities."""
    values = list(cell_means)
    if len(values) != 4:
        raise ValueError(f"expected exactly 4 per-level means, got {len(values)}")
    mean = sum(values) / 4
    return math.sqrt(sum((v - mean) ** 2 for v in values) / 4)


# ---------------------------------------------------------------------------
# Ablation harness (profile conditioning vs flat generation)
# ---------------------------------------------------------------------------


@dataclass
class AblationReport:
    condition: str
    per_topic_sd: dict[str, float]
    mean_sd: float
    thresholds: tuple[int, int] = (100, 200)
    canonical_size: int | None = None
    exemplars_per_cell: int = 1

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "condition": self.condition,
            "per_topic_sd": dict(self.per_topic_sd),
            "mean_sd": self.mean_sd,
            "thresholds": list(self.thresholds),
            "canonical_size": self.canonical_size,
            "exemplars_per_cell": self.exemplars_per_cell,
        }


CONDITIONS = ("with_profiles", "without_profiles")


def _flat_prompt(topic: TopicSpec, style_table=None) -> str:
    """Profile-ignoring prompt: every evidence statement as a positive."""
    spec = ImagePromptSpec(
        positive=[_imperative(phrase_of(e.text)) for e in topic.evidence],
        negative=[],
        stylistic=[
            style_for_grade(topic.pe.grade, style_table),
            grade_style_marker(topic.pe.grade),
        ],
        constraint_index={e.id: {"positive": [i], "negative": []} for i, e in enumerate(topic.evidence)},
    )
    return compose_prompt_text(spec)


def run_ablation(
    topics: list[TopicSpec],
    providers: ProviderSet,
    *,
    condition: str = "with_profiles",
    exemplars_per_cell: int = 2,
    seed: int = 0,
    thresholds: tuple[int, int] = (100, 200),
    canonical_size: int | None = None,
    style_table=None,
) -> AblationReport:
    """Render topics x levels x exemplars and compute per-topic SD of the
    per-level mean edge densities.

    ``with_profiles`` conditions prompts on the ladder profile for each
    level; ``without_profiles`` renders the same full-evidence prompt at
    every level (only the seed varies). Images stay in memory.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    per_topic_sd: dict[str, float] = {}
    for topic in topics:
        topic.validate()
        ladder = None
        if condition == "with_profiles":
            ladder = build_profile_ladder(
                topic, providers.generation, seed=derive_seed(seed, topic.topic_ref, "ladder")
            )
        level_means = []
        for level in PerformanceLevel:
            densities = []
            for k in range(exemplars_per_cell):
                art_seed = derive_seed(seed, topic.topic_ref, int(level), k, condition)
                if ladder is not None:
                    unified = generate_unified(
                        topic,
                        topic.pe.grade,
                        ladder[level],
                        providers.generation,
                        seed=art_seed,
                        style_table=style_table,
                    )
                    prompt = unified.prompt.composed
                else:
                    prompt = _flat_prompt(topic, style_table)
                image = providers.image.generate_image(prompt, art_seed)
                densities.append(
                    edge_density(image, thresholds, canonical_size=canonical_size).edge_density
                )
            level_means.append(sum(densities) / len(densities))
        per_topic_sd[topic.topic_ref] = level_complexity_sd(level_means)
    mean_sd = sum(per_topic_sd.values()) / len(per_topic_sd)
    return AblationReport(
        condition=condition,
        per_topic_sd=per_topic_sd,
        mean_sd=mean_sd,
        thresholds=thresholds,
        canonical_size=canonical_size,
        exemplars_per_cell=exemplars_per_cell,
    )


def ablation_from_corpus(
    manifest: CorpusManifest,
    store,
    *,
    thresholds: tuple[int, int] = (100, 200),
    canonical_size: int | None = None,
    condition: str = "with_profiles",
) -> AblationReport:
    """Compute the ablation statistic over a persisted corpus's images."""
    per_topic_sd: dict[str, float] = {}
    for topic_ref in manifest.topics:
        level_means = []
        for level in (1, 2, 3, 4):
            entries = manifest.filtered(topic=topic_ref, level=level)
            if not entries:
                raise DrawSimError(f"corpus has no artifacts for {topic_ref} level {level}")
            densities = [
                edge_density(store.image_bytes(e), thresholds, canonical_size=canonical_size).edge_density
                for e in entries
            ]
            level_means.append(sum(densities) / len(densities))
        per_topic_sd[topic_ref] = level_complexity_sd(level_means)
    return AblationReport(
        condition=condition,
        per_topic_sd=per_topic_sd,
        mean_sd=sum(per_topic_sd.values()) / len(per_topic_sd),
        thresholds=thresholds,
        canonical_size=canonical_size,
        exemplars_per_cell=manifest.exemplars_per_cell,
    )


# ---------------------------------------------------------------------------
# Evaluation-record aggregation
# ---------------------------------------------------------------------------


class Ternary(str, Enum):
    YES = "Yes"
    PARTIALLY = "Partially"
    NO = "No"


class EvaluationRecord(BaseModel):
    """One rater's instrument responses for one artifact."""

    rater_id: str = Field(min_length=1)
    artifact_id: str = Field(min_length=1)
    q1: Ternary
    q2: Ternary
    q3: Ternary
    q4: Ternary
    q5: Ternary
    q6: Ternary
    q7: int = Field(ge=1, le=5)
    q8: int = Field(ge=1, le=5)
    comments: str = ""


TERNARY_QUESTIONS = ("q1", "q2", "q3", "q4", "q5", "q6")
LIKERT_QUESTIONS = ("q7", "q8")

QUESTION_LABELS = {
    "q1": "Q1: Topic-PE Alignment",
    "q2": "Q2: DCI Representation",
    "q3": "Q3: Drawing-Prompt Coherence",
    "q4": "Q4: Capability Statement Match",
    "q5": "Q5: Performance Level Match",
    "q6": "Q6: Grade-Level Authenticity",
    "q7": "Q7: Concept Map Quality",
    "q8": "Q8: Scientific Accuracy",
}


@dataclass
class TernaryBreakdown:
    question: str
    counts: dict[str, int]
    n: int
    percentages: dict[str, float] = field(init=False)

    def __post_init__(self):
        self.percentages = {k: 100.0 * v / self.n for k, v in self.counts.items()}

    def as_tuple(self) -> tuple[float, float, float]:
        return (
            self.percentages["Yes"],
            self.percentages["Partially"],
            self.percentages["No"],
        )

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "counts": dict(self.counts),
            "n": self.n,
            "percentages": dict(self.percentages),
            "rounded": {k: round(v, 2) for k, v in self.percentages.items()},
        }


@dataclass
class LikertBreakdown:
    question: str
    counts: dict[int, int]
    n: int
    percentages: dict[int, float] = field(init=False)

    def __post_init__(self):
        self.percentages = {k: 100.0 * v / self.n for k, v in self.counts.items()}

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(self.percentages[i] for i in range(1, 6))

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "counts": {str(k): v for k, v in self.counts.items()},
            "n": self.n,
            "percentages": {str(k): v for k, v in self.percentages.items()},
            "rounded": {str(k): round(v, 1) for k, v in self.percentages.items()},
        }


def aggregate_ternary(records: list[EvaluationRecord], question: str) -> TernaryBreakdown:
    """Yes/Partially/No percentages for one of q1..q6 (counts recoverable)."""
    if question not in TERNARY_QUESTIONS:
        raise ValueError(f"not a ternary question: {question}")
    if not records:
        raise ValueError("records must be non-empty")
    counts = {t.value: 0 for t in Ternary}
    for record in records:
        counts[getattr(record, question).value] += 1
    return TernaryBreakdown(question=question, counts=counts, n=len(records))


def aggregate_likert(records: list[EvaluationRecord], question: str) -> LikertBreakdown:
    """Distribution over 1..5 in percent for q7 or q8."""
    if question not in LIKERT_QUESTIONS:
        raise ValueError(f"not a likert question: {question}")
    if not records:
        raise ValueError("records must be non-empty")
    counts = {i: 0 for i in range(1, 6)}
    for record in records:
        counts[getattr(record, question)] += 1
    return LikertBreakdown(question=question, counts=counts, n=len(records))


def aggregate_report(records: list[EvaluationRecord]) -> dict:
    """Full Table-1-style aggregation as a structured document."""
    return {
        "schema_version": 1,
        "n": len(records),
        "ternary": {q: aggregate_ternary(records, q).to_dict() for q in TERNARY_QUESTIONS},
        "likert": {q: aggregate_likert(records, q).to_dict() for q in LIKERT_QUESTIONS},
    }


def aggregate_table(records: list[EvaluationRecord]) -> str:
    """Aligned text table: ternary rows at 2 dp, likert rows at 1 dp."""
    lines = [f"Evaluation results (N={len(records)} evaluations)", ""]
    header = f"{'Dimension':<34}{'Yes':>8}{'Partially':>11}{'No':>8}"
    lines += [header, "-" * len(header)]
    for q in TERNARY_QUESTIONS:
        b = aggregate_ternary(records, q)
        yes, part, no = (round(v, 2) for v in b.as_tuple())
        lines.append(f"{QUESTION_LABELS[q]:<34}{yes:>8.2f}{part:>11.2f}{no:>8.2f}")
    lines.append("")
    header = f"{'Dimension':<34}" + "".join(f"{i:>7}" for i in range(1, 6))
    lines += [header, "-" * len(header)]
    for q in LIKERT_QUESTIONS:
        b = aggregate_likert(records, q)
        cells = "".join(f"{round(v, 1):>7.1f}" for v in b.as_tuple())
        lines.append(f"{QUESTION_LABELS[q]:<34}{cells}")
    return "\n".join(lines)
