"""Corpus construction: artifact persistence, manifests, stratified sampling.

Directory layout under a corpus root:

    <root>/
      manifest.json                     index + per-cell build status
      journal.ndjson                    single-writer append log
      images/<sha>.png                  content-addressed image bytes
      plans/<plan-id>.json              sampling plans
      evaluations/                      evaluation store (service module)
      <topic>/L<level>/<artifact-id>/   narrative.txt, prompt.json,
                                        profile.json, cmap.json,
                                        alignment.json, image.png, meta.json

Builds are resumable: a re-run regenerates only missing exemplars, and
artifact ids are content-derived so a resume can never duplicate a cell.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from drawsim import __version__ as PIPELINE_VERSION
from drawsim.conceptmap import ConceptMap, generate_map, validate_map
from drawsim.errors import ChecksumError, DrawSimError, InfeasibleSampleError, InvariantViolation
from drawsim.profiles import CapabilityProfile, PerformanceLevel, build_profile_ladder
from drawsim.providers import CallLog, EmbeddingProvider, GenerationProvider, ImageProvider
from drawsim.standards import Domain, GradeBand, TopicSpec
from drawsim.synthesis import (
    AlignmentReport,
    ImageRef,
    UnifiedOutput,
    generate_unified,
    render_drawing,
    verify_alignment,
)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def derive_seed(base: int, *parts) -> int:
    material = canonical_json([base, *[str(p) for p in parts]])
    return int.from_bytes(hashlib.sha256(material.encode()).digest()[:8], "big")


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class ProviderSet:
    generation: GenerationProvider
    image: ImageProvider
    embedding: EmbeddingProvider | None = None


@dataclass
class Artifact:
    """One persisted triplet with full provenance."""

    id: str
    topic_ref: str
    topic_name: str
    grade: int
    grade_band: GradeBand
    domain: Domain
    level: PerformanceLevel
    profile: CapabilityProfile
    unified: UnifiedOutput
    image_ref: ImageRef
    cmap: ConceptMap
    alignment_report: AlignmentReport
    provenance: dict
    exemplar_index: int = 0
    seed: int = 0
    image_bytes: bytes | None = None  # populated on load, never serialized

    def validate(self) -> None:
        if not self.alignment_report.passed or self.alignment_report.contradictions:
            raise InvariantViolation(f"artifact {self.id}: alignment check failed")
        report = validate_map(self.cmap)
        if not report.passed:
            raise InvariantViolation(
                f"artifact {self.id}: concept map invalid: {sorted(report.rules())}"
            )
        self.profile.validate()

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "id": self.id,
            "topic_ref": self.topic_ref,
            "topic_name": self.topic_name,
            "grade": self.grade,
            "grade_band": self.grade_band.value,
            "domain": self.domain.value,
            "level": int(self.level),
            "profile": self.profile.to_dict(),
            "unified": self.unified.to_dict(),
            "image": self.image_ref.to_dict(),
            "cmap": self.cmap.to_dict(),
            "alignment_report": self.alignment_report.to_dict(),
            "provenance": dict(self.provenance),
            "exemplar_index": self.exemplar_index,
            "seed": self.seed,
        }


@dataclass
class IndexEntry:
    id: str
    topic_ref: str
    level: int
    grade: int
    grade_band: str
    domain: str
    path: str = ""
    exemplar_index: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "topic_ref": self.topic_ref,
            "level": self.level,
            "grade": self.grade,
            "grade_band": self.grade_band,
            "domain": self.domain,
            "path": self.path,
            "exemplar_index": self.exemplar_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IndexEntry":
        return cls(
            id=data["id"],
            topic_ref=data["topic_ref"],
            level=int(data["level"]),
            grade=int(data["grade"]),
            grade_band=data["grade_band"],
            domain=data["domain"],
            path=data.get("path", ""),
            exemplar_index=int(data.get("exemplar_index", 0)),
        )


@dataclass
class CorpusManifest:
    topics: list[str]
    exemplars_per_cell: int
    seed: int
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    index: list[IndexEntry] = field(default_factory=list)
    build_status: dict[str, dict] = field(default_factory=dict)
    pipeline_version: str = PIPELINE_VERSION

    @staticmethod
    def cell_key(topic_ref: str, level: int) -> str:
        return f"{topic_ref}|L{level}"

    def total(self) -> int:
        return sum(n for per_level in self.counts.values() for n in per_level.values())

    def expected_total(self) -> int:
        return len(self.topics) * 4 * self.exemplars_per_cell

    def is_complete(self) -> bool:
        return self.total() == self.expected_total()

    def domain_distribution(self) -> dict[str, int]:
        dist: dict[str, int] = {}
        for entry in self.index:
            dist[entry.domain] = dist.get(entry.domain, 0) + 1
        return dist

    def filtered(
        self,
        *,
        topic: str | None = None,
        level: int | None = None,
        grade_band: str | None = None,
        domain: str | None = None,
    ) -> list[IndexEntry]:
        out = []
        for e in self.index:
            if topic is not None and e.topic_ref != topic:
                continue
            if level is not None and e.level != level:
                continue
            if grade_band is not None and e.grade_band != grade_band:
                continue
            if domain is not None and e.domain != domain:
                continue
            out.append(e)
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "topics": list(self.topics),
            "exemplars_per_cell": self.exemplars_per_cell,
            "seed": self.seed,
            "counts": {k: dict(v) for k, v in self.counts.items()},
            "index": [e.to_dict() for e in self.index],
            "build_status": {k: dict(v) for k, v in self.build_status.items()},
            "domain_distribution": self.domain_distribution(),
            "pipeline_version": self.pipeline_version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusManifest":
        return cls(
            topics=list(data["topics"]),
            exemplars_per_cell=int(data["exemplars_per_cell"]),
            seed=int(data["seed"]),
            counts={k: {kk: int(vv) for kk, vv in v.items()} for k, v in data.get("counts", {}).items()},
            index=[IndexEntry.from_dict(e) for e in data.get("index", [])],
            build_status={k: dict(v) for k, v in data.get("build_status", {}).items()},
            pipeline_version=data.get("pipeline_version", PIPELINE_VERSION),
        )


# ---------------------------------------------------------------------------
# Artifact store
# ---------------------------------------------------------------------------

_PART_FILES = ("narrative.txt", "prompt.json", "profile.json", "cmap.json", "alignment.json")


class ArtifactStore:
    """Filesystem store for artifacts under a corpus root."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._journal_lock = threading.Lock()

    def artifact_dir(self, topic_ref: str, level: int, artifact_id: str) -> Path:
        return self.root / topic_ref / f"L{level}" / artifact_id

    def persist(self, artifact: Artifact) -> Path:
        artifact.validate()
        adir = self.artifact_dir(artifact.topic_ref, int(artifact.level), artifact.id)
        adir.mkdir(parents=True, exist_ok=True)

        narrative = artifact.unified.narrative.text
        parts = {
            "narrative.txt": narrative,
            "prompt.json": json.dumps(
                {
                    "schema_version": 1,
                    "profile_ref": artifact.unified.profile_ref,
                    "vocabulary_grade": artifact.unified.narrative.vocabulary_grade,
                    "prompt": artifact.unified.prompt.to_dict(),
                },
                indent=2,
            ),
            "profile.json": json.dumps(artifact.profile.to_dict(), indent=2),
            "cmap.json": json.dumps(artifact.cmap.to_dict(), indent=2),
            "alignment.json": json.dumps(
                {
                    "schema_version": 1,
                    "explanation": artifact.unified.alignment.to_dict(),
                    "report": artifact.alignment_report.to_dict(),
                },
                indent=2,
            ),
        }
        checksums = {}
        for name, content in parts.items():
            (adir / name).write_text(content, encoding="utf-8")
            checksums[name] = _sha256_text(content)

        image_src = self.root / artifact.image_ref.path
        image_bytes = artifact.image_bytes or image_src.read_bytes()
        (adir / "image.png").write_bytes(image_bytes)
        checksums["image.png"] = artifact.image_ref.sha256

        meta = {
            "schema_version": 1,
            "id": artifact.id,
            "topic_ref": artifact.topic_ref,
            "topic_name": artifact.topic_name,
            "grade": artifact.grade,
            "grade_band": artifact.grade_band.value,
            "domain": artifact.domain.value,
            "level": int(artifact.level),
            "exemplar_index": artifact.exemplar_index,
            "seed": artifact.seed,
            "image": artifact.image_ref.to_dict(),
            "provenance": dict(artifact.provenance),
            "checksums": checksums,
        }
        (adir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        self._journal(
            {
                "event": "artifact",
                "id": artifact.id,
                "topic_ref": artifact.topic_ref,
                "level": int(artifact.level),
                "exemplar_index": artifact.exemplar_index,
            }
        )
        return adir

    def load(self, artifact_id: str) -> Artifact:
        adir = self._find(artifact_id)
        if adir is None:
            raise DrawSimError(f"artifact not found: {artifact_id}")
        return self.load_dir(adir)

    def load_dir(self, adir: Path) -> Artifact:
        meta = json.loads((adir / "meta.json").read_text(encoding="utf-8"))
        checksums = meta["checksums"]
        contents: dict[str, str] = {}
        for name in _PART_FILES:
            text = (adir / name).read_text(encoding="utf-8")
            if _sha256_text(text) != checksums[name]:
                raise ChecksumError(f"{adir / name}: checksum mismatch")
            contents[name] = text

        image_bytes = (adir / "image.png").read_bytes()
        if hashlib.sha256(image_bytes).hexdigest() != checksums["image.png"]:
            raise ChecksumError(f"{adir / 'image.png'}: checksum mismatch")

        prompt_doc = json.loads(contents["prompt.json"])
        alignment_doc = json.loads(contents["alignment.json"])
        unified = UnifiedOutput.from_dict(
            {
                "narrative": {
                    "text": contents["narrative.txt"],
                    "vocabulary_grade": prompt_doc["vocabulary_grade"],
                },
                "prompt": prompt_doc["prompt"],
                "alignment": alignment_doc["explanation"],
                "profile_ref": prompt_doc["profile_ref"],
            }
        )
        report_doc = alignment_doc["report"]
        artifact = Artifact(
            id=meta["id"],
            topic_ref=meta["topic_ref"],
            topic_name=meta["topic_name"],
            grade=int(meta["grade"]),
            grade_band=GradeBand(meta["grade_band"]),
            domain=Domain(meta["domain"]),
            level=PerformanceLevel(int(meta["level"])),
            profile=CapabilityProfile.from_dict(json.loads(contents["profile.json"])),
            unified=unified,
            image_ref=ImageRef.from_dict(meta["image"]),
            cmap=ConceptMap.from_dict(json.loads(contents["cmap.json"])),
            alignment_report=AlignmentReport(
                uncovered_can_do=list(report_doc["uncovered_can_do"]),
                uncovered_cannot_yet_do=list(report_doc["uncovered_cannot_yet_do"]),
                contradictions=list(report_doc["contradictions"]),
                passed=bool(report_doc["passed"]),
            ),
            provenance=dict(meta["provenance"]),
            exemplar_index=int(meta["exemplar_index"]),
            seed=int(meta["seed"]),
            image_bytes=image_bytes,
        )
        return artifact

    def _find(self, artifact_id: str) -> Path | None:
        for meta_path in sorted(self.root.glob(f"*/L*/{artifact_id}/meta.json")):
            return meta_path.parent
        return None

    def scan_index(self) -> list[IndexEntry]:
        entries = []
        for meta_path in sorted(self.root.glob("*/L*/*/meta.json")):
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            entries.append(
                IndexEntry(
                    id=meta["id"],
                    topic_ref=meta["topic_ref"],
                    level=int(meta["level"]),
                    grade=int(meta["grade"]),
                    grade_band=meta["grade_band"],
                    domain=meta["domain"],
                    path=str(meta_path.parent.relative_to(self.root)),
                    exemplar_index=int(meta["exemplar_index"]),
                )
            )
        return entries

    def image_bytes(self, entry: IndexEntry) -> bytes:
        return (self.root / entry.path / "image.png").read_bytes()

    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def write_manifest(self, manifest: CorpusManifest) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path().write_text(
            json.dumps(manifest.to_dict(), indent=2), encoding="utf-8"
        )

    def load_manifest(self) -> CorpusManifest:
        return CorpusManifest.from_dict(
            json.loads(self.manifest_path().read_text(encoding="utf-8"))
        )

    def _journal(self, entry: dict) -> None:
        with self._journal_lock:
            with (self.root / "journal.ndjson").open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"ts": time.time(), **entry}) + "\n")


# ---------------------------------------------------------------------------
# Pipeline: one artifact, then the full grid
# ---------------------------------------------------------------------------


def generate_artifact(
    topic: TopicSpec,
    profile: CapabilityProfile,
    providers: ProviderSet,
    *,
    seed: int,
    root: Path,
    exemplar_index: int = 0,
    style_table=None,
    log: CallLog | None = None,
) -> Artifact:
    """Run the unified -> render -> map pipeline for one exemplar."""
    grade = topic.pe.grade
    unified = generate_unified(
        topic, grade, profile, providers.generation, seed=seed, style_table=style_table
    )
    report = verify_alignment(unified, profile)
    image_ref = render_drawing(
        unified.prompt.composed, providers.image, seed, root, log=log
    )
    cmap = generate_map(topic, profile, unified.prompt, providers.generation, seed=seed)

    artifact_id = hashlib.sha256(
        canonical_json(
            {
                "topic": topic.topic_ref,
                "level": int(profile.level),
                "seed": seed,
                "narrative": unified.narrative.text,
                "prompt": unified.prompt.composed,
                "image": image_ref.sha256,
            }
        ).encode()
    ).hexdigest()[:16]
    cmap.artifact_ref = artifact_id

    return Artifact(
        id=artifact_id,
        topic_ref=topic.topic_ref,
        topic_name=topic.topic_name,
        grade=grade,
        grade_band=topic.pe.grade_band,
        domain=topic.pe.domain,
        level=profile.level,
        profile=profile,
        unified=unified,
        image_ref=image_ref,
        cmap=cmap,
        alignment_report=report,
        provenance={
            "pipeline_version": PIPELINE_VERSION,
            "generation_provider": providers.generation.provider_id,
            "image_provider": providers.image.provider_id,
            "seed": seed,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        },
        exemplar_index=exemplar_index,
        seed=seed,
    )


def build_corpus(
    topics: list[TopicSpec],
    exemplars_per_cell: int,
    providers: ProviderSet,
    out_root: Path | str,
    *,
    seed: int = 0,
    concurrency: int = 1,
    style_table=None,
    log: CallLog | None = None,
) -> CorpusManifest:
    """Generate topics x 4 levels x exemplars, resumably.

    Every persisted artifact passes both validators; failures are
    quarantined per cell (recorded in build_status) and the build
    continues. Re-running completes only missing exemplars.
    """
    if exemplars_per_cell < 1:
        raise ValueError("exemplars_per_cell must be >= 1")
    store = ArtifactStore(out_root)
    store.root.mkdir(parents=True, exist_ok=True)

    ladders: dict[str, dict[PerformanceLevel, CapabilityProfile]] = {}
    for topic in topics:
        topic.validate()
        ladders[topic.topic_ref] = build_profile_ladder(
            topic, providers.generation, seed=derive_seed(seed, topic.topic_ref, "ladder")
        )

    existing: dict[tuple[str, int], set[int]] = {}
    for entry in store.scan_index():
        existing.setdefault((entry.topic_ref, entry.level), set()).add(entry.exemplar_index)

    build_status: dict[str, dict] = {}
    status_lock = threading.Lock()

    def run_cell(topic: TopicSpec, level: PerformanceLevel) -> None:
        key = CorpusManifest.cell_key(topic.topic_ref, int(level))
        done = existing.get((topic.topic_ref, int(level)), set())
        try:
            for k in range(exemplars_per_cell):
                if k in done:
                    continue
                art_seed = derive_seed(seed, topic.topic_ref, int(level), k)
                artifact = generate_artifact(
                    topic,
                    ladders[topic.topic_ref][level],
                    providers,
                    seed=art_seed,
                    root=store.root,
                    exemplar_index=k,
                    style_table=style_table,
                    log=log,
                )
                store.persist(artifact)
            with status_lock:
                build_status[key] = {"status": "ok"}
        except Exception as err:  # quarantine the cell, keep building
            with status_lock:
                build_status[key] = {"status": "failed", "error": f"{type(err).__name__}: {err}"}

    cells = [(topic, level) for topic in topics for level in PerformanceLevel]
    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            list(pool.map(lambda c: run_cell(*c), cells))
    else:
        for cell in cells:
            run_cell(*cell)

    index = store.scan_index()
    counts: dict[str, dict[str, int]] = {}
    for entry in index:
        counts.setdefault(entry.topic_ref, {}).setdefault(str(entry.level), 0)
        counts[entry.topic_ref][str(entry.level)] += 1
    manifest = CorpusManifest(
        topics=[t.topic_ref for t in topics],
        exemplars_per_cell=exemplars_per_cell,
        seed=seed,
        counts=counts,
        index=index,
        build_status=build_status,
    )
    store.write_manifest(manifest)
    return manifest


# ---------------------------------------------------------------------------
# Stratified sampling
# ---------------------------------------------------------------------------


@dataclass
class SamplingPlan:
    plan_id: str
    raters: list[str]
    per_rater: int
    strata: dict[str, list]
    assignment: dict[str, list[str]]
    seed: int
    allow_overlap: bool = False

    def all_ids(self) -> set[str]:
        return {aid for ids in self.assignment.values() for aid in ids}

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "plan_id": self.plan_id,
            "raters": list(self.raters),
            "per_rater": self.per_rater,
            "strata": {k: list(v) for k, v in self.strata.items()},
            "assignment": {k: list(v) for k, v in self.assignment.items()},
            "seed": self.seed,
            "allow_overlap": self.allow_overlap,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SamplingPlan":
        return cls(
            plan_id=data["plan_id"],
            raters=list(data["raters"]),
            per_rater=int(data["per_rater"]),
            strata={k: list(v) for k, v in data["strata"].items()},
            assignment={k: list(v) for k, v in data["assignment"].items()},
            seed=int(data["seed"]),
            allow_overlap=bool(data.get("allow_overlap", False)),
        )


def _pair_cycle(domains: list[str], bands: list[str]) -> list[tuple[str, str]]:
    """Enumerate (domain, band) pairs so consecutive windows stay balanced.

    When the counts are coprime a diagonal walk visits every pair exactly
    once per cycle and spreads both marginals; otherwise fall back to a
    greedy minimum-marginal order.
    """
    d, b = len(domains), len(bands)
    if math.gcd(d, b) == 1:
        return [(domains[i % d], bands[i % b]) for i in range(d * b)]
    pairs = []
    dom_count = {x: 0 for x in domains}
    band_count = {x: 0 for x in bands}
    remaining = {(x, y) for x in domains for y in bands}
    while remaining:
        pick = min(remaining, key=lambda p: (dom_count[p[0]] + band_count[p[1]], p))
        pairs.append(pick)
        remaining.remove(pick)
        dom_count[pick[0]] += 1
        band_count[pick[1]] += 1
    return pairs


def stratified_sample(
    manifest: CorpusManifest,
    raters: int,
    per_rater: int,
    seed: int,
    *,
    allow_overlap: bool = False,
) -> SamplingPlan:
    """Assign artifacts to raters, balanced across levels, domains, bands.

    Per rater: exactly per_rater/4 artifacts per level, domain and
    grade-span counts within +-1, no duplicates. Assignments are disjoint
    across raters unless allow_overlap is set. Deterministic in the seed.
    """
    if raters < 1 or per_rater < 1:
        raise InfeasibleSampleError("raters and per_rater must be >= 1")
    if per_rater % 4 != 0:
        raise InfeasibleSampleError(
            f"per_rater={per_rater} not divisible by 4 under the equal-level policy"
        )
    levels = [1, 2, 3, 4]
    domains = sorted({e.domain for e in manifest.index})
    bands = sorted({e.grade_band for e in manifest.index})
    if not domains:
        raise InfeasibleSampleError("manifest index is empty")

    rng = random.Random(seed)
    pools: dict[tuple[int, str, str], list[str]] = {}
    for entry in manifest.index:
        pools.setdefault((entry.level, entry.domain, entry.grade_band), []).append(entry.id)
    for key in sorted(pools):
        pools[key].sort()
        rng.shuffle(pools[key])

    pairs = _pair_cycle(domains, bands)
    pos = rng.randrange(len(pairs))
    rater_ids = [f"rater-{i + 1}" for i in range(raters)]
    assignment: dict[str, list[str]] = {}
    for rater in rater_ids:
        chosen: list[str] = []
        seen: set[str] = set()
        for level in levels:
            for _ in range(per_rater // 4):
                domain, band = pairs[pos % len(pairs)]
                pos += 1
                pool = pools.get((level, domain, band))
                if not pool:
                    raise InfeasibleSampleError(
                        f"stratum exhausted: level={level} domain={domain} grade_band={band}"
                    )
                if allow_overlap:
                    idx = next((i for i in range(len(pool) - 1, -1, -1) if pool[i] not in seen), None)
                    if idx is None:
                        raise InfeasibleSampleError(
                            f"stratum exhausted for rater {rater}: level={level} "
                            f"domain={domain} grade_band={band}"
                        )
                    aid = pool[idx]
                    pool.insert(0, pool.pop(idx))  # rotate so other raters reuse it
                else:
                    aid = pool.pop()
                seen.add(aid)
                chosen.append(aid)
        assignment[rater] = chosen

    plan = SamplingPlan(
        plan_id="",
        raters=rater_ids,
        per_rater=per_rater,
        strata={"levels": levels, "domains": domains, "grade_spans": bands},
        assignment=assignment,
        seed=seed,
        allow_overlap=allow_overlap,
    )
    plan.plan_id = "plan-" + hashlib.sha256(
        canonical_json(plan.to_dict()).encode()
    ).hexdigest()[:12]
    _check_plan(plan, manifest)
    return plan


def _check_plan(plan: SamplingPlan, manifest: CorpusManifest) -> None:
    by_id = {e.id: e for e in manifest.index}
    for rater, ids in plan.assignment.items():
        if len(ids) != plan.per_rater:
            raise InfeasibleSampleError(f"{rater}: expected {plan.per_rater} artifacts")
        if len(set(ids)) != len(ids):
            raise InfeasibleSampleError(f"{rater}: duplicate artifacts in assignment")
        level_counts: dict[int, int] = {}
        dom_counts: dict[str, int] = {}
        band_counts: dict[str, int] = {}
        for aid in ids:
            e = by_id[aid]
            level_counts[e.level] = level_counts.get(e.level, 0) + 1
            dom_counts[e.domain] = dom_counts.get(e.domain, 0) + 1
            band_counts[e.grade_band] = band_counts.get(e.grade_band, 0) + 1
        if set(level_counts.values()) != {plan.per_rater // 4}:
            raise InfeasibleSampleError(f"{rater}: unequal level counts {level_counts}")
        for label, counts in (("domain", dom_counts), ("grade span", band_counts)):
            if counts and max(counts.values()) - min(counts.values()) > 1:
                raise InfeasibleSampleError(f"{rater}: {label} counts unbalanced: {counts}")
