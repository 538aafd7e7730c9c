"""Four-layer diagnostic concept maps.

Topic -> Observation -> Understanding -> Feedback, edges only between
adjacent layers, feedback attached only to misconceptions. Maps are
generated from the drawing specification (profile + prompt), never from
the rendered image, and must pass structural validation before rendering.

Validator rule ids:
    topic-count                   exactly one Topic node required
    empty-label                   node label must be non-empty
    duplicate-node-id             node ids must be unique
    misconception-outside-understanding
                                  misconception flag only on Understanding
    dangling-edge                 edge endpoint is not a known node
    non-adjacent-or-backward-edge edge must go layer k -> layer k+1
    cycle                         graph must be acyclic
    missing-observation           at least one Observation node
    missing-understanding         at least one Understanding node
    orphan-observation            Observation needs the Topic as parent
    orphan-understanding          Understanding needs an Observation parent
    feedback-orphan               Feedback needs at least one parent
    feedback-on-correct           Feedback parents must be misconceptions
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from drawsim.errors import MapGenerationError
from drawsim.profiles import CapabilityProfile, PerformanceLevel
from drawsim.providers import GenerationProvider, StructuredRequest, generate_structured
from drawsim.standards import TopicSpec
from drawsim.synthesis import ImagePromptSpec


class Layer(str, Enum):
    TOPIC = "Topic"
    OBSERVATION = "Observation"
    UNDERSTANDING = "Understanding"
    FEEDBACK = "Feedback"

    @property
    def depth(self) -> int:
        return _LAYER_DEPTH[self]


_LAYER_DEPTH = {
    Layer.TOPIC: 0,
    Layer.OBSERVATION: 1,
    Layer.UNDERSTANDING: 2,
    Layer.FEEDBACK: 3,
}


@dataclass
class MapNode:
    id: str
    layer: Layer
    label: str
    misconception: bool = False
    evidence_ref: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "layer": self.layer.value,
            "label": self.label,
            "misconception": self.misconception,
            "evidence_ref": self.evidence_ref,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MapNode":
        return cls(
            id=data["id"],
            layer=Layer(data["layer"]),
            label=data["label"],
            misconception=bool(data.get("misconception", False)),
            evidence_ref=data.get("evidence_ref"),
        )


@dataclass
class ConceptMap:
    nodes: list[MapNode]
    edges: list[tuple[str, str]]
    artifact_ref: str | None = None

    def node_by_id(self) -> dict[str, MapNode]:
        return {n.id: n for n in self.nodes}

    def misconception_nodes(self) -> list[MapNode]:
        return [n for n in self.nodes if n.layer is Layer.UNDERSTANDING and n.misconception]

    def layer_nodes(self, layer: Layer) -> list[MapNode]:
        return [n for n in self.nodes if n.layer is layer]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [list(e) for e in self.edges],
            "artifact_ref": self.artifact_ref,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConceptMap":
        return cls(
            nodes=[MapNode.from_dict(n) for n in data["nodes"]],
            edges=[(a, b) for a, b in data["edges"]],
            artifact_ref=data.get("artifact_ref"),
        )


@dataclass
class Violation:
    rule: str
    locus: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {"rule": self.rule, "locus": self.locus, "detail": self.detail}


@dataclass
class MapValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "passed": self.passed,
            "violations": [v.to_dict() for v in self.violations],
        }


def validate_map(cmap: ConceptMap) -> MapValidationReport:
    """Pure structural validation; failures are report entries, not errors."""
    violations: list[Violation] = []

    seen: set[str] = set()
    for node in cmap.nodes:
        if node.id in seen:
            violations.append(Violation("duplicate-node-id", node.id))
        seen.add(node.id)
        if not node.label.strip():
            violations.append(Violation("empty-label", node.id))
        if node.misconception and node.layer is not Layer.UNDERSTANDING:
            violations.append(
                Violation("misconception-outside-understanding", node.id, node.layer.value)
            )

    by_id = cmap.node_by_id()
    topics = cmap.layer_nodes(Layer.TOPIC)
    if len(topics) != 1:
        violations.append(Violation("topic-count", "<map>", f"found {len(topics)}"))
    if not cmap.layer_nodes(Layer.OBSERVATION):
        violations.append(Violation("missing-observation", "<map>"))
    if not cmap.layer_nodes(Layer.UNDERSTANDING):
        violations.append(Violation("missing-understanding", "<map>"))

    parents: dict[str, list[str]] = {n.id: [] for n in cmap.nodes}
    adjacency_ok_edges: list[tuple[str, str]] = []
    for src, dst in cmap.edges:
        locus = f"{src}->{dst}"
        if src not in by_id or dst not in by_id:
            violations.append(Violation("dangling-edge", locus))
            continue
        if by_id[dst].layer.depth != by_id[src].layer.depth + 1:
            violations.append(
                Violation(
                    "non-adjacent-or-backward-edge",
                    locus,
                    f"{by_id[src].layer.value} -> {by_id[dst].layer.value}",
                )
            )
            continue
        adjacency_ok_edges.append((src, dst))
        parents[dst].append(src)

    # The layer rule forces acyclicity; assert it anyway over all non-dangling
    # edges so corrupted inputs cannot slip through.
    real_edges = [
        (s, d) for s, d in cmap.edges if s in by_id and d in by_id
    ]
    if _has_cycle(list(by_id), real_edges):
        violations.append(Violation("cycle", "<map>"))

    for node in cmap.nodes:
        if node.layer is Layer.OBSERVATION:
            if not any(by_id[p].layer is Layer.TOPIC for p in parents[node.id]):
                violations.append(Violation("orphan-observation", node.id))
        elif node.layer is Layer.UNDERSTANDING:
            if not any(by_id[p].layer is Layer.OBSERVATION for p in parents[node.id]):
                violations.append(Violation("orphan-understanding", node.id))
        elif node.layer is Layer.FEEDBACK:
            if not parents[node.id]:
                violations.append(Violation("feedback-orphan", node.id))
            else:
                for p in parents[node.id]:
                    parent = by_id[p]
                    if parent.layer is Layer.UNDERSTANDING and not parent.misconception:
                        violations.append(
                            Violation("feedback-on-correct", node.id, f"parent {p}")
                        )
    return MapValidationReport(violations=violations)


def _has_cycle(node_ids: list[str], edges: list[tuple[str, str]]) -> bool:
    indegree = {n: 0 for n in node_ids}
    out: dict[str, list[str]] = {n: [] for n in node_ids}
    for s, d in edges:
        out[s].append(d)
        indegree[d] += 1
    queue = [n for n in node_ids if indegree[n] == 0]
    visited = 0
    while queue:
        n = queue.pop()
        visited += 1
        for m in out[n]:
            indegree[m] -= 1
            if indegree[m] == 0:
                queue.append(m)
    return visited != len(node_ids)


# Generation-time size targets (the validator itself only requires the
# >=1 observation/understanding minimum so small handmade maps render).
MAX_OBSERVATIONS = 8
MAX_UNDERSTANDINGS = 8
MAX_FEEDBACK = 6


def generate_map(
    topic: TopicSpec,
    profile: CapabilityProfile,
    prompt: ImagePromptSpec,
    gen: GenerationProvider,
    *,
    seed: int = 0,
    max_repairs: int = 1,
) -> ConceptMap:
    """Generate the diagnostic map from the drawing specification.

    Post: structural validation passes, every cannot-yet-do id has a
    misconception-flagged Understanding node, and (below Advanced) every
    misconception node has at least one Feedback child.
    """
    profile.validate(topic)
    evidence_by_id = {e.id: e for e in topic.evidence}
    req = StructuredRequest(
        template_id="cmap",
        variables={
            "topic_ref": topic.topic_ref,
            "topic_name": topic.topic_name,
            "level": int(profile.level),
            "can": [{"id": i, "text": evidence_by_id[i].text} for i in profile.can_do],
            "cannot": [{"id": i, "text": evidence_by_id[i].text} for i in profile.cannot_yet_do],
            "positives": [{"text": t} for t in prompt.positive],
            "negatives": [{"text": t} for t in prompt.negative],
        },
        expected_schema="cmap",
        seed=seed,
    )

    problems: list[str] = []
    for _ in range(1 + max_repairs):
        resp = generate_structured(req, gen, max_repairs=max_repairs)
        cmap = ConceptMap(
            nodes=[MapNode.from_dict(n) for n in resp["nodes"]],
            edges=[(a, b) for a, b in resp["edges"]],
        )
        problems = [
            f"{v.rule} at {v.locus}" for v in validate_map(cmap).violations
        ]
        problems.extend(_diagnostic_gaps(cmap, profile))
        if not problems:
            return cmap
        req = req.with_variables(validation_error="; ".join(problems))
    raise MapGenerationError(
        f"{profile.profile_id}: concept map invalid after repair", violations=problems
    )


def _diagnostic_gaps(cmap: ConceptMap, profile: CapabilityProfile) -> list[str]:
    gaps: list[str] = []
    miscon_by_ref: dict[str, list[MapNode]] = {}
    for node in cmap.misconception_nodes():
        if node.evidence_ref:
            miscon_by_ref.setdefault(node.evidence_ref, []).append(node)
    for eid in profile.cannot_yet_do:
        if eid not in miscon_by_ref:
            gaps.append(f"cannot-yet-do id {eid} has no misconception node")
    if profile.level is not PerformanceLevel.ADVANCED:
        children: dict[str, list[str]] = {}
        by_id = cmap.node_by_id()
        for s, d in cmap.edges:
            if s in by_id and d in by_id and by_id[d].layer is Layer.FEEDBACK:
                children.setdefault(s, []).append(d)
        for node in cmap.misconception_nodes():
            if not children.get(node.id):
                gaps.append(f"misconception node {node.id} has no feedback child")
    return gaps


def render_map(cmap: ConceptMap) -> str:
    """Emit deterministic DOT text for a validated map.

    Styling: feedback nodes red, correct understanding green, misconception
    understanding red-outlined, layers ranked top to bottom.
    """
    report = validate_map(cmap)
    if not report.passed:
        rules = ", ".join(f"{v.rule}@{v.locus}" for v in report.violations)
        raise ValueError(f"refusing to render invalid map: {rules}")

    lines = [
        "digraph ConceptMap {",
        "  rankdir=TB;",
        '  node [shape=box, style="rounded,filled", fillcolor=white];',
    ]
    for layer in (Layer.TOPIC, Layer.OBSERVATION, Layer.UNDERSTANDING, Layer.FEEDBACK):
        members = cmap.layer_nodes(layer)
        if members:
            ids = "; ".join(f'"{n.id}"' for n in members)
            lines.append(f"  {{ rank=same; {ids}; }}")
    for node in cmap.nodes:
        attrs = [f'label="{_dot_escape(node.label)}"']
        if node.layer is Layer.TOPIC:
            attrs.append("fillcolor=lightblue")
        elif node.layer is Layer.OBSERVATION:
            attrs.append("fillcolor=lightyellow")
        elif node.layer is Layer.UNDERSTANDING:
            if node.misconception:
                attrs.append("color=red")
                attrs.append("penwidth=2")
            else:
                attrs.append("fillcolor=green")
        else:
            attrs.append("fillcolor=red")
            attrs.append("fontcolor=white")
        lines.append(f'  "{node.id}" [{", ".join(attrs)}];')
    for src, dst in cmap.edges:
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def map_to_text(cmap: ConceptMap) -> str:
    """Flatten labels depth-first with layer prefixes (embedding input)."""
    by_id = cmap.node_by_id()
    children: dict[str, list[str]] = {n.id: [] for n in cmap.nodes}
    for s, d in cmap.edges:
        if s in children and d in by_id:
            children[s].append(d)

    lines: list[str] = []
    visited: set[str] = set()

    def visit(node_id: str) -> None:
        if node_id in visited:
            return
        visited.add(node_id)
        node = by_id[node_id]
        lines.append(f"{node.layer.value}: {node.label}")
        for child in children[node_id]:
            visit(child)

    for node in cmap.layer_nodes(Layer.TOPIC):
        visit(node.id)
    for node in cmap.nodes:  # anything unreachable, in input order
        visit(node.id)
    return "\n".join(lines)
