"""Deterministic offline providers.

Every provider here is a pure function of (request, seed): no network, no
global state, byte-identical results across runs. They back the whole test
suite and the offline CLI default.

* ``OfflineGenerationProvider`` answers the four structured templates
  (decompose / profile / unified / cmap). A small curated knowledge base
  pins realistic content for the bundled tutorial topics; every other
  valid standard gets template-synthesized content derived from its
  statement text.
* ``OfflineImageProvider`` is a procedural renderer: it parses the
  composed prompt into positive / negative / stylistic sentences and
  draws one labeled blob per positive sentence plus connecting arrows,
  so image complexity grows with the positive-constraint count.
* ``OfflineEmbeddingProvider`` hashes tokens into a fixed-dimension
  unit vector. The numbers are not semantically meaningful; they exist
  to exercise similarity arithmetic and pipeline wiring.
"""

from __future__ import annotations

import hashlib
import io
import math
import random
import re

from PIL import Image, ImageDraw

from drawsim.providers.base import StructuredRequest

_WORD_RE = re.compile(r"[a-z0-9']+")
_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")

_STOPWORDS = frozenset(
    """a an and are as at be between by can could develop for from have how in
    into is it its model not of on or represent represents such that the their
    them there this to under use used uses using with describe""".split()
)


def _stable_rng(*parts) -> random.Random:
    material = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _imperative(phrase: str) -> str:
    return phrase[0].upper() + phrase[1:] if phrase else phrase


def phrase_of(evidence_text: str) -> str:
    """Strip the 'The student can' prefix so the text reads as a verb phrase."""
    text = evidence_text.strip().rstrip(".")
    lowered = text.lower()
    for prefix in ("the student can ", "students can ", "can "):
        if lowered.startswith(prefix):
            return text[len(prefix) :]
    return text


def ladder_can_sizes(n: int) -> list[int]:
    """Default can-do sizes for a 4-level ladder over ``n`` evidence ids.

    Roughly 25/50/75/87.5 percent, clamped so every level keeps both a
    non-empty can-do and a non-empty cannot-yet-do set. This progression
    is a repo default, not a published value.
    """
    def half_up(x: float) -> int:
        return math.floor(x + 0.5)

    sizes: list[int] = []
    lo = 1
    for frac in (0.25, 0.5, 0.75, 0.875):
        v = max(lo, min(half_up(n * frac), n - 1))
        sizes.append(v)
        lo = v
    return sizes


# ---------------------------------------------------------------------------
# Curated knowledge base for the bundled tutorial topics
# ---------------------------------------------------------------------------

FIXTURE_EVIDENCE: dict[str, list[tuple[str, str]]] = {
    "3-LS1-1": [
        ("s1", "The student can draw and label the main stages in the life cycle of a flowering plant: germination, growth, reproduction (flowering), and wilting."),
        ("s2", "The student can include multiple plant types to demonstrate diversity."),
        ("s3", "The student can represent the cyclic nature of life cycles, showing repetition across generations."),
        ("s4", "The student can illustrate causal direction: each stage leads to the next, for example without germination there is no growth."),
        ("s5", "The student can explain that despite differences across plants, all life cycles share the same fundamental pattern."),
        ("s6", "The student can use patterns in the life cycle to make simple predictions, such as predicting growth or flowering periods."),
        ("s7", "The student can label less obvious details, such as the parts of the flower and the roots, even when focusing on complex stages."),
        ("s8", "The student can consistently apply life-cycle predictions to less familiar plant types."),
    ],
    "K-ESS3-1": [
        ("b1", "The student can draw an animal with key body parts labeled, such as eyes, legs, and mouth."),
        ("b2", "The student can depict habitat features where the animal lives, such as trees, water, or a burrow."),
        ("b3", "The student can show the animal near the food it needs."),
        ("b4", "The student can connect each need of the animal to something the habitat provides."),
        ("b5", "The student can show more than one plant or animal with its matching home."),
        ("b6", "The student can use simple lines or arrows to link each living thing to what it needs."),
    ],
    "5-ESS2-1": [
        ("ev1", "The student can draw the sun as the energy source that heats the water."),
        ("ev2", "The student can show evaporation with arrows rising from the water."),
        ("ev3", "The student can show water vapor condensing into clouds."),
        ("ev4", "The student can show precipitation falling from the clouds as rain."),
        ("ev5", "The student can connect clouds to precipitation and show the cycle returning water to the ground."),
        ("ev6", "The student can label each stage and use arrows to show the direction of movement."),
    ],
}

# Pinned can-do chains for the tutorial topics (subset-monotone by level).
FIXTURE_LADDER: dict[str, dict[int, list[str]]] = {
    "3-LS1-1": {
        1: ["s1", "s2"],
        2: ["s1", "s2", "s3", "s4"],
        3: ["s1", "s2", "s3", "s4", "s5"],
        4: ["s1", "s2", "s3", "s4", "s5", "s6"],
    },
    "5-ESS2-1": {
        1: ["ev2"],
        2: ["ev1", "ev2", "ev6"],
        3: ["ev1", "ev2", "ev3", "ev6"],
        4: ["ev1", "ev2", "ev3", "ev4", "ev6"],
    },
}

FIXTURE_GLOSS: dict[tuple[str, int], dict[str, str]] = {
    ("3-LS1-1", 4): {
        "s7": "Occasionally omits less obvious labels or details when focusing on complex stages.",
        "s8": "Inconsistently applies predictions for less familiar plant types.",
    },
}

_PLANT_NARRATIVE_L4 = (
    "I'm going to draw the life cycle of a flowering plant. First, I'll start with "
    "the seed stage where germination happens, and I'll carefully draw a small seed "
    "with a sprout poking out. Next, I'll draw a young plant with green leaves and "
    "use an arrow to show that growth follows germination. After that, I'll draw the "
    "flowering stage with a sunflower and a rose, so different plants show the same "
    "kind of cycle. Then I'll draw the wilting stage with drooping leaves and petals, "
    "and I'll use arrows so the cycle goes on and on. I'll add labels like Seed, "
    "Young Plant, Flowering, and Wilting. While I work, I might forget to label some "
    "smaller details, like the parts of the flower or the roots, but I want to get "
    "the main stages right. At the end, I'll try to predict when the plant will "
    "flower again, but for less common plants I might not be too sure about the timing."
)

_WATER_NARRATIVE_L2 = (
    "I'm drawing the water cycle. I know the sun makes the water go up, so I'll draw "
    "a big sun and arrows pointing up from the lake. I'll write labels for the water "
    "and for my arrows. I don't really know how the water gets back down to the "
    "ground, so I might leave that part out of my picture."
)

FIXTURE_UNIFIED: dict[tuple[str, int], dict] = {
    ("3-LS1-1", 4): {
        "narrative": _PLANT_NARRATIVE_L4,
        "positives": [
            ("s1", "Show the four main stages of the flowering plant life cycle in order, seed germination, growth, flowering, and wilting, each labeled with clear text: Seed, Young Plant, Flowering, Wilting"),
            ("s2", "Include more than one kind of plant, such as a sunflower and a rose, to show diversity"),
            ("s3", "Display the cyclic nature using repetitive arrows circling back to seed germination"),
            ("s4", "Use arrows to indicate the transition from each stage to the next"),
            ("s5", "Keep the same cycle pattern recognizable for every plant drawn"),
            ("s6", "Add a small note predicting when the familiar plant will flower next"),
        ],
        "negatives": [
            ("s7", "Do NOT label the smaller details, such as the parts of the flower or the roots"),
            ("s8", "Do NOT mark exact timing predictions on the less familiar plant"),
        ],
        "stylistic": [
            "Use clear, bright colors to make main elements distinct, with a hand-drawn school project style",
            "Draw like a Grade 3 student, hand-drawn crayon style",
        ],
        "alignment": (
            "The image prompt captures all main elements in the capability profile, "
            "including the life cycle stages and plant diversity. It stays focused on "
            "larger conceptual aspects rather than fine details, so flower parts and "
            "roots are left unlabeled, and it avoids precise predictions for the less "
            "familiar plant, consistent with the remaining gaps."
        ),
    },
    ("5-ESS2-1", 2): {
        "narrative": _WATER_NARRATIVE_L2,
        "positives": [
            ("ev1", "Draw a bright sun in the sky heating the water"),
            ("ev2", "Draw arrows pointing up from the water to show it rising"),
            ("ev6", "Label the water and the rising arrows with simple words"),
        ],
        "negatives": [
            ("ev3", "Do NOT include clouds"),
            ("ev4", "Do NOT include rain falling from clouds"),
            ("ev5", "Do NOT connect the cycle back to the ground"),
        ],
        "stylistic": None,  # fall through to the grade-derived defaults
        "alignment": (
            "The prompt shows the sun and rising water the student understands, and it "
            "deliberately omits clouds, rain, and the return path to the ground, which "
            "the student cannot yet connect."
        ),
    },
}

# Concept-map label overrides: evidence id -> (observation, understanding)
# for the mastered reading and the misconception reading of that feature.
FIXTURE_MAP_LABELS: dict[str, dict[str, dict[str, tuple[str, str]]]] = {
    "5-ESS2-1": {
        "can": {
            "ev1": ("A sun is drawn heating the water", "Understands the sun drives the cycle"),
            "ev2": ("Arrows point up from the water", "Understands Evaporation"),
            "ev3": ("Clouds form above the water", "Understands Condensation"),
            "ev4": ("Rain falls from the clouds", "Understands Precipitation"),
            "ev6": ("Stages are labeled with arrows", "Uses labels and direction correctly"),
        },
        "cannot": {
            "ev3": ("No clouds appear in the sky", "Does not yet understand Condensation"),
            "ev4": ("No rain is shown", "Does not yet understand Precipitation"),
            "ev5": ("The cycle never returns to the ground", "Does not yet see the cycle closing"),
        },
    },
    "3-LS1-1": {
        "can": {
            "s1": ("All four stages drawn in order and labeled", "Understands the life cycle sequence"),
            "s2": ("Two plant types drawn, a sunflower and a rose", "Understands that diverse plants share life cycles"),
            "s3": ("Arrows circle back to the seed", "Understands that cycles repeat across generations"),
            "s4": ("Arrows connect each stage to the next", "Understands the causal order of stages"),
            "s5": ("The same stage pattern appears for both plants", "Generalizes the pattern across species"),
            "s6": ("A prediction note sits beside the familiar plant", "Uses patterns to make simple predictions"),
        },
        "cannot": {
            "s7": ("Flower parts and roots are unlabeled", "Fine-detail labeling is not yet consistent"),
            "s8": ("No timing prediction on the rose", "Predictions are not yet applied to unfamiliar plants"),
        },
    },
}


# ---------------------------------------------------------------------------
# Generation provider
# ---------------------------------------------------------------------------


class OfflineGenerationProvider:
    """Seeded template-filling generator for the four structured schemas."""

    provider_id = "offline-gen-v1"

    def __init__(self, base_seed: int = 0):
        self.base_seed = base_seed

    def generate(self, req: StructuredRequest) -> dict:
        handler = {
            "decompose": self._decompose,
            "profile": self._profile,
            "unified": self._unified,
            "cmap": self._cmap,
        }.get(req.template_id)
        if handler is None:
            raise ValueError(f"offline provider has no template {req.template_id!r}")
        return handler(req)

    def _rng(self, req: StructuredRequest, *parts) -> random.Random:
        return _stable_rng(self.base_seed, req.seed, req.template_id, *parts)

    # -- decompose ----------------------------------------------------------

    def _decompose(self, req: StructuredRequest) -> dict:
        code = req.variables["code"]
        fixture = FIXTURE_EVIDENCE.get(code)
        if fixture is not None:
            return {"statements": [{"id": i, "text": t} for i, t in fixture]}

        rng = self._rng(req, code)
        keywords = self._keywords(req.variables)
        count = 5 + rng.randrange(4)
        templates = [
            "The student can draw the main parts of {a}.",
            "The student can label {a} with simple text.",
            "The student can use arrows to show how {a} relates to {b}.",
            "The student can show {a} in a clear spatial arrangement.",
            "The student can include details that explain {a}.",
            "The student can represent how {a} changes over time.",
            "The student can connect {a} to {b} in the drawing.",
            "The student can add a short caption describing {a}.",
        ]
        statements = []
        for i in range(count):
            a = keywords[i % len(keywords)]
            b = keywords[(i + 1) % len(keywords)]
            text = templates[i % len(templates)].format(a=a, b=b)
            statements.append({"id": f"e{i + 1}", "text": text})
        return {"statements": statements}

    @staticmethod
    def _keywords(variables: dict) -> list[str]:
        corpus = " ".join(
            [
                str(variables.get("statement", "")),
                " ".join(variables.get("dcis", []) or []),
                " ".join(variables.get("cccs", []) or []),
            ]
        ).lower()
        seen: list[str] = []
        for word in _WORD_RE.findall(corpus):
            if len(word) >= 4 and word not in _STOPWORDS and word not in seen:
                seen.append(word)
        return seen[:6] or ["the system", "the process"]

    # -- profile ------------------------------------------------------------

    def _profile(self, req: StructuredRequest) -> dict:
        topic_ref = req.variables["topic_ref"]
        level = int(req.variables["level"])
        evidence = req.variables["evidence"]
        ids = [item["id"] for item in evidence]
        texts = {item["id"]: item["text"] for item in evidence}

        pinned = FIXTURE_LADDER.get(topic_ref)
        if pinned is not None:
            can_ids = [i for i in ids if i in set(pinned[level])]
        else:
            # Shuffle order depends on the topic and seed but NOT the level,
            # so per-level prefixes form a subset chain for ladder builds.
            order = list(ids)
            _stable_rng(self.base_seed, req.seed, "profile-order", topic_ref).shuffle(order)
            size = ladder_can_sizes(len(ids))[level - 1]
            chosen = set(order[:size])
            can_ids = [i for i in ids if i in chosen]
        cannot_ids = [i for i in ids if i not in set(can_ids)]

        gloss = dict(FIXTURE_GLOSS.get((topic_ref, level), {}))
        for cid in cannot_ids:
            gloss.setdefault(cid, f"Not yet evident in drawings: {phrase_of(texts[cid])}.")
        return {"can_do": can_ids, "cannot_yet_do": cannot_ids, "gloss": gloss}

    # -- unified ------------------------------------------------------------

    def _unified(self, req: StructuredRequest) -> dict:
        topic_ref = req.variables["topic_ref"]
        level = int(req.variables["level"])
        grade = int(req.variables["grade"])
        can = req.variables["can"]
        cannot = req.variables["cannot"]
        marker = req.variables["marker"]
        style_hint = req.variables["style_hint"]

        fixture = FIXTURE_UNIFIED.get((topic_ref, level))
        if fixture is not None:
            stylistic = fixture["stylistic"] or [style_hint, marker]
            return {
                "narrative": fixture["narrative"],
                "vocabulary_grade": grade,
                "positives": [
                    {"evidence_id": i, "text": t} for i, t in fixture["positives"]
                ],
                "negatives": [
                    {"evidence_id": i, "text": t} for i, t in fixture["negatives"]
                ],
                "stylistic": list(stylistic),
                "exclusions": [],
                "alignment": {
                    "text": fixture["alignment"],
                    "covered_can": [i for i, _ in fixture["positives"]],
                    "covered_cannot": [i for i, _ in fixture["negatives"]],
                },
            }

        rng = self._rng(req, topic_ref, level)
        topic_name = str(req.variables["topic_name"]) or topic_ref
        narrative: list[str] = [f"I'm going to draw {topic_name[0].lower() + topic_name[1:]}."]
        for item in can[:4]:
            ph = phrase_of(item["text"])
            narrative.append(
                rng.choice([f"I know how to {ph}.", f"I'll make sure to {ph}.", f"I can {ph}."])
            )
        if cannot:
            ph = phrase_of(cannot[0]["text"])
            narrative.append(
                rng.choice(
                    [
                        f"I'm not sure how to {ph}, so I might leave that part out.",
                        f"I don't really know how to {ph}, so maybe I'll skip it.",
                        f"I might forget to {ph} because that part is tricky for me.",
                    ]
                )
            )
        narrative.append("I hope my picture shows what I know.")

        # Evidence phrases already start with a verb, so the positive
        # constraint is the phrase itself as an imperative.
        positives = [
            {"evidence_id": item["id"], "text": _imperative(phrase_of(item["text"]))}
            for item in can
        ]
        negatives = [
            {"evidence_id": item["id"], "text": f"Do NOT {phrase_of(item['text'])}"}
            for item in cannot
        ]
        return {
            "narrative": " ".join(narrative),
            "vocabulary_grade": grade,
            "positives": positives,
            "negatives": negatives,
            "stylistic": [style_hint, marker],
            "exclusions": [],
            "alignment": {
                "text": (
                    f"The prompt asks for {len(can)} demonstrated skills and omits "
                    f"{len(cannot)} skills the student has not yet developed, matching "
                    f"the Level {level} profile."
                ),
                "covered_can": [item["id"] for item in can],
                "covered_cannot": [item["id"] for item in cannot],
            },
        }

    # -- concept map ---------------------------------------------------------

    def _cmap(self, req: StructuredRequest) -> dict:
        topic_ref = req.variables["topic_ref"]
        topic_name = req.variables["topic_name"]
        level = int(req.variables["level"])
        can = req.variables["can"]
        cannot = req.variables["cannot"]
        overrides = FIXTURE_MAP_LABELS.get(topic_ref, {})

        nodes = [
            {"id": "t0", "layer": "Topic", "label": f"{topic_name} ({topic_ref})",
             "misconception": False, "evidence_ref": None}
        ]
        edges: list[tuple[str, str]] = []

        for item in can:
            eid = item["id"]
            ph = phrase_of(item["text"])
            obs_label, und_label = overrides.get("can", {}).get(
                eid, (f"Shows: {ph}", f"Understands: {ph}")
            )
            nodes.append({"id": f"o_{eid}", "layer": "Observation", "label": obs_label,
                          "misconception": False, "evidence_ref": eid})
            nodes.append({"id": f"u_{eid}", "layer": "Understanding", "label": und_label,
                          "misconception": False, "evidence_ref": eid})
            edges.append(("t0", f"o_{eid}"))
            edges.append((f"o_{eid}", f"u_{eid}"))

        feedback_cap = 6
        for k, item in enumerate(cannot):
            eid = item["id"]
            ph = phrase_of(item["text"])
            obs_label, und_label = overrides.get("cannot", {}).get(
                eid, (f"Missing or unclear: {ph}", f"Does not yet understand: {ph}")
            )
            nodes.append({"id": f"o_{eid}", "layer": "Observation", "label": obs_label,
                          "misconception": False, "evidence_ref": eid})
            nodes.append({"id": f"u_{eid}", "layer": "Understanding", "label": und_label,
                          "misconception": True, "evidence_ref": eid})
            edges.append(("t0", f"o_{eid}"))
            edges.append((f"o_{eid}", f"u_{eid}"))
            if level < 4:
                # Feedback attaches only to misconceptions; shared children keep
                # the map within the feedback budget for large gap sets.
                fid = f"f_{min(k, feedback_cap - 1)}"
                if k < feedback_cap:
                    nodes.append({"id": fid, "layer": "Feedback",
                                  "label": f"Suggested next step: revisit {ph} with a guided example",
                                  "misconception": False, "evidence_ref": eid})
                edges.append((f"u_{eid}", fid))
        return {"nodes": nodes, "edges": edges}


# ---------------------------------------------------------------------------
# Image provider
# ---------------------------------------------------------------------------


def split_prompt_sentences(prompt: str) -> tuple[list[str], list[str], list[str]]:
    """Split a composed prompt into (positive, negative, stylistic) sentences.

    Classification is keyword-based: omission wording marks a negative,
    style wording marks a stylistic, everything else is a positive scene
    sentence. Approximate by design; only the offline renderer relies on it.
    """
    positives, negatives, stylistic = [], [], []
    for raw in _SENTENCE_RE.split(prompt.strip()):
        sentence = raw.strip()
        if not sentence:
            continue
        lowered = sentence.lower()
        if any(m in lowered for m in ("do not ", "don't ", "leave out", "avoid ", "omit ", "without ", "leave ")):
            negatives.append(sentence)
        elif "style" in lowered or "draw like a" in lowered:
            stylistic.append(sentence)
        else:
            positives.append(sentence)
    return positives, negatives, stylistic


class OfflineImageProvider:
    """Procedural placeholder renderer, deterministic in (prompt, seed)."""

    provider_id = "offline-img-v1"

    def __init__(self, size: int = 512):
        self.size = size

    def generate_image(self, prompt: str, seed: int) -> bytes:
        if not prompt.strip():
            raise ValueError("prompt must be non-empty")
        positives, _negatives, _stylistic = split_prompt_sentences(prompt)
        n = max(1, min(len(positives), 12))
        digest = hashlib.sha256(f"{prompt}:{seed}".encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))

        img = Image.new("RGB", (self.size, self.size), "white")
        draw = ImageDraw.Draw(img)
        cx = cy = self.size // 2
        ring = int(self.size * 0.33)

        centers: list[tuple[int, int]] = []
        for i in range(n):
            angle = 2 * math.pi * i / n + rng.uniform(-0.08, 0.08)
            x = int(cx + ring * math.cos(angle)) + rng.randrange(-10, 11)
            y = int(cy + ring * math.sin(angle)) + rng.randrange(-10, 11)
            centers.append((x, y))

        for i, (x, y) in enumerate(centers):
            r = 34 + rng.randrange(14)
            draw.ellipse([x - r, y - r, x + r, y + r], outline="black", width=3)
            label = self._label_for(positives[i] if i < len(positives) else "", i)
            draw.text((x - 4 * len(label) // 2, y + r + 4), label, fill="black")

        for i in range(len(centers) - 1):
            self._arrow(draw, centers[i], centers[i + 1])

        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    @staticmethod
    def _label_for(sentence: str, index: int) -> str:
        words = [w for w in _WORD_RE.findall(sentence.lower()) if len(w) >= 3]
        if not words:
            return f"part{index + 1}"
        return max(words, key=len)[:12]

    @staticmethod
    def _arrow(draw: ImageDraw.ImageDraw, a: tuple[int, int], b: tuple[int, int]) -> None:
        ax, ay = a
        bx, by = b
        dx, dy = bx - ax, by - ay
        dist = math.hypot(dx, dy) or 1.0
        # shorten so the line starts/ends at blob boundaries
        t0, t1 = 50 / dist, 1 - 50 / dist
        if t1 <= t0:
            return
        x0, y0 = ax + dx * t0, ay + dy * t0
        x1, y1 = ax + dx * t1, ay + dy * t1
        draw.line([x0, y0, x1, y1], fill="black", width=3)
        ux, uy = dx / dist, dy / dist
        px, py = -uy, ux
        head = [
            (x1, y1),
            (x1 - 14 * ux + 7 * px, y1 - 14 * uy + 7 * py),
            (x1 - 14 * ux - 7 * px, y1 - 14 * uy - 7 * py),
        ]
        draw.polygon(head, fill="black")


# ---------------------------------------------------------------------------
# Embedding provider
# ---------------------------------------------------------------------------


class OfflineEmbeddingProvider:
    """Seeded token-hash projection into a unit vector of fixed dimension.

    Not semantically meaningful; sufficient for testing similarity
    aggregation arithmetic and pipeline wiring.
    """

    provider_id = "offline-embed-v1"

    def __init__(self, dim: int = 256):
        self.dim = dim
        self._token_cache: dict[str, list[float]] = {}

    def embed(self, content: str | bytes) -> list[float]:
        tokens = self._tokens(content)
        if not tokens:
            raise ValueError("cannot embed empty content")
        acc = [0.0] * self.dim
        for tok in tokens:
            vec = self._token_vec(tok)
            for j in range(self.dim):
                acc[j] += vec[j]
        norm = math.sqrt(sum(v * v for v in acc))
        return [v / norm for v in acc]

    def _tokens(self, content: str | bytes) -> list[str]:
        if isinstance(content, bytes):
            return [
                "b:" + hashlib.sha256(content[i : i + 128]).hexdigest()[:10]
                for i in range(0, len(content), 128)
            ]
        return _WORD_RE.findall(content.lower())

    def _token_vec(self, token: str) -> list[float]:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.sha256(f"tok:{self.dim}:{token}".encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        vec = [rng.gauss(0.0, 1.0) for _ in range(self.dim)]
        self._token_cache[token] = vec
        return vec
