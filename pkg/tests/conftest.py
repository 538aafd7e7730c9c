from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from drawsim.config import default_provider_set
from drawsim.corpus import CorpusManifest, IndexEntry, build_corpus
from drawsim.standards import (
    bundled_standards_path,
    decompose,
    load_standards,
    load_topic_names,
)

DOMAINS = ["EarthSpace", "Life", "Physical"]
BANDS = ["K-2", "3-5", "6-8", "9-12"]
BAND_GRADES = {"K-2": 1, "3-5": 4, "6-8": 7, "9-12": 10}


@pytest.fixture(scope="session")
def providers():
    return default_provider_set()


@pytest.fixture(scope="session")
def bundled_pes():
    return {pe.code: pe for pe in load_standards(bundled_standards_path())}


@pytest.fixture(scope="session")
def topic_names():
    return load_topic_names(bundled_standards_path())


@pytest.fixture(scope="session")
def plant_topic(providers, bundled_pes, topic_names):
    return decompose(
        bundled_pes["3-LS1-1"], providers.generation, topic_name=topic_names["3-LS1-1"]
    )


@pytest.fixture(scope="session")
def water_topic(providers, bundled_pes, topic_names):
    return decompose(
        bundled_pes["5-ESS2-1"], providers.generation, topic_name=topic_names["5-ESS2-1"]
    )


@pytest.fixture(scope="session")
def generic_topic(providers, bundled_pes, topic_names):
    """A topic with no curated fixtures (exercises the generic templates)."""
    return decompose(
        bundled_pes["MS-PS2-2"], providers.generation, topic_name=topic_names["MS-PS2-2"]
    )


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory, providers, plant_topic, water_topic):
    """2 topics x 4 levels x 2 exemplars, shared across read-only tests."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = build_corpus(
        [plant_topic, water_topic], 2, providers, root, seed=11, concurrency=2
    )
    return root, manifest


def synthetic_manifest(topics: int = 100, exemplars: int = 25) -> CorpusManifest:
    """Index-only manifest shaped like the full production corpus."""
    index = []
    counts: dict[str, dict[str, int]] = {}
    topic_refs = []
    for t in range(topics):
        domain = DOMAINS[t % len(DOMAINS)]
        band = BANDS[t % len(BANDS)]
        topic_ref = f"T{t:03d}"
        topic_refs.append(topic_ref)
        for level in (1, 2, 3, 4):
            counts.setdefault(topic_ref, {})[str(level)] = exemplars
            for k in range(exemplars):
                index.append(
                    IndexEntry(
                        id=f"a-{t:03d}-{level}-{k:02d}",
                        topic_ref=topic_ref,
                        level=level,
                        grade=BAND_GRADES[band],
                        grade_band=band,
                        domain=domain,
                        exemplar_index=k,
                    )
                )
    return CorpusManifest(
        topics=topic_refs,
        exemplars_per_cell=exemplars,
        seed=0,
        counts=counts,
        index=index,
    )
