"""Configuration files: provider wiring and corpus build settings.

Provider config (JSON)::

    {
      "generation": {"offline": true, "base_seed": 0},
      "image": {"offline": true, "size": 512},
      "embedding": {"offline": true, "dim": 256},
      "style_table": {"K-2": "...", "3-5": "...", "6-8": "...", "9-12": "..."}
    }

A remote section instead carries ``{"offline": false, "endpoint": ...,
"credential_ref": ENV_NAME, "timeout": s, "max_retries": n,
"rate_limit": rpm}``; credentials stay in the environment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from drawsim.corpus import ProviderSet
from drawsim.providers import (
    OfflineEmbeddingProvider,
    OfflineGenerationProvider,
    OfflineImageProvider,
    ProviderConfig,
)
from drawsim.providers.remote import (
    RemoteEmbeddingProvider,
    RemoteGenerationProvider,
    RemoteImageProvider,
)
from drawsim.standards import GradeBand


def default_provider_set(base_seed: int = 0) -> ProviderSet:
    return ProviderSet(
        generation=OfflineGenerationProvider(base_seed=base_seed),
        image=OfflineImageProvider(),
        embedding=OfflineEmbeddingProvider(),
    )


def _remote_cfg(kind: str, section: dict) -> ProviderConfig:
    return ProviderConfig(
        kind=kind,
        endpoint=section["endpoint"],
        credential_ref=section.get("credential_ref", ""),
        timeout=float(section.get("timeout", 30.0)),
        max_retries=int(section.get("max_retries", 2)),
        rate_limit=int(section.get("rate_limit", 60)),
    )


def load_provider_config(path: str | Path | None):
    """Return (ProviderSet, style_table or None) from a config file."""
    if path is None:
        return default_provider_set(), None
    data = json.loads(Path(path).read_text(encoding="utf-8"))

    gen_cfg = data.get("generation", {})
    if gen_cfg.get("offline", True):
        generation = OfflineGenerationProvider(base_seed=int(gen_cfg.get("base_seed", 0)))
    else:
        generation = RemoteGenerationProvider(_remote_cfg("generation", gen_cfg))

    img_cfg = data.get("image", {})
    if img_cfg.get("offline", True):
        image = OfflineImageProvider(size=int(img_cfg.get("size", 512)))
    else:
        image = RemoteImageProvider(_remote_cfg("image", img_cfg))

    emb_cfg = data.get("embedding", {})
    if emb_cfg.get("offline", True):
        embedding = OfflineEmbeddingProvider(dim=int(emb_cfg.get("dim", 256)))
    else:
        embedding = RemoteEmbeddingProvider(
            _remote_cfg("embedding", emb_cfg), dim=int(emb_cfg.get("dim", 512))
        )

    style_table = None
    if "style_table" in data:
        style_table = {GradeBand(k): v for k, v in data["style_table"].items()}
    return ProviderSet(generation=generation, image=image, embedding=embedding), style_table


@dataclass
class CorpusBuildConfig:
    out_dir: Path
    standards_file: Path | None = None
    topic_codes: list[str] | None = None
    exemplars_per_cell: int = 2
    seed: int = 0
    concurrency: int = 1
    providers: Path | None = None

    @classmethod
    def load(cls, path: str | Path) -> "CorpusBuildConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        base = Path(path).parent
        def resolve(p):
            return (base / p) if p and not Path(p).is_absolute() else (Path(p) if p else None)
        return cls(
            out_dir=resolve(data["out_dir"]),
            standards_file=resolve(data.get("standards_file")),
            topic_codes=data.get("topic_codes"),
            exemplars_per_cell=int(data.get("exemplars_per_cell", 2)),
            seed=int(data.get("seed", 0)),
            concurrency=int(data.get("concurrency", 1)),
            providers=resolve(data.get("providers")),
        )
