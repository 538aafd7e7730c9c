"""HTTP API serving artifacts, sampling plans, and evaluation collection.

Read paths never mutate corpus artifacts; evaluation submissions land in
an append-only line-delimited log under ``<corpus>/evaluations/`` with
replace-with-audit semantics per (rater, artifact) key.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request, Response

from drawsim.corpus import ArtifactStore, CorpusManifest, SamplingPlan
from drawsim.errors import DrawSimError
from drawsim.metrics import (
    EvaluationRecord,
    aggregate_report,
    consistency_report,
)
from drawsim.providers import EmbeddingProvider, OfflineEmbeddingProvider


@dataclass
class ApiConfig:
    corpus_root: Path
    host: str = "127.0.0.1"
    port: int = 8000
    read_only: bool = False
    auth_token_env: str = ""
    plan_path: Path | None = None

    def __post_init__(self):
        self.corpus_root = Path(self.corpus_root)
        if self.plan_path is not None:
            self.plan_path = Path(self.plan_path)


class EvaluationStore:
    """Append-only evaluation log with a derived per-key index."""

    def __init__(self, root: Path):
        self.path = Path(root) / "evaluations" / "evaluations.ndjson"
        self._lock = threading.Lock()

    def append(self, record: EvaluationRecord) -> str:
        with self._lock:
            prior = self._lines()
            serial = sum(
                1
                for line in prior
                if line["rater_id"] == record.rater_id
                and line["artifact_id"] == record.artifact_id
            )
            record_id = f"{record.rater_id}:{record.artifact_id}:{serial + 1}"
            entry = {
                "record_id": record_id,
                "stored_at": time.time(),
                **record.model_dump(mode="json"),
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")
            return record_id

    def _lines(self) -> list[dict]:
        if not self.path.exists():
            return []
        with self.path.open(encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def audit(self, rater_id: str, artifact_id: str) -> list[dict]:
        return [
            line
            for line in self._lines()
            if line["rater_id"] == rater_id and line["artifact_id"] == artifact_id
        ]

    def effective_records(self) -> list[EvaluationRecord]:
        """Latest submission per (rater, artifact), in first-seen order."""
        latest: dict[tuple[str, str], dict] = {}
        for line in self._lines():
            latest[(line["rater_id"], line["artifact_id"])] = line
        records = []
        for line in latest.values():
            payload = {k: v for k, v in line.items() if k not in ("record_id", "stored_at")}
            records.append(EvaluationRecord.model_validate(payload))
        return records


def _load_plan(path: Path) -> SamplingPlan:
    return SamplingPlan.from_dict(json.loads(path.read_text(encoding="utf-8")))


def _media_type(data: bytes) -> str:
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "image/png"
    if data[:3] == b"\xff\xd8\xff":
        return "image/jpeg"
    return "application/octet-stream"


def create_app(
    cfg: ApiConfig,
    *,
    embedder: EmbeddingProvider | None = None,
) -> FastAPI:
    store = ArtifactStore(cfg.corpus_root)
    try:
        manifest: CorpusManifest = store.load_manifest()
    except FileNotFoundError as err:
        raise DrawSimError(f"corpus manifest not readable under {cfg.corpus_root}") from err
    plan = _load_plan(cfg.plan_path) if cfg.plan_path else None
    evaluations = EvaluationStore(cfg.corpus_root)
    embed = embedder or OfflineEmbeddingProvider()
    entries_by_id = {e.id: e for e in manifest.index}

    app = FastAPI(title="drawsim", version="1")

    def check_auth(request: Request) -> None:
        if not cfg.auth_token_env:
            return
        expected = os.environ.get(cfg.auth_token_env, "")
        if not expected:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {expected}":
            raise HTTPException(status_code=401, detail="invalid or missing token")

    @app.get("/artifacts")
    def list_artifacts(
        topic: str | None = None,
        level: int | None = None,
        grade_band: str | None = None,
        domain: str | None = None,
    ) -> dict:
        entries = manifest.filtered(
            topic=topic, level=level, grade_band=grade_band, domain=domain
        )
        return {"schema_version": 1, "count": len(entries), "ids": [e.id for e in entries]}

    @app.get("/artifacts/{artifact_id}")
    def get_artifact(artifact_id: str) -> dict:
        if artifact_id not in entries_by_id:
            raise HTTPException(status_code=404, detail=f"unknown artifact {artifact_id}")
        artifact = store.load(artifact_id)
        return artifact.to_dict()

    @app.get("/artifacts/{artifact_id}/image")
    def get_image(artifact_id: str, request: Request) -> Response:
        entry = entries_by_id.get(artifact_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown artifact {artifact_id}")
        data = store.image_bytes(entry)
        meta = json.loads(
            (store.root / entry.path / "meta.json").read_text(encoding="utf-8")
        )
        etag = f'"{meta["checksums"]["image.png"]}"'
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304)
        return Response(content=data, media_type=_media_type(data), headers={"ETag": etag})

    @app.get("/artifacts/{artifact_id}/cmap.dot")
    def get_cmap_dot(artifact_id: str) -> Response:
        from drawsim.conceptmap import render_map

        if artifact_id not in entries_by_id:
            raise HTTPException(status_code=404, detail=f"unknown artifact {artifact_id}")
        artifact = store.load(artifact_id)
        return Response(content=render_map(artifact.cmap), media_type="text/vnd.graphviz")

    @app.get("/plans/{plan_id}")
    def get_plan(plan_id: str) -> dict:
        if plan is not None and plan.plan_id == plan_id:
            return plan.to_dict()
        candidate = store.root / "plans" / f"{plan_id}.json"
        if not candidate.exists():
            raise HTTPException(status_code=404, detail=f"unknown plan {plan_id}")
        return json.loads(candidate.read_text(encoding="utf-8"))

    @app.post("/evaluations", status_code=201)
    def submit_evaluation(
        record: EvaluationRecord, _: None = Depends(check_auth)
    ) -> dict:
        if cfg.read_only:
            raise HTTPException(status_code=403, detail="service is read-only")
        if record.artifact_id not in entries_by_id:
            raise HTTPException(
                status_code=404, detail=f"unknown artifact {record.artifact_id}"
            )
        if plan is None:
            raise HTTPException(status_code=403, detail="no active sampling plan")
        assigned = plan.assignment.get(record.rater_id)
        if assigned is None:
            raise HTTPException(
                status_code=403, detail=f"rater {record.rater_id} not in active plan"
            )
        if record.artifact_id not in assigned:
            raise HTTPException(
                status_code=403,
                detail=f"artifact {record.artifact_id} not assigned to {record.rater_id}",
            )
        record_id = evaluations.append(record)
        audit_len = len(evaluations.audit(record.rater_id, record.artifact_id))
        return {"record_id": record_id, "audit_length": audit_len}

    @app.get("/reports/aggregate")
    def get_aggregate() -> dict:
        records = evaluations.effective_records()
        if not records:
            return {"schema_version": 1, "n": 0, "ternary": {}, "likert": {}}
        return aggregate_report(records)

    @app.get("/reports/consistency")
    def get_consistency(n: int = 12, seed: int = 0) -> dict:
        ids = [e.id for e in manifest.index]
        if not ids:
            raise HTTPException(status_code=404, detail="corpus is empty")
        rng = random.Random(seed)
        chosen = rng.sample(ids, min(n, len(ids)))
        sample = [store.load(aid) for aid in chosen]
        report = consistency_report(sample, embed)
        report["sample_ids"] = chosen
        report["seed"] = seed
        return report

    return app


def serve(cfg: ApiConfig, *, embedder: EmbeddingProvider | None = None) -> None:
    """Run the API with uvicorn (blocking)."""
    import uvicorn

    app = create_app(cfg, embedder=embedder)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
