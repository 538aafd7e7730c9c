"""drawsim command line: decompose | profile | generate | cmap | corpus | metrics | serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from drawsim.config import CorpusBuildConfig, default_provider_set, load_provider_config
from drawsim.corpus import (
    ArtifactStore,
    SamplingPlan,
    build_corpus,
    generate_artifact,
    stratified_sample,
)
from drawsim.profiles import PerformanceLevel, build_profile, build_profile_ladder
from drawsim.standards import (
    TopicSpec,
    bundled_standards_path,
    decompose,
    load_standards,
    load_topic_names,
)


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


def _load_topic(path: str) -> TopicSpec:
    return TopicSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _providers(config: str | None):
    if config:
        return load_provider_config(config)
    return default_provider_set(), None


@click.group()
def main() -> None:
    """Simulated student science drawings with diagnostic scaffolding."""


@main.command("decompose")
@click.option("--pe", "code", required=True, help="Performance expectation code, e.g. 3-LS1-1.")
@click.option("--standards", type=click.Path(exists=True), default=None,
              help="Standards file (defaults to the bundled sample).")
@click.option("--seed", type=int, default=0)
@click.option("--providers", "providers_cfg", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None, help="Write the topic document here.")
def decompose_cmd(code, standards, seed, providers_cfg, out):
    """Decompose a performance expectation into evidence statements."""
    source = Path(standards) if standards else bundled_standards_path()
    pes = {pe.code: pe for pe in load_standards(source)}
    if code not in pes:
        raise click.ClickException(f"{code} not found in {source}")
    providers, _ = _providers(providers_cfg)
    names = load_topic_names(source)
    topic = decompose(pes[code], providers.generation, seed=seed, topic_name=names.get(code))
    _emit(topic.to_dict(), out)


@main.command("profile")
@click.option("--topic", "topic_path", required=True, type=click.Path(exists=True))
@click.option("--level", type=click.IntRange(1, 4), required=True)
@click.option("--seed", type=int, default=0)
@click.option("--providers", "providers_cfg", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None)
def profile_cmd(topic_path, level, seed, providers_cfg, out):
    """Build one capability profile for a decomposed topic."""
    providers, _ = _providers(providers_cfg)
    profile = build_profile(
        _load_topic(topic_path), PerformanceLevel(level), providers.generation, seed=seed
    )
    _emit(profile.to_dict(), out)


@main.command("profile-ladder")
@click.option("--topic", "topic_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=0)
@click.option("--providers", "providers_cfg", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None)
def profile_ladder_cmd(topic_path, seed, providers_cfg, out):
    """Build all four levels with the monotone can-do chain."""
    providers, _ = _providers(providers_cfg)
    ladder = build_profile_ladder(_load_topic(topic_path), providers.generation, seed=seed)
    _emit({str(int(k)): v.to_dict() for k, v in ladder.items()}, out)


@main.command("generate")
@click.option("--topic", "topic_path", required=True, type=click.Path(exists=True))
@click.option("--level", type=click.IntRange(1, 4), required=True)
@click.option("--grade", type=int, default=None, help="Defaults to the topic's grade.")
@click.option("--seed", type=int, default=0)
@click.option("--providers", "providers_cfg", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def generate_cmd(topic_path, level, grade, seed, providers_cfg, out):
    """Generate one artifact: narrative, prompt spec, image, map, alignment."""
    from drawsim.conceptmap import render_map

    providers, style_table = _providers(providers_cfg)
    topic = _load_topic(topic_path)
    if grade is not None and grade != topic.pe.grade:
        topic.pe.grade = grade
        topic.pe.validate()
    profile = build_profile(topic, PerformanceLevel(level), providers.generation, seed=seed)
    root = Path(out)
    artifact = generate_artifact(
        topic, profile, providers, seed=seed, root=root, style_table=style_table
    )
    store = ArtifactStore(root)
    adir = store.persist(artifact)
    (adir / "cmap.dot").write_text(render_map(artifact.cmap), encoding="utf-8")
    click.echo(f"artifact {artifact.id} written under {adir}")


@main.group("cmap")
def cmap_group() -> None:
    """Validate or render concept-map documents."""


@cmap_group.command("validate")
@click.argument("path", type=click.Path(exists=True))
def cmap_validate_cmd(path):
    from drawsim.conceptmap import ConceptMap, validate_map

    cmap = ConceptMap.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    report = validate_map(cmap)
    click.echo(json.dumps(report.to_dict(), indent=2))
    if not report.passed:
        sys.exit(1)


@cmap_group.command("render")
@click.argument("path", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Write DOT text here.")
def cmap_render_cmd(path, out):
    from drawsim.conceptmap import ConceptMap, render_map

    cmap = ConceptMap.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    dot = render_map(cmap)
    if out:
        Path(out).write_text(dot, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(dot)


@main.group("corpus")
def corpus_group() -> None:
    """Build corpora and sampling plans."""


@corpus_group.command("build")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def corpus_build_cmd(config_path):
    """Build (or resume) a corpus per the build config file."""
    cfg = CorpusBuildConfig.load(config_path)
    providers, style_table = _providers(str(cfg.providers) if cfg.providers else None)

    source = cfg.standards_file or bundled_standards_path()
    pes = {pe.code: pe for pe in load_standards(source)}
    names = load_topic_names(source)
    codes = cfg.topic_codes or list(pes)
    missing = [c for c in codes if c not in pes]
    if missing:
        raise click.ClickException(f"codes not in {source}: {missing}")
    topics = [
        decompose(pes[c], providers.generation, seed=cfg.seed, topic_name=names.get(c))
        for c in codes
    ]
    manifest = build_corpus(
        topics,
        cfg.exemplars_per_cell,
        providers,
        cfg.out_dir,
        seed=cfg.seed,
        concurrency=cfg.concurrency,
        style_table=style_table,
    )
    failed = {k: v for k, v in manifest.build_status.items() if v.get("status") != "ok"}
    click.echo(
        f"corpus at {cfg.out_dir}: {manifest.total()}/{manifest.expected_total()} artifacts"
    )
    if failed:
        click.echo(f"failed cells: {json.dumps(failed, indent=2)}")
        sys.exit(1)


@corpus_group.command("sample")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--raters", type=int, required=True)
@click.option("--per-rater", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--allow-overlap", is_flag=True, default=False)
@click.option("--out", type=click.Path(), default=None,
              help="Defaults to <corpus>/plans/<plan-id>.json")
def corpus_sample_cmd(corpus_dir, raters, per_rater, seed, allow_overlap, out):
    """Produce a stratified rater assignment plan."""
    store = ArtifactStore(corpus_dir)
    manifest = store.load_manifest()
    plan = stratified_sample(
        manifest, raters, per_rater, seed, allow_overlap=allow_overlap
    )
    target = Path(out) if out else store.root / "plans" / f"{plan.plan_id}.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(plan.to_dict(), indent=2) + "\n", encoding="utf-8")
    click.echo(f"plan {plan.plan_id}: {raters} raters x {per_rater} -> {target}")


@main.group("metrics")
def metrics_group() -> None:
    """Consistency, ablation, and aggregation reports."""


@metrics_group.command("consistency")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--sample", "plan_path", required=True, type=click.Path(exists=True),
              help="Sampling plan naming the artifacts to score.")
@click.option("--providers", "providers_cfg", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None)
def metrics_consistency_cmd(corpus_dir, plan_path, providers_cfg, out):
    from drawsim.metrics import consistency_report, consistency_table

    providers, _ = _providers(providers_cfg)
    store = ArtifactStore(corpus_dir)
    plan = SamplingPlan.from_dict(json.loads(Path(plan_path).read_text(encoding="utf-8")))
    sample = [store.load(aid) for aid in sorted(plan.all_ids())]
    report = consistency_report(sample, providers.embedding)
    click.echo(consistency_table(report))
    if out:
        _emit(report, out)


@metrics_group.command("ablation")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--condition", type=click.Choice(["with", "without"]), required=True)
@click.option("--standards", type=click.Path(exists=True), default=None,
              help="Standards file for re-rendering under 'without'.")
@click.option("--exemplars", type=int, default=2)
@click.option("--seed", type=int, default=0)
@click.option("--providers", "providers_cfg", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None)
def metrics_ablation_cmd(corpus_dir, condition, standards, exemplars, seed, providers_cfg, out):
    """Per-topic SD of per-level mean edge density.

    'with' reads the persisted corpus images; 'without' re-renders the same
    topics with profile-ignoring prompts in memory.
    """
    from drawsim.metrics import ablation_from_corpus, run_ablation

    providers, style_table = _providers(providers_cfg)
    store = ArtifactStore(corpus_dir)
    manifest = store.load_manifest()
    if condition == "with":
        report = ablation_from_corpus(manifest, store)
    else:
        source = Path(standards) if standards else bundled_standards_path()
        pes = {pe.code: pe for pe in load_standards(source)}
        names = load_topic_names(source)
        topics = [
            decompose(pes[c], providers.generation, seed=seed, topic_name=names.get(c))
            for c in manifest.topics
            if c in pes
        ]
        if not topics:
            raise click.ClickException("no manifest topics found in the standards file")
        report = run_ablation(
            topics,
            providers,
            condition="without_profiles",
            exemplars_per_cell=exemplars,
            seed=seed,
            style_table=style_table,
        )
    click.echo(f"condition={report.condition} mean_sd={report.mean_sd:.4f}")
    for topic_ref, sd in report.per_topic_sd.items():
        click.echo(f"  {topic_ref}: {sd:.4f}")
    if out:
        _emit(report.to_dict(), out)


@metrics_group.command("aggregate")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True),
              help="Line-delimited JSON of evaluation records.")
@click.option("--out", type=click.Path(), default=None)
def metrics_aggregate_cmd(records_path, out):
    from drawsim.metrics import EvaluationRecord, aggregate_report, aggregate_table

    records = []
    with Path(records_path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(EvaluationRecord.model_validate_json(line))
    if not records:
        raise click.ClickException("no records found")
    click.echo(aggregate_table(records))
    if out:
        _emit(aggregate_report(records), out)


@main.command("serve")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--read-only", is_flag=True, default=False)
@click.option("--plan", "plan_path", type=click.Path(exists=True), default=None)
@click.option("--auth-token-env", default="")
def serve_cmd(corpus_dir, host, port, read_only, plan_path, auth_token_env):
    """Serve artifacts, plans, and evaluation collection over HTTP."""
    from drawsim.service import ApiConfig, serve

    serve(
        ApiConfig(
            corpus_root=Path(corpus_dir),
            host=host,
            port=port,
            read_only=read_only,
            auth_token_env=auth_token_env,
            plan_path=Path(plan_path) if plan_path else None,
        )
    )


if __name__ == "__main__":
    main()
