"""Benchmark orchestration: per-instance store builds, mode-driven runs,
and the per-pipeline score tables that feed route derivation and CV.

Modes mirror how the engine is meant to be exercised:

    oracle            route each query by its ground-truth type
    predicted         route by the rule classifier's predicted type
    uniform:<name>    ignore routing, run one pipeline for everything
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .classifier import RuleSet, classify_query
from .dataset import Benchmark, BenchmarkInstance
from .enrichment import EnrichmentVocabulary
from .errors import ConfigurationError, DataFormatError
from .fusion import RankedList
from .lexical import Bm25Params
from .routing import (
    PIPELINE_COST_ORDER,
    Pipeline,
    QueryType,
    RouteTable,
    execute_pipeline,
    resolve_route,
)
from .store import Store, StoreManifest, build_store, open_store
from .vectors import EmbeddingProvider

_UNSAFE = re.compile(r"[^\w.-]")


def store_dir_name(instance_id: str) -> str:
    """Filesystem-safe directory name for an instance's store."""
    return _UNSAFE.sub("_", instance_id)


def store_path_for(root: Path | str, instance_id: str) -> Path:
    return Path(root) / store_dir_name(instance_id)


def ingest_benchmark(
    benchmark: Benchmark,
    root: Path | str,
    vocab: EnrichmentVocabulary,
    provider: EmbeddingProvider | None,
    include_timestamps: bool = True,
    built_at: str = "",
    force: bool = False,
    progress: Callable[[str], None] | None = None,
) -> dict[str, StoreManifest]:
    """Build one store per instance under ``root``.

    Refuses to write into a non-empty root unless ``force`` is set, so a
    stale half-ingested tree can't silently mix with a new one.
    """
    root = Path(root)
    if root.exists() and any(root.iterdir()) and not force:
        raise ConfigurationError(
            f"{root} is not empty; pass force=True (--force) to re-ingest over it"
        )
    dir_names: dict[str, str] = {}
    manifests: dict[str, StoreManifest] = {}
    for instance in benchmark:
        name = store_dir_name(instance.instance_id)
        if name in dir_names:
            raise DataFormatError(
                f"instance ids {dir_names[name]!r} and {instance.instance_id!r} "
                f"collide on store directory {name!r}"
            )
        dir_names[name] = instance.instance_id
        manifests[instance.instance_id] = build_store(
            instance.sessions,
            vocab,
            provider,
            root / name,
            include_timestamps=include_timestamps,
            store_id=instance.instance_id,
            built_at=built_at,
        )
        if progress is not None:
            progress(instance.instance_id)
    return manifests


def parse_mode(mode: str) -> tuple[str, Pipeline | None]:
    """Validate a run mode string -> (kind, uniform pipeline or None)."""
    if mode in ("oracle", "predicted"):
        return mode, None
    if mode.startswith("uniform:"):
        name = mode.split(":", 1)[1]
        try:
            return "uniform", Pipeline(name)
        except ValueError as exc:
            valid = ", ".join(p.value for p in Pipeline)
            raise ConfigurationError(f"unknown pipeline {name!r}; expected one of: {valid}") from exc
    raise ConfigurationError(
        f"unknown mode {mode!r}; expected oracle, predicted, or uniform:<pipeline>"
    )


def choose_pipeline(
    instance: BenchmarkInstance,
    mode_kind: str,
    uniform: Pipeline | None,
    table: RouteTable,
    rules: RuleSet | None,
) -> Pipeline:
    if mode_kind == "uniform":
        assert uniform is not None
        return uniform
    if mode_kind == "oracle":
        # Abstention has no route of its own; the oracle falls back to the
        # instance's surface type, same as the dataset labels it.
        return resolve_route(instance.surface_type, table)
    if mode_kind == "predicted":
        if rules is None:
            raise ConfigurationError("predicted mode requires a classifier rule set")
        return resolve_route(classify_query(instance.question, rules), table)
    raise ConfigurationError(f"unknown mode kind {mode_kind!r}")


@dataclass(frozen=True)
class RunOutput:
    results: dict[str, RankedList]
    pipelines: dict[str, Pipeline]


def run_benchmark(
    benchmark: Benchmark,
    root: Path | str,
    mode: str,
    table: RouteTable,
    rules: RuleSet | None = None,
    k: int = 5,
    bm25: Bm25Params = Bm25Params(),
    rrf_k: int = 60,
    open_instance_store: Callable[[str], Store] | None = None,
    progress: Callable[[str], None] | None = None,
) -> RunOutput:
    """Execute every instance's query against its own store."""
    mode_kind, uniform = parse_mode(mode)
    if open_instance_store is None:
        root = Path(root)
        missing = [
            i.instance_id
            for i in benchmark
            if not (store_path_for(root, i.instance_id) / "manifest.json").is_file()
        ]
        if missing:
            raise ConfigurationError(
                f"{len(missing)} store(s) missing under {root}: {missing[:10]}; "
                "run ingest first"
            )

        def open_instance_store(instance_id: str) -> Store:
            return open_store(store_path_for(root, instance_id))

    results: dict[str, RankedList] = {}
    pipelines: dict[str, Pipeline] = {}
    for instance in benchmark:
        store = open_instance_store(instance.instance_id)
        pipeline = choose_pipeline(instance, mode_kind, uniform, table, rules)
        results[instance.instance_id] = execute_pipeline(
            pipeline, instance.question, store, k, bm25=bm25, rrf_k=rrf_k
        )
        pipelines[instance.instance_id] = pipeline
        if progress is not None:
            progress(instance.instance_id)
    return RunOutput(results=results, pipelines=pipelines)


def pipeline_score_table(
    benchmark: Benchmark,
    root: Path | str,
    k: int = 5,
    bm25: Bm25Params = Bm25Params(),
    rrf_k: int = 60,
    pipelines: Iterable[Pipeline] = PIPELINE_COST_ORDER,
    open_instance_store: Callable[[str], Store] | None = None,
    progress: Callable[[str], None] | None = None,
) -> dict[str, dict[Pipeline, float]]:
    """Per-instance Recall@k under every pipeline (feeds derivation and CV).

    Abstention instances are skipped: they have no gold sessions and no
    route to derive.
    """
    from .evaluation import recall_all_at_k

    if open_instance_store is None:
        root = Path(root)

        def open_instance_store(instance_id: str) -> Store:
            return open_store(store_path_for(root, instance_id))

    scores: dict[str, dict[Pipeline, float]] = {}
    for instance in benchmark:
        if instance.qtype == QueryType.ABSTENTION:
            continue
        store = open_instance_store(instance.instance_id)
        row: dict[Pipeline, float] = {}
        for pipeline in pipelines:
            ranked = execute_pipeline(
                pipeline, instance.question, store, k, bm25=bm25, rrf_k=rrf_k
            )
            row[pipeline] = recall_all_at_k(ranked, instance.gold_session_ids, k)
        scores[instance.instance_id] = row
        if progress is not None:
            progress(instance.instance_id)
    return scores


def classifier_pairs(benchmark: Benchmark) -> list[tuple[str, QueryType]]:
    """(question, true type) pairs for classifier scoring; abstention
    contributes its surface type, since that is what routing needs."""
    return [(i.question, i.surface_type) for i in benchmark]
