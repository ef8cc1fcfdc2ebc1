"""Query-type routing: type -> pipeline resolution, pipeline execution, and
data-driven route-table derivation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .errors import ConfigurationError, DataFormatError
from .fusion import RankedList, fusion_depth, rrf_fuse
from .lexical import Bm25Params

if TYPE_CHECKING:
    from .dataset import BenchmarkInstance
    from .store import Store


class QueryType(str, Enum):
    KNOWLEDGE_UPDATE = "knowledge-update"
    MULTI_SESSION = "multi-session"
    SINGLE_SESSION_ASSISTANT = "single-session-assistant"
    SINGLE_SESSION_PREFERENCE = "single-session-preference"
    SINGLE_SESSION_USER = "single-session-user"
    TEMPORAL_REASONING = "temporal-reasoning"
    ABSTENTION = "abstention"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


RETRIEVAL_TYPES: tuple[QueryType, ...] = (
    QueryType.KNOWLEDGE_UPDATE,
    QueryType.MULTI_SESSION,
    QueryType.SINGLE_SESSION_ASSISTANT,
    QueryType.SINGLE_SESSION_PREFERENCE,
    QueryType.SINGLE_SESSION_USER,
    QueryType.TEMPORAL_REASONING,
)


class Pipeline(str, Enum):
    BASELINE_FTS = "baseline_fts"
    ENRICHED_FTS = "enriched_fts"
    EMBEDDINGS = "embeddings"
    HYBRID = "hybrid"
    ENRICHED_HYBRID = "enriched_hybrid"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


# Cheapest first; used to break ties in route derivation.
PIPELINE_COST_ORDER: tuple[Pipeline, ...] = (
    Pipeline.BASELINE_FTS,
    Pipeline.ENRICHED_FTS,
    Pipeline.EMBEDDINGS,
    Pipeline.HYBRID,
    Pipeline.ENRICHED_HYBRID,
)


class RouteFamily(str, Enum):
    FTS = "fts-based"
    EMBEDDING = "embedding-based"
    HYBRID = "hybrid-based"


PIPELINE_FAMILY: dict[Pipeline, RouteFamily] = {
    Pipeline.BASELINE_FTS: RouteFamily.FTS,
    Pipeline.ENRICHED_FTS: RouteFamily.FTS,
    Pipeline.EMBEDDINGS: RouteFamily.EMBEDDING,
    Pipeline.HYBRID: RouteFamily.HYBRID,
    Pipeline.ENRICHED_HYBRID: RouteFamily.HYBRID,
}


@dataclass(frozen=True)
class RouteTable:
    """Total mapping from the six retrieval query types to pipelines."""

    routes: Mapping[QueryType, Pipeline]
    provenance: str = "shipped"

    def __post_init__(self) -> None:
        missing = [t.value for t in RETRIEVAL_TYPES if t not in self.routes]
        if missing:
            raise ConfigurationError(f"route table is missing types: {missing}")
        extra = [t for t in self.routes if t not in RETRIEVAL_TYPES]
        if extra:
            raise ConfigurationError(f"route table has non-retrieval types: {extra}")


def default_route_table() -> RouteTable:
    return load_route_table(Path(str(resources.files("memroute.resources") / "routes.json")))


def load_route_table(path: Path | str) -> RouteTable:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    try:
        routes = {QueryType(k): Pipeline(v) for k, v in raw["routes"].items()}
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad route table: {exc}") from exc
    return RouteTable(routes=routes, provenance=str(raw.get("provenance", "shipped")))


def save_route_table(table: RouteTable, path: Path | str) -> None:
    payload = {
        "provenance": table.provenance,
        "routes": {t.value: table.routes[t].value for t in RETRIEVAL_TYPES},
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def resolve_route(qtype: QueryType, table: RouteTable) -> Pipeline:
    """Deterministic table lookup for a retrieval query type."""
    if qtype == QueryType.ABSTENTION:
        raise ConfigurationError(
            "abstention is not routable; classify the query's surface type first"
        )
    return table.routes[qtype]


def execute_pipeline(
    pipeline: Pipeline,
    query: str,
    store: "Store",
    k: int,
    bm25: Bm25Params = Bm25Params(),
    rrf_k: int = 60,
) -> RankedList:
    """Run one retrieval pipeline against an opened store, truncated to k.

    Hybrid pipelines pull ``fusion_depth(k)`` candidates from each component
    before fusing. The embedding component always searches vectors built from
    raw content; enrichment only ever touches the lexical side.
    """

    def _lexical(enriched: bool, depth: int) -> RankedList:
        index = store.enriched_index if enriched else store.raw_index
        if index is None:
            raise ConfigurationError(
                f"pipeline {pipeline.value} requires the "
                f"{'enriched' if enriched else 'raw'} lexical index, which this store lacks"
            )
        return index.search(query, depth, bm25)

    def _embedding(depth: int) -> RankedList:
        if store.provider is None:
            raise ConfigurationError(
                f"pipeline {pipeline.value} requires an embedding provider; "
                "the store was built lexical-only or no provider is configured"
            )
        if store.vector_index is None:
            raise ConfigurationError(
                f"pipeline {pipeline.value} requires a vector index, which this store lacks"
            )
        return store.vector_index.search(store.provider.embed(query), depth)

    if pipeline == Pipeline.BASELINE_FTS:
        result = _lexical(enriched=False, depth=k)
    elif pipeline == Pipeline.ENRICHED_FTS:
        result = _lexical(enriched=True, depth=k)
    elif pipeline == Pipeline.EMBEDDINGS:
        result = _embedding(depth=k)
    elif pipeline in (Pipeline.HYBRID, Pipeline.ENRICHED_HYBRID):
        depth = fusion_depth(k)
        lexical = _lexical(enriched=pipeline == Pipeline.ENRICHED_HYBRID, depth=depth)
        fused = rrf_fuse([lexical, _embedding(depth)], k_const=rrf_k)
        result = fused.truncated(k)
    else:  # pragma: no cover - exhaustive enum
        raise ConfigurationError(f"unknown pipeline {pipeline!r}")
    return RankedList(items=result.items[:k], source=pipeline.value)


def derive_route_table(
    train: Iterable[tuple["BenchmarkInstance", Mapping[Pipeline, float]]],
    pipelines: Sequence[Pipeline] = PIPELINE_COST_ORDER,
    provenance: str = "derived",
) -> RouteTable:
    """Pick, per query type, the pipeline with the best mean training score.

    Ties go to the cheaper pipeline (cost order), which keeps derivation
    deterministic when several strategies perform identically. Every
    retrieval type must be represented and every instance must carry a score
    for every candidate pipeline.
    """
    by_type: dict[QueryType, list[Mapping[Pipeline, float]]] = {t: [] for t in RETRIEVAL_TYPES}
    for instance, scores in train:
        if instance.qtype == QueryType.ABSTENTION:
            continue
        missing = [p.value for p in pipelines if p not in scores]
        if missing:
            raise ConfigurationError(
                f"instance {instance.instance_id}: missing pipeline scores for {missing}"
            )
        by_type[instance.qtype].append(scores)
    routes: dict[QueryType, Pipeline] = {}
    for qtype in RETRIEVAL_TYPES:
        rows = by_type[qtype]
        if not rows:
            raise ConfigurationError(
                f"no training instances of type {qtype.value}; stratification bug upstream"
            )
        ordered = [p for p in PIPELINE_COST_ORDER if p in pipelines]
        best: Pipeline | None = None
        best_mean = float("-inf")
        for pipeline in ordered:
            mean = sum(row[pipeline] for row in rows) / len(rows)
            if mean > best_mean:
                best, best_mean = pipeline, mean
        assert best is not None
        routes[qtype] = best
    return RouteTable(routes=routes, provenance=provenance)
