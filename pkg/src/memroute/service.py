"""HTTP service wrapping the retrieval engine.

A thin FastAPI layer over the core package: stores stay on disk under one
root, get opened (and cached) on first use, and every retrieval/classify/
enrich operation is delegated to the same functions the CLI uses. Engine
configuration errors surface as HTTP 400, unknown stores as 404, and
on-disk corruption as 500.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from fastapi import FastAPI, HTTPException

from . import __version__
from .classifier import RuleSet, classify_with_stage, default_rules
from .enrichment import (
    EnrichmentVocabulary,
    default_vocabulary_path,
    enrich,
    load_vocabulary,
)
from .errors import ConfigurationError, MemrouteError, StoreCorruptionError
from .routing import (
    PIPELINE_FAMILY,
    RETRIEVAL_TYPES,
    Pipeline,
    QueryType,
    RouteTable,
    default_route_table,
    execute_pipeline,
    resolve_route,
)
from .schemas import (
    ClassifyRequest,
    ClassifyResponse,
    EnrichRequest,
    EnrichResponse,
    HealthResponse,
    ResolveRouteRequest,
    ResolveRouteResponse,
    RoutesResponse,
    SearchHit,
    SearchRequest,
    SearchResponse,
    StoreInfo,
    StoresResponse,
)
from .store import MANIFEST_FILE, VECTOR_INDEX_FILE, Store, open_store

STORE_ROOT_ENV = "MEMROUTE_STORE_ROOT"


def _parse_query_type(value: str) -> QueryType:
    try:
        return QueryType(value)
    except ValueError:
        valid = ", ".join(t.value for t in RETRIEVAL_TYPES)
        raise HTTPException(
            status_code=400, detail=f"unknown query type {value!r}; expected one of: {valid}"
        ) from None


def _parse_pipeline(value: str) -> Pipeline:
    try:
        return Pipeline(value)
    except ValueError:
        valid = ", ".join(p.value for p in Pipeline)
        raise HTTPException(
            status_code=400, detail=f"unknown pipeline {value!r}; expected one of: {valid}"
        ) from None


def create_app(
    store_root: Path | str | None = None,
    route_table: RouteTable | None = None,
    rules: RuleSet | None = None,
    vocab: EnrichmentVocabulary | None = None,
) -> FastAPI:
    if store_root is None:
        env_root = os.environ.get(STORE_ROOT_ENV)
        store_root = Path(env_root) if env_root else None
    else:
        store_root = Path(store_root)
    table = route_table or default_route_table()
    ruleset = rules or default_rules()
    vocabulary = vocab or load_vocabulary(default_vocabulary_path())

    app = FastAPI(title="memroute", version=__version__)
    app.state.store_root = store_root
    app.state.route_table = table
    app.state.rules = ruleset
    app.state.vocabulary = vocabulary
    app.state.store_cache = {}

    def _root() -> Path:
        if app.state.store_root is None:
            raise HTTPException(
                status_code=400,
                detail=f"no store root configured; set {STORE_ROOT_ENV} or pass --store-root",
            )
        return app.state.store_root

    def _open(name: str) -> Store:
        cache: dict[str, Store] = app.state.store_cache
        if name in cache:
            return cache[name]
        path = _root() / name
        if not (path / MANIFEST_FILE).is_file():
            raise HTTPException(status_code=404, detail=f"no store named {name!r}")
        try:
            store = open_store(path)
        except StoreCorruptionError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        cache[name] = store
        return store

    @app.exception_handler(ConfigurationError)
    async def _config_error(request, exc: ConfigurationError):  # noqa: ANN001
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(MemrouteError)
    async def _engine_error(request, exc: MemrouteError):  # noqa: ANN001
        from fastapi.responses import JSONResponse

        status = 500 if isinstance(exc, StoreCorruptionError) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        root = app.state.store_root
        return HealthResponse(
            status="ok", version=__version__, store_root=str(root) if root else None
        )

    @app.get("/stores", response_model=StoresResponse)
    def stores() -> StoresResponse:
        root = _root()
        infos: list[StoreInfo] = []
        if root.is_dir():
            for child in sorted(root.iterdir()):
                manifest_path = child / MANIFEST_FILE
                if not manifest_path.is_file():
                    continue
                try:
                    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
                except json.JSONDecodeError:
                    continue
                infos.append(
                    StoreInfo(
                        store_id=str(manifest.get("store_id", "")) or child.name,
                        directory=child.name,
                        session_count=int(manifest.get("session_count", 0)),
                        vocabulary_version=str(manifest.get("vocabulary_version", "")),
                        has_vectors=VECTOR_INDEX_FILE in manifest.get("checksums", {}),
                    )
                )
        return StoresResponse(root=str(root), stores=infos)

    @app.get("/routes", response_model=RoutesResponse)
    def routes() -> RoutesResponse:
        current: RouteTable = app.state.route_table
        return RoutesResponse(
            provenance=current.provenance,
            routes={t.value: current.routes[t].value for t in RETRIEVAL_TYPES},
        )

    @app.post("/routes/resolve", response_model=ResolveRouteResponse)
    def routes_resolve(request: ResolveRouteRequest) -> ResolveRouteResponse:
        qtype = _parse_query_type(request.query_type)
        pipeline = resolve_route(qtype, app.state.route_table)
        return ResolveRouteResponse(
            query_type=qtype.value,
            pipeline=pipeline.value,
            family=PIPELINE_FAMILY[pipeline].value,
        )

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(request: ClassifyRequest) -> ClassifyResponse:
        qtype, stage = classify_with_stage(request.query, app.state.rules)
        pipeline = resolve_route(qtype, app.state.route_table)
        return ClassifyResponse(
            query=request.query,
            query_type=qtype.value,
            stage=stage,
            pipeline=pipeline.value,
            family=PIPELINE_FAMILY[pipeline].value,
        )

    @app.post("/enrich", response_model=EnrichResponse)
    def enrich_content(request: EnrichRequest) -> EnrichResponse:
        text = enrich(request.content, app.state.vocabulary)
        return EnrichResponse(enrichment=text, terms=text.split() if text else [])

    @app.post("/search", response_model=SearchResponse)
    def search(request: SearchRequest) -> SearchResponse:
        store = _open(request.store)
        query_type_used: str | None = None
        if request.pipeline is not None:
            pipeline = _parse_pipeline(request.pipeline)
        else:
            if request.query_type is None or request.query_type == "auto":
                qtype, _ = classify_with_stage(request.query, app.state.rules)
            else:
                qtype = _parse_query_type(request.query_type)
            query_type_used = qtype.value
            pipeline = resolve_route(qtype, app.state.route_table)
        ranked = execute_pipeline(pipeline, request.query, store, request.k)
        return SearchResponse(
            store=request.store,
            query=request.query,
            query_type=query_type_used,
            pipeline=pipeline.value,
            hits=[SearchHit(session_id=sid, score=score) for sid, score in ranked.items],
        )

    return app
