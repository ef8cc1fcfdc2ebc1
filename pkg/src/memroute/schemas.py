"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str
    store_root: str | None


class StoreInfo(BaseModel):
    store_id: str
    directory: str
    session_count: int
    vocabulary_version: str
    has_vectors: bool


class StoresResponse(BaseModel):
    root: str
    stores: list[StoreInfo]


class RoutesResponse(BaseModel):
    provenance: str
    routes: dict[str, str]


class ResolveRouteRequest(BaseModel):
    query_type: str


class ResolveRouteResponse(BaseModel):
    query_type: str
    pipeline: str
    family: str


class ClassifyRequest(BaseModel):
    query: str


class ClassifyResponse(BaseModel):
    query: str
    query_type: str
    stage: str | None
    pipeline: str
    family: str


class EnrichRequest(BaseModel):
    content: str


class EnrichResponse(BaseModel):
    enrichment: str
    terms: list[str]


class SearchRequest(BaseModel):
    store: str
    query: str
    k: int = Field(default=5, ge=1)
    # Either force a pipeline, or give a query type to route ("auto" runs
    # the classifier; omitting both also auto-classifies).
    pipeline: str | None = None
    query_type: str | None = None


class SearchHit(BaseModel):
    session_id: str
    score: float


class SearchResponse(BaseModel):
    store: str
    query: str
    query_type: str | None
    pipeline: str
    hits: list[SearchHit]
