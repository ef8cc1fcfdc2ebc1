"""memroute: routed retrieval over long-term conversational memory.

Lexical (BM25) and embedding indexes per conversation haystack, storage-time
vocabulary enrichment on the lexical side, reciprocal-rank-fusion hybrids,
and a query-type router that picks the pipeline per query. Ships with a full
evaluation harness (all-or-nothing Recall@k, NDCG@k, bootstrap statistics,
stratified cross-validation) plus a CLI and a small HTTP service.
"""

from .classifier import (
    ClassificationReport,
    RuleSet,
    classify_query,
    classify_with_stage,
    default_rules,
    effective_accuracy,
    evaluate_classifier,
    load_rules,
)
from .dataset import Benchmark, BenchmarkInstance, Session, Turn, load_benchmark, serialize_session
from .enrichment import EnrichmentVocabulary, enrich, load_vocabulary, parse_vocabulary
from .errors import (
    ConfigurationError,
    DataFormatError,
    DuplicateDocumentError,
    EvaluationError,
    MemrouteError,
    MissingEmbeddingError,
    StoreCorruptionError,
)
from .evaluation import (
    CvReport,
    EvalReport,
    bootstrap_ci,
    cross_validate,
    evaluate_run,
    ndcg_at_k,
    paired_bootstrap_test,
    recall_all_at_k,
    stratified_kfold,
)
from .fusion import RankedList, fusion_depth, rrf_fuse
from .lexical import Bm25Params, LexicalIndex, tokenize
from .routing import (
    Pipeline,
    QueryType,
    RouteFamily,
    RouteTable,
    default_route_table,
    derive_route_table,
    execute_pipeline,
    resolve_route,
)
from .store import (
    MemoryRecord,
    Store,
    StoreManifest,
    build_store,
    build_store_in_memory,
    open_store,
)
from .vectors import (
    EmbeddingProvider,
    FileBackedProvider,
    HashedBowProvider,
    VectorIndex,
)

__version__ = "0.1.0"

__all__ = [
    "Benchmark",
    "BenchmarkInstance",
    "Bm25Params",
    "ClassificationReport",
    "ConfigurationError",
    "CvReport",
    "DataFormatError",
    "DuplicateDocumentError",
    "EmbeddingProvider",
    "EnrichmentVocabulary",
    "EvalReport",
    "EvaluationError",
    "FileBackedProvider",
    "HashedBowProvider",
    "LexicalIndex",
    "MemoryRecord",
    "MemrouteError",
    "MissingEmbeddingError",
    "Pipeline",
    "QueryType",
    "RankedList",
    "RouteFamily",
    "RouteTable",
    "RuleSet",
    "Session",
    "Store",
    "StoreCorruptionError",
    "StoreManifest",
    "Turn",
    "VectorIndex",
    "bootstrap_ci",
    "build_store",
    "build_store_in_memory",
    "classify_query",
    "classify_with_stage",
    "cross_validate",
    "default_route_table",
    "default_rules",
    "derive_route_table",
    "effective_accuracy",
    "enrich",
    "evaluate_classifier",
    "evaluate_run",
    "execute_pipeline",
    "fusion_depth",
    "load_benchmark",
    "load_rules",
    "load_vocabulary",
    "ndcg_at_k",
    "open_store",
    "paired_bootstrap_test",
    "parse_vocabulary",
    "recall_all_at_k",
    "resolve_route",
    "rrf_fuse",
    "serialize_session",
    "stratified_kfold",
    "tokenize",
]
