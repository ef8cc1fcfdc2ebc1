"""Evaluation harness: retrieval metrics, bootstrap statistics, and
stratified cross-validation over per-pipeline score tables.

All randomness flows through ``numpy.random.Generator(PCG64(seed))`` so that
confidence intervals and fold splits are bit-identical across platforms and
runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import EvaluationError
from .fusion import RankedList
from .routing import (
    PIPELINE_COST_ORDER,
    RETRIEVAL_TYPES,
    Pipeline,
    QueryType,
    RouteTable,
    derive_route_table,
)

DEFAULT_SEED = 17
DEFAULT_RESAMPLES = 10_000

# Cap on index-matrix size per vectorized bootstrap block, to bound memory.
_BLOCK_ELEMENTS = 2_000_000


def _ranked_ids(retrieved: RankedList | Sequence[str]) -> list[str]:
    if isinstance(retrieved, RankedList):
        return retrieved.ids()
    return list(retrieved)


def recall_all_at_k(retrieved: RankedList | Sequence[str], gold: Collection[str], k: int) -> float:
    """All-or-nothing recall: 1.0 only if every gold id made the top k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not gold:
        return 0.0
    top = set(_ranked_ids(retrieved)[:k])
    return 1.0 if set(gold) <= top else 0.0


def ndcg_at_k(retrieved: RankedList | Sequence[str], gold: Collection[str], k: int) -> float:
    """Binary-relevance NDCG with the 1/log2(rank+1) discount."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not gold:
        return 0.0
    gold_set = set(gold)
    dcg = 0.0
    for rank, doc_id in enumerate(_ranked_ids(retrieved)[:k], start=1):
        if doc_id in gold_set:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(len(gold_set), k) + 1))
    return dcg / ideal


@dataclass(frozen=True)
class InstanceScore:
    instance_id: str
    qtype: QueryType
    recall: float
    ndcg: float


@dataclass(frozen=True)
class TypeBreakdown:
    count: int
    recall: float
    ndcg: float


@dataclass(frozen=True)
class EvalReport:
    k: int
    total: int
    macro_recall: float
    macro_ndcg: float
    per_type: Mapping[QueryType, TypeBreakdown]
    instances: tuple[InstanceScore, ...]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "total": self.total,
            "macro": {"recall_all_at_k": self.macro_recall, "ndcg_at_k": self.macro_ndcg},
            "per_type": {
                t.value: {
                    "count": b.count,
                    "recall_all_at_k": b.recall,
                    "ndcg_at_k": b.ndcg,
                }
                for t, b in sorted(self.per_type.items(), key=lambda kv: kv[0].value)
            },
        }

    def table(self) -> str:
        """Human-readable summary table."""
        rows = [("type", "n", f"Ra@{self.k}", f"NDCG@{self.k}")]
        for qtype, b in sorted(self.per_type.items(), key=lambda kv: kv[0].value):
            rows.append((qtype.value, str(b.count), f"{b.recall:.4f}", f"{b.ndcg:.4f}"))
        rows.append(("macro (all)", str(self.total), f"{self.macro_recall:.4f}", f"{self.macro_ndcg:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = []
        for i, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * widths[j] for j in range(4)))
        return "\n".join(lines)


def evaluate_run(
    instances: Sequence,
    results: Mapping[str, RankedList | Sequence[str]],
    k: int = 5,
) -> EvalReport:
    """Score a batch of retrieval results against instance gold sets.

    The macro averages run over *every* instance, abstention included (they
    score 0.0 on both metrics by construction: empty gold). The per-type
    table covers only the six retrieval types.
    """
    missing = [i.instance_id for i in instances if i.instance_id not in results]
    if missing:
        raise EvaluationError(f"missing results for {len(missing)} instance(s): {missing[:10]}")
    scores: list[InstanceScore] = []
    for instance in instances:
        ranked = results[instance.instance_id]
        gold = instance.gold_session_ids
        scores.append(
            InstanceScore(
                instance_id=instance.instance_id,
                qtype=instance.qtype,
                recall=recall_all_at_k(ranked, gold, k),
                ndcg=ndcg_at_k(ranked, gold, k),
            )
        )
    total = len(scores)
    macro_recall = sum(s.recall for s in scores) / total if total else 0.0
    macro_ndcg = sum(s.ndcg for s in scores) / total if total else 0.0
    per_type: dict[QueryType, TypeBreakdown] = {}
    for qtype in RETRIEVAL_TYPES:
        typed = [s for s in scores if s.qtype == qtype]
        if typed:
            per_type[qtype] = TypeBreakdown(
                count=len(typed),
                recall=sum(s.recall for s in typed) / len(typed),
                ndcg=sum(s.ndcg for s in typed) / len(typed),
            )
    return EvalReport(
        k=k,
        total=total,
        macro_recall=macro_recall,
        macro_ndcg=macro_ndcg,
        per_type=per_type,
        instances=tuple(scores),
    )


def _resampled_means(values: np.ndarray, n_resamples: int, rng: np.random.Generator) -> np.ndarray:
    n = values.shape[0]
    means = np.empty(n_resamples, dtype=np.float64)
    block = max(1, _BLOCK_ELEMENTS // n)
    done = 0
    while done < n_resamples:
        rows = min(block, n_resamples - done)
        idx = rng.integers(0, n, size=(rows, n))
        means[done : done + rows] = values[idx].mean(axis=1)
        done += rows
    return means


def bootstrap_ci(
    scores: Sequence[float],
    n_resamples: int = DEFAULT_RESAMPLES,
    alpha: float = 0.05,
    seed: int = DEFAULT_SEED,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean at alpha/2 and 1 - alpha/2."""
    if len(scores) == 0:
        raise EvaluationError("bootstrap_ci requires at least one score")
    if n_resamples < 1:
        raise ValueError(f"n_resamples must be >= 1, got {n_resamples}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    values = np.asarray(scores, dtype=np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    means = _resampled_means(values, n_resamples, rng)
    lower, upper = np.quantile(means, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lower), float(upper)


class PairedTestResult(NamedTuple):
    mean_delta: float
    p_value: float


def paired_bootstrap_test(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = DEFAULT_SEED,
) -> PairedTestResult:
    """One-sided paired bootstrap (tests a > b on instance-paired scores).

    Resamples instance indices with replacement; the p-value is the fraction
    of resamples whose mean delta is <= 0.
    """
    if len(scores_a) != len(scores_b):
        raise EvaluationError(
            f"paired scores must align: {len(scores_a)} vs {len(scores_b)} entries"
        )
    if len(scores_a) == 0:
        raise EvaluationError("paired_bootstrap_test requires at least one pair")
    if n_resamples < 1:
        raise ValueError(f"n_resamples must be >= 1, got {n_resamples}")
    delta = np.asarray(scores_a, dtype=np.float64) - np.asarray(scores_b, dtype=np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    means = _resampled_means(delta, n_resamples, rng)
    p_value = float(np.count_nonzero(means <= 0.0) / n_resamples)
    return PairedTestResult(mean_delta=float(delta.mean()), p_value=p_value)


def stratified_kfold(
    instances: Sequence,
    folds: int = 5,
    seed: int = DEFAULT_SEED,
) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Split retrieval instances into stratified folds of (train, test) ids.

    Within each query type the order is a seeded shuffle; assignment then
    round-robins over the type-by-type concatenation with a single running
    cursor, so overall fold sizes differ by at most one even when individual
    type counts are not multiples of the fold count (470/5 lands on exactly
    94 per fold). Abstention instances are never folded.
    """
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    retrieval = [i for i in instances if i.qtype != QueryType.ABSTENTION]
    by_type: dict[QueryType, list[str]] = {}
    for instance in retrieval:
        by_type.setdefault(instance.qtype, []).append(instance.instance_id)
    for qtype, ids in by_type.items():
        if len(ids) < folds:
            raise EvaluationError(
                f"type {qtype.value} has {len(ids)} instances; cannot make {folds} folds"
            )
    rng = np.random.Generator(np.random.PCG64(seed))
    assignment: dict[str, int] = {}
    ordered_ids: list[str] = []
    cursor = 0
    for qtype in sorted(by_type, key=lambda t: t.value):
        ids = list(by_type[qtype])
        perm = rng.permutation(len(ids))
        for j in perm:
            assignment[ids[int(j)]] = cursor % folds
            ordered_ids.append(ids[int(j)])
            cursor += 1
    splits: list[tuple[tuple[str, ...], tuple[str, ...]]] = []
    for fold in range(folds):
        test = tuple(i for i in ordered_ids if assignment[i] == fold)
        train = tuple(i for i in ordered_ids if assignment[i] != fold)
        splits.append((train, test))
    return splits


@dataclass(frozen=True)
class CvReport:
    folds: int
    seed: int
    fold_means: tuple[float, ...]
    mean: float
    std: float
    fold_tables: tuple[RouteTable, ...]
    stability: Mapping[QueryType, tuple[Pipeline, int]]  # type -> (modal route, folds agreeing)
    full_data_mean: float
    full_table: RouteTable

    def to_dict(self) -> dict:
        return {
            "folds": self.folds,
            "seed": self.seed,
            "fold_means": list(self.fold_means),
            "mean": self.mean,
            "std": self.std,
            "full_data_mean": self.full_data_mean,
            "gap": self.full_data_mean - self.mean,
            "fold_tables": [
                {t.value: table.routes[t].value for t in RETRIEVAL_TYPES}
                for table in self.fold_tables
            ],
            "full_table": {t.value: self.full_table.routes[t].value for t in RETRIEVAL_TYPES},
            "stability": {
                t.value: {"modal_route": p.value, "folds_agreeing": n}
                for t, (p, n) in sorted(self.stability.items(), key=lambda kv: kv[0].value)
            },
        }


def cross_validate(
    instances: Sequence,
    pipeline_scores: Mapping[str, Mapping[Pipeline, float]],
    folds: int = 5,
    seed: int = DEFAULT_SEED,
) -> CvReport:
    """Derive a route table per training fold and score its held-out fold.

    ``pipeline_scores`` maps instance id -> pipeline -> the instance's
    Recall@k under that pipeline, precomputed once so fold evaluation is a
    pure table lookup. Route stability counts, per type, how many fold
    tables agree with the modal route (modal ties broken toward the cheaper
    pipeline).
    """
    retrieval = [i for i in instances if i.qtype != QueryType.ABSTENTION]
    by_id = {i.instance_id: i for i in retrieval}
    missing = [i.instance_id for i in retrieval if i.instance_id not in pipeline_scores]
    if missing:
        raise EvaluationError(f"missing pipeline scores for: {missing[:10]}")
    splits = stratified_kfold(retrieval, folds=folds, seed=seed)
    fold_means: list[float] = []
    fold_tables: list[RouteTable] = []
    for fold, (train_ids, test_ids) in enumerate(splits):
        table = derive_route_table(
            ((by_id[i], pipeline_scores[i]) for i in train_ids),
            provenance=f"derived-fold-{fold}",
        )
        test_scores = [pipeline_scores[i][table.routes[by_id[i].qtype]] for i in test_ids]
        fold_means.append(sum(test_scores) / len(test_scores))
        fold_tables.append(table)
    mean = sum(fold_means) / len(fold_means)
    std = float(np.std(fold_means, ddof=1)) if len(fold_means) > 1 else 0.0
    stability: dict[QueryType, tuple[Pipeline, int]] = {}
    for qtype in RETRIEVAL_TYPES:
        counts: dict[Pipeline, int] = {}
        for table in fold_tables:
            route = table.routes[qtype]
            counts[route] = counts.get(route, 0) + 1
        best = max(counts.items(), key=lambda kv: (kv[1], -PIPELINE_COST_ORDER.index(kv[0])))
        stability[qtype] = best
    full_table = derive_route_table(
        ((i, pipeline_scores[i.instance_id]) for i in retrieval), provenance="derived"
    )
    full_scores = [pipeline_scores[i.instance_id][full_table.routes[i.qtype]] for i in retrieval]
    full_data_mean = sum(full_scores) / len(full_scores)
    return CvReport(
        folds=folds,
        seed=seed,
        fold_means=tuple(fold_means),
        mean=mean,
        std=std,
        fold_tables=tuple(fold_tables),
        stability=stability,
        full_data_mean=full_data_mean,
        full_table=full_table,
    )


RUN_FILE_FORMAT = "memroute-run"
RUN_FILE_VERSION = 1


def write_run_file(
    path: Path | str,
    report: EvalReport,
    results: Mapping[str, RankedList | Sequence[str]],
    mode: str,
) -> None:
    """One JSONL record per instance, sorted by id; header first.

    No timestamps and fully sorted keys, so identical runs produce
    byte-identical files.
    """
    header = {
        "format": RUN_FILE_FORMAT,
        "version": RUN_FILE_VERSION,
        "k": report.k,
        "mode": mode,
        "total": report.total,
        "macro_recall": report.macro_recall,
        "macro_ndcg": report.macro_ndcg,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for score in sorted(report.instances, key=lambda s: s.instance_id):
        lines.append(
            json.dumps(
                {
                    "instance_id": score.instance_id,
                    "qtype": score.qtype.value,
                    "ranked": _ranked_ids(results[score.instance_id])[: report.k],
                    "recall_all_at_k": score.recall,
                    "ndcg_at_k": score.ndcg,
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_run_file(path: Path | str) -> tuple[dict, list[dict]]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise EvaluationError(f"{path}: empty run file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:] if line.strip()]
    except json.JSONDecodeError as exc:
        raise EvaluationError(f"{path}: corrupt run file: {exc}") from exc
    if header.get("format") != RUN_FILE_FORMAT:
        raise EvaluationError(f"{path}: not a run file (format={header.get('format')!r})")
    if header.get("version") != RUN_FILE_VERSION:
        raise EvaluationError(f"{path}: unsupported run file version {header.get('version')!r}")
    return header, records
