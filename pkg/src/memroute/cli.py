"""Command-line surface.

Thin wrappers over the core package: every subcommand parses arguments,
calls the same functions the test suite exercises, and writes deterministic
artifacts (run files, reports, route tables) with no timestamps inside, so
identical invocations produce byte-identical files.

Exit codes: 0 success, 1 evaluation failure, 2 I/O or configuration error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .bench import (
    classifier_pairs,
    ingest_benchmark,
    parse_mode,
    pipeline_score_table,
    run_benchmark,
    store_path_for,
)
from .classifier import classify_with_stage, default_rules, evaluate_classifier, load_rules
from .dataset import load_benchmark
from .enrichment import default_vocabulary_path, load_vocabulary
from .errors import (
    ConfigurationError,
    DataFormatError,
    EvaluationError,
    MemrouteError,
    MissingEmbeddingError,
    StoreCorruptionError,
)
from .evaluation import (
    DEFAULT_RESAMPLES,
    DEFAULT_SEED,
    bootstrap_ci,
    cross_validate,
    evaluate_run,
    paired_bootstrap_test,
    read_run_file,
    write_run_file,
)
from .routing import (
    PIPELINE_FAMILY,
    RETRIEVAL_TYPES,
    Pipeline,
    QueryType,
    default_route_table,
    derive_route_table,
    execute_pipeline,
    load_route_table,
    resolve_route,
    save_route_table,
)
from .store import open_store
from .vectors import (
    EMBED_TRUNCATION_CHARS,
    FileBackedProvider,
    HashedBowProvider,
    content_digest,
    truncate_for_embedding,
    write_sidecar,
)

STORE_ROOT_ENV = "MEMROUTE_STORE_ROOT"

_store_root_option = click.option(
    "--store-root",
    envvar=STORE_ROOT_ENV,
    type=click.Path(path_type=Path),
    required=True,
    help=f"Directory holding per-instance stores (env: {STORE_ROOT_ENV}).",
)
_routes_option = click.option(
    "--routes",
    "routes_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Route-table JSON (defaults to the shipped table).",
)
_rules_option = click.option(
    "--rules",
    "rules_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Classifier rules file (defaults to the shipped rules).",
)
_k_option = click.option("-k", "--top-k", "k", type=click.IntRange(min=1), default=5, show_default=True)
_seed_option = click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)


def _load_routes(routes_path: Path | None):
    return load_route_table(routes_path) if routes_path else default_route_table()


def _load_rules(rules_path: Path | None):
    return load_rules(rules_path) if rules_path else default_rules()


def _make_provider(provider: str, dimension: int, sidecar: Path | None):
    if provider == "none":
        return None
    if provider == "hashed-bow":
        return HashedBowProvider(dimension=dimension)
    if provider == "file":
        if sidecar is None:
            raise ConfigurationError("--provider file requires --sidecar")
        return FileBackedProvider(sidecar)
    raise ConfigurationError(f"unknown provider {provider!r}")


def _progress(label: str, every: int = 50):
    count = 0

    def tick(_: str) -> None:
        nonlocal count
        count += 1
        if count % every == 0:
            click.echo(f"  {label}: {count} done", err=True)

    return tick


@click.group(name="memroute")
@click.version_option(version=__version__, prog_name="memroute")
def cli() -> None:
    """Routed retrieval over long-term conversational memory."""


@cli.command()
@click.argument("benchmark_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_store_root_option
@click.option(
    "--vocab",
    "vocab_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Enrichment vocabulary (defaults to the shipped file).",
)
@click.option(
    "--provider",
    type=click.Choice(["hashed-bow", "file", "none"]),
    default="hashed-bow",
    show_default=True,
    help="Embedding provider; 'none' builds lexical-only stores.",
)
@click.option("--dimension", type=click.IntRange(min=1), default=256, show_default=True)
@click.option(
    "--sidecar",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Precomputed-embeddings sidecar for --provider file.",
)
@click.option(
    "--timestamps/--no-timestamps",
    default=True,
    show_default=True,
    help="Index each session's timestamp as a leading 'date:' line.",
)
@click.option("--force", is_flag=True, help="Allow re-ingest into a non-empty store root.")
def ingest(
    benchmark_path: Path,
    store_root: Path,
    vocab_path: Path | None,
    provider: str,
    dimension: int,
    sidecar: Path | None,
    timestamps: bool,
    force: bool,
) -> None:
    """Build one store per benchmark instance under the store root."""
    benchmark = load_benchmark(benchmark_path)
    vocab = load_vocabulary(vocab_path or default_vocabulary_path())
    embedder = _make_provider(provider, dimension, sidecar)
    ingest_benchmark(
        benchmark,
        store_root,
        vocab,
        embedder,
        include_timestamps=timestamps,
        force=force,
        progress=_progress("ingest"),
    )
    retrieval = len(benchmark.retrieval_instances())
    abstention = len(benchmark) - retrieval
    click.echo(
        f"built {len(benchmark)} stores under {store_root} "
        f"({retrieval} retrieval / {abstention} abstention)"
    )


@cli.command()
@click.argument("store")
@click.argument("query")
@_store_root_option
@_routes_option
@_rules_option
@_k_option
@click.option(
    "--type",
    "query_type",
    default="auto",
    show_default=True,
    help="Query type for routing, or 'auto' to classify.",
)
@click.option(
    "--pipeline",
    "pipeline_name",
    default=None,
    help="Bypass routing and run this pipeline directly.",
)
def search(
    store: str,
    query: str,
    store_root: Path,
    routes_path: Path | None,
    rules_path: Path | None,
    k: int,
    query_type: str,
    pipeline_name: str | None,
) -> None:
    """Search one store, routing by type unless --pipeline overrides."""
    table = _load_routes(routes_path)
    handle = open_store(store_path_for(store_root, store))
    if pipeline_name is not None:
        try:
            pipeline = Pipeline(pipeline_name)
        except ValueError:
            valid = ", ".join(p.value for p in Pipeline)
            raise ConfigurationError(
                f"unknown pipeline {pipeline_name!r}; expected one of: {valid}"
            ) from None
        type_banner = "(explicit pipeline)"
    elif query_type == "auto":
        qtype, stage = classify_with_stage(query, _load_rules(rules_path))
        pipeline = resolve_route(qtype, table)
        type_banner = f"{qtype.value} (classified via {stage or 'default'})"
    else:
        try:
            qtype = QueryType(query_type)
        except ValueError:
            valid = ", ".join(t.value for t in RETRIEVAL_TYPES)
            raise ConfigurationError(
                f"unknown query type {query_type!r}; expected one of: {valid} (or 'auto')"
            ) from None
        pipeline = resolve_route(qtype, table)
        type_banner = qtype.value
    ranked = execute_pipeline(pipeline, query, handle, k)
    click.echo(f"store: {store}")
    click.echo(f"type: {type_banner}")
    click.echo(f"pipeline: {pipeline.value}")
    if not ranked.items:
        click.echo("(no results)")
    for rank, (session_id, score) in enumerate(ranked.items, start=1):
        click.echo(f"{rank:2d}. {session_id}  {score:.6f}")


@cli.command()
@click.argument("query")
@_routes_option
@_rules_option
def classify(query: str, routes_path: Path | None, rules_path: Path | None) -> None:
    """Classify a query and show where the table would route it."""
    table = _load_routes(routes_path)
    qtype, stage = classify_with_stage(query, _load_rules(rules_path))
    pipeline = resolve_route(qtype, table)
    click.echo(f"query_type: {qtype.value}")
    click.echo(f"stage: {stage or '(default)'}")
    click.echo(f"pipeline: {pipeline.value}")
    click.echo(f"family: {PIPELINE_FAMILY[pipeline].value}")


def _mode_slug(mode: str) -> str:
    return mode.replace(":", "-")


@cli.command()
@click.argument("benchmark_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_store_root_option
@click.option(
    "--mode",
    default="oracle",
    show_default=True,
    help="oracle | predicted | uniform:<pipeline>",
)
@_routes_option
@_rules_option
@_k_option
@_seed_option
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("runs"),
    show_default=True,
    help="Directory for the run file and report.",
)
def bench(
    benchmark_path: Path,
    store_root: Path,
    mode: str,
    routes_path: Path | None,
    rules_path: Path | None,
    k: int,
    seed: int,
    out_dir: Path,
) -> None:
    """Run the full benchmark in one mode; write run file + report."""
    parse_mode(mode)  # fail fast on a bad mode before loading anything
    benchmark = load_benchmark(benchmark_path)
    table = _load_routes(routes_path)
    rules = _load_rules(rules_path) if mode == "predicted" else None
    output = run_benchmark(
        benchmark,
        store_root,
        mode,
        table,
        rules=rules,
        k=k,
        progress=_progress("bench"),
    )
    report = evaluate_run(benchmark.instances, output.results, k=k)
    recalls = [s.recall for s in report.instances]
    ci_low, ci_high = bootstrap_ci(recalls, seed=seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    run_path = out_dir / f"run-{_mode_slug(mode)}.jsonl"
    report_path = out_dir / f"report-{_mode_slug(mode)}.json"
    write_run_file(run_path, report, output.results, mode=mode)
    payload = report.to_dict()
    payload.update(
        {
            "mode": mode,
            "seed": seed,
            "recall_ci95": [ci_low, ci_high],
            "route_table": {t.value: table.routes[t].value for t in RETRIEVAL_TYPES},
        }
    )
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    click.echo(report.table())
    click.echo(
        f"macro Ra@{k}: {report.macro_recall:.4f} "
        f"[{ci_low:.4f}, {ci_high:.4f}] (95% bootstrap)"
    )
    click.echo(f"run file: {run_path}")
    click.echo(f"report: {report_path}")


@cli.command()
@click.argument("run_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def report(run_path: Path) -> None:
    """Re-render a run file as a summary table."""
    header, records = read_run_file(run_path)
    click.echo(f"mode: {header['mode']}  k: {header['k']}  instances: {header['total']}")
    by_type: dict[str, list[tuple[float, float]]] = {}
    for record in records:
        by_type.setdefault(record["qtype"], []).append(
            (record["recall_all_at_k"], record["ndcg_at_k"])
        )
    for qtype in sorted(by_type):
        rows = by_type[qtype]
        recall = sum(r for r, _ in rows) / len(rows)
        ndcg = sum(n for _, n in rows) / len(rows)
        click.echo(f"{qtype:26s} n={len(rows):4d}  Ra@{header['k']}={recall:.4f}  NDCG={ndcg:.4f}")
    click.echo(
        f"macro Ra@{header['k']}: {header['macro_recall']:.4f}  "
        f"NDCG@{header['k']}: {header['macro_ndcg']:.4f}"
    )


@cli.command()
@click.argument("run_a", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("run_b", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--resamples", type=click.IntRange(min=1), default=DEFAULT_RESAMPLES, show_default=True)
@_seed_option
def compare(run_a: Path, run_b: Path, resamples: int, seed: int) -> None:
    """Paired bootstrap test between two run files (tests A > B on Ra@k)."""
    header_a, records_a = read_run_file(run_a)
    header_b, records_b = read_run_file(run_b)
    if header_a["k"] != header_b["k"]:
        raise EvaluationError(f"k mismatch: {header_a['k']} vs {header_b['k']}")
    scores_a = {r["instance_id"]: r["recall_all_at_k"] for r in records_a}
    scores_b = {r["instance_id"]: r["recall_all_at_k"] for r in records_b}
    if set(scores_a) != set(scores_b):
        only_a = sorted(set(scores_a) - set(scores_b))[:5]
        only_b = sorted(set(scores_b) - set(scores_a))[:5]
        raise EvaluationError(
            f"run files cover different instances (only in A: {only_a}, only in B: {only_b})"
        )
    ids = sorted(scores_a)
    result = paired_bootstrap_test(
        [scores_a[i] for i in ids],
        [scores_b[i] for i in ids],
        n_resamples=resamples,
        seed=seed,
    )
    click.echo(f"A: {header_a['mode']} (macro Ra@{header_a['k']} {header_a['macro_recall']:.4f})")
    click.echo(f"B: {header_b['mode']} (macro Ra@{header_b['k']} {header_b['macro_recall']:.4f})")
    click.echo(f"mean delta (A - B): {result.mean_delta:+.4f}")
    click.echo(f"one-sided p (A > B): {result.p_value:.4f}")


@cli.command(name="classify-report")
@click.argument("benchmark_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_routes_option
@_rules_option
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Optional JSON report path.",
)
def classify_report(
    benchmark_path: Path,
    routes_path: Path | None,
    rules_path: Path | None,
    out_path: Path | None,
) -> None:
    """Score the rule classifier on a benchmark's questions."""
    benchmark = load_benchmark(benchmark_path)
    table = _load_routes(routes_path)
    rules = _load_rules(rules_path)
    result = evaluate_classifier(classifier_pairs(benchmark), rules, table)
    for qtype, (correct, total) in sorted(result.per_type.items(), key=lambda kv: kv[0].value):
        click.echo(f"{qtype.value:26s} {correct:4d}/{total:<4d} ({correct / total:.1%})")
    click.echo(f"accuracy: {result.correct}/{result.total} ({result.accuracy:.1%})")
    click.echo(
        f"effective routing accuracy: {result.effective}/{result.total} "
        f"({result.effective_accuracy:.1%})"
    )
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(
            json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        click.echo(f"report: {out_path}")


@cli.command(name="derive-routes")
@click.argument("benchmark_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_store_root_option
@_k_option
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=Path("routes-derived.json"),
    show_default=True,
)
def derive_routes(benchmark_path: Path, store_root: Path, k: int, out_path: Path) -> None:
    """Derive the best route table from per-pipeline benchmark scores."""
    benchmark = load_benchmark(benchmark_path)
    scores = pipeline_score_table(
        benchmark, store_root, k=k, progress=_progress("score", every=25)
    )
    retrieval = benchmark.retrieval_instances()
    table = derive_route_table((i, scores[i.instance_id]) for i in retrieval)
    for qtype in RETRIEVAL_TYPES:
        click.echo(f"{qtype.value:26s} -> {table.routes[qtype].value}")
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    save_route_table(table, out_path)
    click.echo(f"route table: {out_path}")


@cli.command()
@click.argument("benchmark_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_store_root_option
@click.option("--folds", type=click.IntRange(min=2), default=5, show_default=True)
@_k_option
@_seed_option
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=Path("cv-report.json"),
    show_default=True,
)
def cv(
    benchmark_path: Path,
    store_root: Path,
    folds: int,
    k: int,
    seed: int,
    out_path: Path,
) -> None:
    """Stratified cross-validation of route derivation."""
    benchmark = load_benchmark(benchmark_path)
    scores = pipeline_score_table(
        benchmark, store_root, k=k, progress=_progress("score", every=25)
    )
    result = cross_validate(benchmark.retrieval_instances(), scores, folds=folds, seed=seed)
    for fold, table in enumerate(result.fold_tables):
        routes = ", ".join(f"{t.value}={table.routes[t].value}" for t in RETRIEVAL_TYPES)
        click.echo(f"fold {fold}: Ra@{k} {result.fold_means[fold]:.4f}  [{routes}]")
    click.echo(f"CV Ra@{k}: {result.mean:.4f} ± {result.std:.4f} ({folds} folds)")
    click.echo(f"full-data Ra@{k}: {result.full_data_mean:.4f} (gap {result.full_data_mean - result.mean:+.4f})")
    click.echo("route stability (folds agreeing with modal route):")
    for qtype, (route, count) in sorted(result.stability.items(), key=lambda kv: kv[0].value):
        click.echo(f"  {qtype.value:26s} {route.value:16s} {count}/{folds}")
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(f"report: {out_path}")


@cli.command(name="export-texts")
@click.argument("benchmark_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="JSONL of {digest, kind, text} records to embed externally.",
)
@click.option(
    "--timestamps/--no-timestamps",
    default=True,
    show_default=True,
    help="Must match the ingest setting, or digests will not line up.",
)
def export_texts(benchmark_path: Path, out_path: Path, timestamps: bool) -> None:
    """Export every embed input (sessions + questions) for offline embedding.

    Texts are already truncated to the embedding window; the digest of each
    record is the sidecar key an external toolchain must produce.
    """
    from .dataset import serialize_session

    benchmark = load_benchmark(benchmark_path)
    seen: set[bytes] = set()
    count = 0
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as handle:
        def write(kind: str, text: str) -> None:
            nonlocal count
            truncated = truncate_for_embedding(text)
            digest = content_digest(truncated)
            if digest in seen:
                return
            seen.add(digest)
            handle.write(
                json.dumps(
                    {"digest": digest.hex(), "kind": kind, "text": truncated}, sort_keys=True
                )
                + "\n"
            )
            count += 1

        for instance in benchmark:
            write("question", instance.question)
            for session in instance.sessions:
                write("session", serialize_session(session, include_timestamp=timestamps))
    click.echo(f"exported {count} unique texts (window {EMBED_TRUNCATION_CHARS} chars) to {out_path}")


@cli.command(name="import-embeddings")
@click.argument("vectors_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="Binary sidecar file to write.",
)
def import_embeddings(vectors_path: Path, out_path: Path) -> None:
    """Convert externally computed embeddings (JSONL) into a sidecar.

    Input records: {"digest": "<64 hex chars>", "vector": [floats]}; every
    vector must share one dimension.
    """
    vectors: dict[bytes, list[float]] = {}
    dimension: int | None = None
    with vectors_path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                digest = bytes.fromhex(record["digest"])
                vector = [float(x) for x in record["vector"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{vectors_path}:{lineno}: bad record: {exc}") from exc
            if len(digest) != 32:
                raise DataFormatError(
                    f"{vectors_path}:{lineno}: digest must be 64 hex chars (sha-256)"
                )
            if dimension is None:
                dimension = len(vector)
            elif len(vector) != dimension:
                raise DataFormatError(
                    f"{vectors_path}:{lineno}: dimension {len(vector)} != {dimension}"
                )
            vectors[digest] = vector
    if dimension is None:
        raise DataFormatError(f"{vectors_path}: no vector records found")
    import numpy as np

    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    write_sidecar(
        out_path,
        dimension,
        {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()},
    )
    click.echo(f"wrote {len(vectors)} vectors (dim {dimension}) to {out_path}")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option(
    "--store-root",
    envvar=STORE_ROOT_ENV,
    type=click.Path(path_type=Path),
    default=None,
    help=f"Directory holding per-instance stores (env: {STORE_ROOT_ENV}).",
)
@_routes_option
@_rules_option
def serve(
    host: str,
    port: int,
    store_root: Path | None,
    routes_path: Path | None,
    rules_path: Path | None,
) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(
        store_root=store_root,
        route_table=_load_routes(routes_path),
        rules=_load_rules(rules_path),
    )
    uvicorn.run(app, host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 2
    except EvaluationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (
        ConfigurationError,
        DataFormatError,
        StoreCorruptionError,
        MissingEmbeddingError,
    ) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except MemrouteError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
