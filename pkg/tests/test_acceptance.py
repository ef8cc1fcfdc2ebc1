"""Acceptance suite: ten self-contained checks, one printed line each.

Every check re-derives its expectations with an independent oracle inside
this file (or pins hand-computed constants with their derivations), then
exercises the package against them. Run with plain ``pytest``; each test
prints ``acceptance NN <label>: PASS`` or ``: FAIL`` even under capture.
"""

import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import make_instance, make_typed_instances
from memroute.classifier import effective_accuracy
from memroute.enrichment import enrich, parse_vocabulary
from memroute.evaluation import (
    bootstrap_ci,
    cross_validate,
    ndcg_at_k,
    recall_all_at_k,
    stratified_kfold,
)
from memroute.fusion import RankedList, rrf_fuse
from memroute.lexical import Bm25Params, LexicalIndex, tokenize
from memroute.routing import (
    PIPELINE_COST_ORDER,
    RETRIEVAL_TYPES,
    Pipeline,
    QueryType,
    default_route_table,
    derive_route_table,
    resolve_route,
)
from memroute.vectors import HashedBowProvider, VectorIndex


@contextmanager
def criterion(capsys, number, label):
    """Print exactly one verdict line for an acceptance check."""
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"acceptance {number:02d} {label}: FAIL")
        raise
    with capsys.disabled():
        print(f"acceptance {number:02d} {label}: PASS")


# --- independent metric oracles ---------------------------------------------


def oracle_recall(ranked_ids, gold, k):
    if not gold:
        return 0.0
    return 1.0 if set(gold) <= set(ranked_ids[:k]) else 0.0


def oracle_ndcg(ranked_ids, gold, k):
    if not gold:
        return 0.0
    gold_set = set(gold)
    dcg = sum(
        1.0 / math.log2(rank + 1)
        for rank, doc in enumerate(ranked_ids[:k], start=1)
        if doc in gold_set
    )
    ideal = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(len(gold_set), k) + 1))
    return dcg / ideal


def test_01_metric_oracle_equivalence(capsys):
    with criterion(capsys, 1, "recall/ndcg match brute force on 1000 instances"):
        rng = random.Random(101)
        started = time.perf_counter()
        for _ in range(1000):
            n = rng.randint(1, 20)
            haystack = [f"s{j:02d}" for j in range(n)]
            gold = rng.sample(haystack, rng.randint(0, min(6, n)))
            ranked = rng.sample(haystack, rng.randint(0, n))
            assert recall_all_at_k(ranked, gold, 5) == oracle_recall(ranked, gold, 5)
            assert abs(ndcg_at_k(ranked, gold, 5) - oracle_ndcg(ranked, gold, 5)) <= 1e-12
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"metric check took {elapsed:.2f}s"


def test_02_ndcg_hand_values(capsys):
    with criterion(capsys, 2, "ndcg hand-computed values"):
        # single gold at rank 3: dcg = 1/log2(4) = 0.5, ideal = 1
        assert abs(ndcg_at_k(["x", "y", "g"], ["g"], 5) - 0.5) <= 1e-9
        # gold at ranks 1 and 3: (1 + 1/log2(4)) / (1 + 1/log2(3))
        expected = (1.0 + 1.0 / math.log2(4)) / (1.0 + 1.0 / math.log2(3))
        assert abs(expected - 0.9197207891481876) <= 1e-12
        assert abs(ndcg_at_k(["g1", "x", "g2"], ["g1", "g2"], 5) - expected) <= 1e-9
        # perfect ranking
        assert abs(ndcg_at_k(["g1", "g2"], ["g1", "g2"], 5) - 1.0) <= 1e-9


# --- fusion ------------------------------------------------------------------


def oracle_rrf(lists, k_const):
    totals = {}
    for ranked in lists:
        for rank, (doc, _) in enumerate(ranked.items, start=1):
            totals[doc] = totals.get(doc, 0.0) + 1.0 / (k_const + rank)
    return sorted(totals.items(), key=lambda item: (-item[1], item[0]))


def random_fusion_case(rng, min_first=1):
    docs = [f"d{j:02d}" for j in range(rng.randint(min_first, 20))]
    lists = []
    for idx in range(rng.randint(1, 3)):
        size = rng.randint(min_first if idx == 0 else 1, len(docs))
        chosen = rng.sample(docs, size)
        items = [(doc, 10.0 - pos + rng.random()) for pos, doc in enumerate(chosen)]
        lists.append(RankedList(items=items, source=f"list{idx}"))
    return lists


def test_03_rrf_equivalence_and_properties(capsys):
    with criterion(capsys, 3, "rrf matches exhaustive summation + properties"):
        rng = random.Random(303)
        for _ in range(500):
            lists = random_fusion_case(rng)
            fused = rrf_fuse(lists)
            assert fused.items == oracle_rrf(lists, 60)

        for _ in range(500):
            lists = random_fusion_case(rng, min_first=2)
            fused = rrf_fuse(lists)

            # score-agnosticism: scores are ignored, only ranks matter
            rescored = [
                RankedList(
                    items=[(doc, rng.uniform(-5, 5)) for doc, _ in ranked.items],
                    source=ranked.source,
                )
                for ranked in lists
            ]
            assert rrf_fuse(rescored).items == fused.items

            # monotonicity: promoting a doc one rank strictly raises its score
            target_list = lists[0]
            pos = rng.randrange(1, len(target_list.items))
            doc = target_list.items[pos][0]
            swapped = list(target_list.items)
            swapped[pos - 1], swapped[pos] = swapped[pos], swapped[pos - 1]
            promoted = rrf_fuse(
                [RankedList(items=swapped, source="p"), *lists[1:]]
            )
            assert dict(promoted.items)[doc] > dict(fused.items)[doc]


# --- lexical -----------------------------------------------------------------


def full_scan_bm25(docs, query, params=Bm25Params()):
    tokenized = {doc_id: tokenize(text) for doc_id, text in docs.items()}
    n = len(docs)
    avgdl = sum(len(t) for t in tokenized.values()) / n
    scored = []
    for doc_id, tokens in tokenized.items():
        dl = len(tokens)
        score = 0.0
        for qt in tokenize(query):
            tf = tokens.count(qt)
            if tf == 0:
                continue
            df = sum(1 for t in tokenized.values() if qt in t)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            score += (
                idf
                * tf
                * (params.k1 + 1.0)
                / (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl))
            )
        if score != 0.0:
            scored.append((doc_id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def test_04_bm25_equivalence(capsys):
    with criterion(capsys, 4, "bm25 matches full scan + pinned constants"):
        # corpus {d1: "a b", d2: "a a a"}, query "a":
        #   N=2, avgdl=2.5, df(a)=2 -> idf = ln(1 + 0.5/2.5) = ln(1.2)
        #   d1: idf * 2.2 / (1 + 1.2*(0.25 + 0.75*2/2.5))
        #   d2: idf * 6.6 / (3 + 1.2*(0.25 + 0.75*3/2.5))
        index = LexicalIndex()
        index.add("d1", "a b")
        index.add("d2", "a a a")
        scores = dict(index.search("a", k=5).items)
        assert abs(index.idf("a") - 0.1823215567939546) <= 1e-9
        assert abs(scores["d1"] - 0.19856803215183175) <= 1e-9
        assert abs(scores["d2"] - 0.2747311129771919) <= 1e-9

        rng = random.Random(404)
        pool = [f"w{i}" for i in range(30)]
        for _ in range(200):
            n_docs = rng.randint(2, 50)
            docs = {
                f"doc{j:02d}": " ".join(
                    rng.choice(pool) for _ in range(rng.randint(1, 12))
                )
                for j in range(n_docs)
            }
            query = " ".join(rng.choice(pool) for _ in range(rng.randint(1, 4)))
            index = LexicalIndex()
            for doc_id, text in docs.items():
                index.add(doc_id, text)
            got = index.search(query, k=n_docs)
            want = full_scan_bm25(docs, query)
            assert got.ids() == [doc_id for doc_id, _ in want]
            for (_, got_score), (_, want_score) in zip(got.items, want):
                assert got_score == pytest.approx(want_score, rel=1e-9)


# --- enrichment asymmetry ----------------------------------------------------


def fresh_tokens(rng, count, provider):
    """Random tokens hashing to pairwise-distinct embedding buckets."""
    while True:
        tokens = []
        while len(tokens) < count:
            token = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(8))
            if token not in tokens:
                tokens.append(token)
        buckets = {int(np.argmax(provider.embed(token))) for token in tokens}
        if len(buckets) == count:
            return tokens


def test_05_enrichment_asymmetry(capsys):
    with criterion(capsys, 5, "enrichment lifts lexical rank, lowers cosine"):
        rng = random.Random(505)
        provider = HashedBowProvider(dimension=4096)
        passed = 0
        for _ in range(100):
            noise_count = rng.randint(9, 16)
            qa, qb, f1, f2, *noise = fresh_tokens(rng, 4 + noise_count, provider)
            query = f"{qa} {qb}"
            target_text = f"{qa} {f1} {f2}"
            rival_text = qa  # shorter doc beats the target on the raw index

            vocab = parse_vocabulary(
                ["[bridges]", f"{f1} -> {qb}, {', '.join(noise)}"], origin="inline"
            )
            bridges = enrich(target_text, vocab)
            assert bridges.split() == [qb, *noise]

            raw = LexicalIndex()
            raw.add("target", target_text)
            raw.add("rival", rival_text)
            enriched = LexicalIndex()
            enriched.add("target", f"{target_text} {bridges}")
            enriched.add("rival", rival_text)
            raw_rank = raw.search(query, k=5).ids().index("target") + 1
            enriched_rank = enriched.search(query, k=5).ids().index("target") + 1

            cos_raw = float(provider.embed(target_text) @ provider.embed(query))
            cos_enriched = float(
                provider.embed(f"{target_text} {bridges}") @ provider.embed(query)
            )

            if enriched_rank <= raw_rank and cos_enriched < cos_raw:
                passed += 1
        assert passed == 100


# --- routing -----------------------------------------------------------------

SHIPPED_ROUTES = {
    QueryType.KNOWLEDGE_UPDATE: Pipeline.ENRICHED_FTS,
    QueryType.MULTI_SESSION: Pipeline.ENRICHED_HYBRID,
    QueryType.SINGLE_SESSION_ASSISTANT: Pipeline.EMBEDDINGS,
    QueryType.SINGLE_SESSION_PREFERENCE: Pipeline.EMBEDDINGS,
    QueryType.SINGLE_SESSION_USER: Pipeline.BASELINE_FTS,
    QueryType.TEMPORAL_REASONING: Pipeline.HYBRID,
}


def test_06_routing_determinism_and_derivation(capsys):
    with criterion(capsys, 6, "shipped routes + 50 random derivations"):
        table = default_route_table()
        for qtype, pipeline in SHIPPED_ROUTES.items():
            assert resolve_route(qtype, table) == pipeline

        rng = random.Random(606)
        loser_values = [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75]
        correct = 0
        for case in range(50):
            train = []
            expected = {}
            for qtype in RETRIEVAL_TYPES:
                tied = rng.sample(PIPELINE_COST_ORDER, rng.randint(1, 3))
                expected[qtype] = min(tied, key=PIPELINE_COST_ORDER.index)
                scores = {
                    p: 0.875 if p in tied else rng.choice(loser_values)
                    for p in PIPELINE_COST_ORDER
                }
                train.append(
                    (make_instance(f"c{case}_{qtype.value}", qtype=qtype), scores)
                )
            derived = derive_route_table(train)
            if all(derived.routes[t] == expected[t] for t in RETRIEVAL_TYPES):
                correct += 1
        assert correct == 50


def test_07_effective_routing_accuracy(capsys):
    with criterion(capsys, 7, "effective routing accuracy 390/470"):
        gold = (
            [QueryType.MULTI_SESSION] * 338
            + [QueryType.KNOWLEDGE_UPDATE] * 52
            + [QueryType.SINGLE_SESSION_ASSISTANT] * 80
        )
        predicted = (
            [QueryType.MULTI_SESSION] * 338  # exact
            + [QueryType.SINGLE_SESSION_USER] * 52  # fts family either way
            + [QueryType.MULTI_SESSION] * 80  # embedding vs hybrid family
        )
        report = effective_accuracy(gold, predicted, default_route_table())
        assert report.total == 470
        assert report.correct == 338
        assert report.effective == 390
        assert abs(report.effective_accuracy - 390 / 470) <= 1e-12
        assert abs(report.effective_accuracy - 0.8297872340425532) <= 1e-12


# --- statistics --------------------------------------------------------------


def test_08_bootstrap_ci_sanity(capsys):
    with criterion(capsys, 8, "bootstrap ci brackets the binomial interval"):
        scores = [1.0] * 397 + [0.0] * 103  # mean 0.794 over n=500
        started = time.perf_counter()
        low, high = bootstrap_ci(scores, n_resamples=10_000, seed=17)
        again = bootstrap_ci(scores, n_resamples=10_000, seed=17)
        elapsed = time.perf_counter() - started
        assert (low, high) == again
        assert abs(low - 0.757) <= 0.01
        assert abs(high - 0.830) <= 0.01
        assert elapsed < 10.0, f"bootstrap took {elapsed:.2f}s"


CV_COUNTS = {
    QueryType.KNOWLEDGE_UPDATE: 75,
    QueryType.MULTI_SESSION: 130,
    QueryType.SINGLE_SESSION_ASSISTANT: 55,
    QueryType.SINGLE_SESSION_PREFERENCE: 30,
    QueryType.SINGLE_SESSION_USER: 105,
    QueryType.TEMPORAL_REASONING: 75,
}

# route each fold must derive, and the per-instance recall it then scores
CV_PLAN = {
    QueryType.KNOWLEDGE_UPDATE: (Pipeline.ENRICHED_FTS, 1.0),
    QueryType.MULTI_SESSION: (Pipeline.HYBRID, 0.75),
    QueryType.SINGLE_SESSION_ASSISTANT: (Pipeline.EMBEDDINGS, 1.0),
    QueryType.SINGLE_SESSION_PREFERENCE: (Pipeline.BASELINE_FTS, 0.5),
    QueryType.SINGLE_SESSION_USER: (Pipeline.BASELINE_FTS, 1.0),
    QueryType.TEMPORAL_REASONING: (Pipeline.HYBRID, 0.75),
}


def cv_scores_for(qtype):
    """Per-pipeline recall patterns with hand-resolvable argmaxes and ties."""
    winner, value = CV_PLAN[qtype]
    if qtype == QueryType.MULTI_SESSION:
        # enriched_hybrid ties hybrid at 0.75 -> cheaper hybrid must win
        return {
            p: 0.75 if p in (Pipeline.HYBRID, Pipeline.ENRICHED_HYBRID) else 0.25
            for p in PIPELINE_COST_ORDER
        }
    if qtype == QueryType.SINGLE_SESSION_ASSISTANT:
        return {
            p: 1.0 if p in (Pipeline.EMBEDDINGS, Pipeline.ENRICHED_HYBRID) else 0.0
            for p in PIPELINE_COST_ORDER
        }
    if qtype == QueryType.SINGLE_SESSION_PREFERENCE:
        return {p: 0.5 for p in PIPELINE_COST_ORDER}  # full tie -> cheapest
    if qtype == QueryType.SINGLE_SESSION_USER:
        return {p: 1.0 if p == winner else 0.5 for p in PIPELINE_COST_ORDER}
    return {p: value if p == winner else 0.0 for p in PIPELINE_COST_ORDER}


def test_09_stratified_cv_mechanics(capsys):
    with criterion(capsys, 9, "94-per-fold splits + enumerated cv report"):
        instances = make_typed_instances(CV_COUNTS)
        assert len(instances) == 470

        splits = stratified_kfold(instances, folds=5, seed=17)
        assert [len(test) for _, test in splits] == [94] * 5
        assert [len(train) for train, _ in splits] == [376] * 5
        assert splits == stratified_kfold(instances, folds=5, seed=17)

        scores = {i.instance_id: cv_scores_for(i.qtype) for i in instances}
        report = cross_validate(instances, scores, folds=5, seed=17)

        # per fold: 15*1.0 + 26*0.75 + 11*1.0 + 6*0.5 + 21*1.0 + 15*0.75 = 80.75
        expected_fold_mean = 80.75 / 94
        assert report.fold_means == (expected_fold_mean,) * 5
        assert report.mean == pytest.approx(expected_fold_mean, abs=1e-12)
        assert report.std <= 1e-12
        assert report.full_data_mean == expected_fold_mean
        for qtype, (winner, _) in CV_PLAN.items():
            assert report.stability[qtype] == (winner, 5)
            assert report.full_table.routes[qtype] == winner
            for table in report.fold_tables:
                assert table.routes[qtype] == winner


# --- persistence -------------------------------------------------------------


def test_10_persistence_fidelity(capsys, tmp_path):
    with criterion(capsys, 10, "identical search results after save/load"):
        rng = random.Random(1010)
        pool = [f"w{i}" for i in range(30)]
        vocab = parse_vocabulary(
            [
                "[hypernyms]",
                "w0 -> w28, w29",
                "[bridges]",
                "w1 -> w27",
            ],
            origin="inline",
        )
        provider = HashedBowProvider(dimension=48)
        for trial in range(100):
            n_docs = rng.randint(3, 12)
            docs = {
                f"d{j:02d}": " ".join(
                    rng.choice(pool) for _ in range(rng.randint(2, 12))
                )
                for j in range(n_docs)
            }
            raw = LexicalIndex()
            enriched = LexicalIndex()
            vectors = VectorIndex(dimension=48)
            for doc_id, text in docs.items():
                extra = enrich(text, vocab)
                raw.add(doc_id, text)
                enriched.add(doc_id, f"{text} {extra}" if extra else text)
                vectors.add(doc_id, provider.embed(text))

            raw.save(tmp_path / "raw.jsonl")
            enriched.save(tmp_path / "enriched.jsonl")
            vectors.save(tmp_path / "vectors.bin")
            raw_back = LexicalIndex.load(tmp_path / "raw.jsonl")
            enriched_back = LexicalIndex.load(tmp_path / "enriched.jsonl")
            vectors_back = VectorIndex.load(tmp_path / "vectors.bin")

            query = " ".join(rng.choice(pool) for _ in range(rng.randint(1, 4)))
            k = rng.randint(1, 10)
            assert raw.search(query, k).items == raw_back.search(query, k).items
            assert (
                enriched.search(query, k).items
                == enriched_back.search(query, k).items
            )
            query_vec = provider.embed(query)
            assert (
                vectors.search(query_vec, k).items
                == vectors_back.search(query_vec, k).items
            )
