"""Tokenizer and BM25 inverted-index tests.

The exact-score constants below were hand-evaluated from the scoring formula
(N=2, df=2, k1=1.2, b=0.75) before the index was written, and are pinned to
guard against drift in the implementation.
"""

import math

import pytest

from memroute.errors import DataFormatError, DuplicateDocumentError
from memroute.lexical import Bm25Params, LexicalIndex, tokenize


class TestTokenize:
    def test_lowercases_and_splits_on_punctuation(self):
        assert tokenize("I took a cocktail-making class") == [
            "i", "took", "a", "cocktail", "making", "class",
        ]

    def test_underscore_terms_survive_as_single_tokens(self):
        assert tokenize("mixed_drink") == ["mixed_drink"]
        assert tokenize("he was_at the party") == ["he", "was_at", "the", "party"]

    def test_empty_input(self):
        assert tokenize("") == []
        assert tokenize("  \t\n ") == []
        assert tokenize("!!! --- ???") == []

    def test_numbers_kept(self):
        assert tokenize("May 2023, 3pm") == ["may", "2023", "3pm"]

    @pytest.mark.parametrize(
        "text",
        [
            "İstanbul",       # dotted capital I: two-pass fold case
            "ẞtraße",         # capital sharp s
            "ﬁle ﬂow",        # ligatures expand under NFKC
            "café CAFÉ",
            "ＡＢＣ１２３",      # fullwidth forms
            "ｶﾞ",              # halfwidth katakana + voicing mark
            "Ⅷ",              # roman numeral compatibility char
            "mixed_drink Grüße",
        ],
    )
    def test_tokens_are_fold_stable(self, text):
        """Every produced token must re-tokenize to itself.

        This is the property that makes enrichment terms and query tokens
        comparable to indexed tokens regardless of the source text's form.
        """
        for token in tokenize(text):
            assert tokenize(token) == [token]

    def test_fullwidth_and_case_fold_to_same_tokens(self):
        assert tokenize("ＡＢＣ") == tokenize("abc")
        assert tokenize("CAFÉ") == tokenize("café")


class TestIndexBuild:
    def test_doc_stats(self):
        index = LexicalIndex()
        index.add("d1", "a b a")
        assert index.doc_count == 1
        assert index.doc_length("d1") == 3
        assert index.term_frequency("a", "d1") == 2
        assert index.term_frequency("b", "d1") == 1
        assert index.term_frequency("z", "d1") == 0

    def test_avg_doc_length(self):
        index = LexicalIndex()
        index.add("d1", "a b")
        index.add("d2", "a b c d")
        assert index.avg_doc_length == 3.0

    def test_empty_index_stats(self):
        index = LexicalIndex()
        assert index.doc_count == 0
        assert index.avg_doc_length == 0.0
        assert index.search("anything", k=5).items == []

    def test_duplicate_doc_id_rejected(self):
        index = LexicalIndex()
        index.add("d1", "a")
        with pytest.raises(DuplicateDocumentError):
            index.add("d1", "b")

    def test_membership(self):
        index = LexicalIndex()
        index.add("d1", "a")
        assert "d1" in index
        assert "d2" not in index


class TestBm25Params:
    def test_defaults(self):
        params = Bm25Params()
        assert params.k1 == 1.2
        assert params.b == 0.75

    def test_validation(self):
        with pytest.raises(ValueError):
            Bm25Params(k1=-0.1)
        with pytest.raises(ValueError):
            Bm25Params(b=1.5)
        with pytest.raises(ValueError):
            Bm25Params(b=-0.01)


# Hand-computed for corpus {d1: "a b", d2: "a a a"}, query "a":
#   N=2, avgdl=2.5, df(a)=2 -> idf = ln(1 + 0.5/2.5) = ln(1.2)
#   d1: tf=1, dl=2 -> idf * 2.2 / (1 + 1.2*(0.25 + 0.75*2/2.5))
#   d2: tf=3, dl=3 -> idf * 6.6 / (3 + 1.2*(0.25 + 0.75*3/2.5))
PINNED_IDF = 0.1823215567939546
PINNED_D1 = 0.19856803215183175
PINNED_D2 = 0.2747311129771919


class TestBm25Scoring:
    @pytest.fixture
    def two_doc_index(self):
        index = LexicalIndex()
        index.add("d1", "a b")
        index.add("d2", "a a a")
        return index

    def test_pinned_constants(self, two_doc_index):
        assert two_doc_index.idf("a") == pytest.approx(PINNED_IDF, abs=1e-9)
        result = two_doc_index.search("a", k=5)
        scores = dict(result.items)
        assert scores["d1"] == pytest.approx(PINNED_D1, abs=1e-9)
        assert scores["d2"] == pytest.approx(PINNED_D2, abs=1e-9)
        assert result.ids() == ["d2", "d1"]

    def test_idf_positive_even_when_term_in_all_docs(self, two_doc_index):
        assert two_doc_index.idf("a") > 0.0

    def test_unmatched_docs_excluded(self):
        index = LexicalIndex()
        index.add("d1", "cocktail class")
        index.add("d2", "tax filing")
        result = index.search("cocktail", k=5)
        assert result.ids() == ["d1"]

    def test_unknown_query_term_yields_empty(self, two_doc_index):
        assert two_doc_index.search("zebra", k=5).items == []

    def test_empty_query_yields_empty(self, two_doc_index):
        assert two_doc_index.search("", k=5).items == []
        assert two_doc_index.search("...", k=5).items == []

    def test_k_must_be_positive(self, two_doc_index):
        with pytest.raises(ValueError):
            two_doc_index.search("a", k=0)

    def test_k_truncation(self, two_doc_index):
        assert len(two_doc_index.search("a", k=1)) == 1

    def test_shorter_doc_wins_on_equal_tf(self):
        index = LexicalIndex()
        index.add("d1", "apple pie")
        index.add("d2", "apple pie crust recipe")
        result = index.search("apple", k=2)
        assert result.ids() == ["d1", "d2"]

    def test_tie_broken_by_ascending_doc_id(self):
        index = LexicalIndex()
        index.add("zz", "apple")
        index.add("aa", "apple")
        result = index.search("apple", k=2)
        assert result.ids() == ["aa", "zz"]

    def test_repeated_query_token_doubles_contribution(self, two_doc_index):
        once = dict(two_doc_index.search("a", k=5).items)
        twice = dict(two_doc_index.search("a a", k=5).items)
        for doc_id in once:
            assert twice[doc_id] == pytest.approx(2 * once[doc_id], abs=1e-12)

    def test_adding_query_term_occurrence_never_lowers_rank(self):
        base = LexicalIndex()
        boosted = LexicalIndex()
        base.add("target", "apple pear")
        boosted.add("target", "apple apple")  # same length, one more query hit
        for index in (base, boosted):
            index.add("other", "apple banana")
        rank_base = base.search("apple", k=5).ids().index("target")
        rank_boosted = boosted.search("apple", k=5).ids().index("target")
        assert rank_boosted <= rank_base


def brute_force_bm25(docs, query, params=Bm25Params()):
    """Independent full-scan scorer used to cross-check the index."""
    tokenized = {doc_id: tokenize(text) for doc_id, text in docs.items()}
    n = len(docs)
    avgdl = sum(len(t) for t in tokenized.values()) / n
    query_tokens = tokenize(query)
    scored = []
    for doc_id, tokens in tokenized.items():
        dl = len(tokens)
        score = 0.0
        for qt in query_tokens:
            tf = tokens.count(qt)
            if tf == 0:
                continue
            df = sum(1 for t in tokenized.values() if qt in t)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            score += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl))
        if score != 0.0:
            scored.append((doc_id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def test_search_matches_brute_force_on_random_corpora(rng):
    vocab = ["apple", "pear", "plum", "fig", "kiwi", "melon", "grape", "lime"]
    for _ in range(25):
        n_docs = rng.randint(2, 12)
        docs = {
            f"doc{j:02d}": " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 15)))
            for j in range(n_docs)
        }
        query = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 3)))
        index = LexicalIndex()
        for doc_id, text in docs.items():
            index.add(doc_id, text)
        got = index.search(query, k=n_docs)
        expected = brute_force_bm25(docs, query)
        assert got.ids() == [d for d, _ in expected]
        for (_, got_score), (_, want_score) in zip(got.items, expected):
            assert got_score == pytest.approx(want_score, abs=1e-12)


class TestPersistence:
    def test_round_trip_preserves_search(self, tmp_path):
        index = LexicalIndex()
        index.add("d1", "cocktail making class last friday")
        index.add("d2", "budget planning for the trip")
        index.add("d3", "mixed_drink recipes and a cocktail")
        path = tmp_path / "index.jsonl"
        index.save(path)
        loaded = LexicalIndex.load(path)
        assert loaded.doc_count == index.doc_count
        assert loaded.avg_doc_length == index.avg_doc_length
        for query in ("cocktail", "mixed_drink", "trip budget", "class"):
            assert loaded.search(query, k=3).items == index.search(query, k=3).items

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "index.jsonl"
        path.write_text('{"format": "something-else", "version": 1}\n')
        with pytest.raises(DataFormatError):
            LexicalIndex.load(path)

    def test_garbage_header_rejected(self, tmp_path):
        path = tmp_path / "index.jsonl"
        path.write_text("not json at all\n")
        with pytest.raises(DataFormatError):
            LexicalIndex.load(path)

    def test_posting_for_unknown_doc_rejected(self, tmp_path):
        path = tmp_path / "index.jsonl"
        path.write_text(
            '{"format": "memroute-lexical", "version": 1}\n'
            '{"tok": "a", "post": [["ghost", 1]]}\n'
        )
        with pytest.raises(DataFormatError):
            LexicalIndex.load(path)

    def test_corrupt_record_reports_line(self, tmp_path):
        path = tmp_path / "index.jsonl"
        path.write_text(
            '{"format": "memroute-lexical", "version": 1}\n'
            '{"doc": "d1", "len": 2}\n'
            "{broken\n"
        )
        with pytest.raises(DataFormatError, match=":3"):
            LexicalIndex.load(path)
