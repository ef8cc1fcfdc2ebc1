"""Tokenization, inverted index, and BM25-ranked full-text search."""

from __future__ import annotations

import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import DataFormatError, DuplicateDocumentError
from .fusion import RankedList

_TOKEN_RE = re.compile(r"\w+")

INDEX_FORMAT = "memroute-lexical"
INDEX_VERSION = 1


def _fold(text: str) -> str:
    # NFKC + casefold to a fixpoint; a few code points need two passes.
    for _ in range(4):
        folded = unicodedata.normalize("NFKC", text).casefold()
        if folded == text:
            return folded
        text = folded
    return text


def tokenize(text: str) -> list[str]:
    """Split text into normalized word tokens.

    Lowercases and Unicode-folds, then splits on every non-alphanumeric
    boundary except underscores, so vocabulary terms like ``mixed_drink``
    survive as single tokens. Tokens re-tokenize to themselves.
    """
    return _TOKEN_RE.findall(_fold(text))


@dataclass(frozen=True)
class Bm25Params:
    """Saturation (k1) and length-normalization (b) constants."""

    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


class LexicalIndex:
    """In-memory inverted index with BM25 scoring.

    Single-writer during build; treat as immutable afterwards (searches hold
    no mutable state).
    """

    def __init__(self) -> None:
        self._postings: dict[str, list[tuple[str, int]]] = {}
        self._doc_lengths: dict[str, int] = {}
        self._total_length = 0

    @property
    def doc_count(self) -> int:
        return len(self._doc_lengths)

    @property
    def avg_doc_length(self) -> float:
        if not self._doc_lengths:
            return 0.0
        return self._total_length / len(self._doc_lengths)

    def doc_ids(self) -> list[str]:
        return list(self._doc_lengths)

    def doc_length(self, doc_id: str) -> int:
        return self._doc_lengths[doc_id]

    def terms(self) -> Iterator[str]:
        return iter(self._postings)

    def term_frequency(self, token: str, doc_id: str) -> int:
        for posting_doc, tf in self._postings.get(token, ()):
            if posting_doc == doc_id:
                return tf
        return 0

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._doc_lengths

    def add(self, doc_id: str, text: str) -> None:
        """Index a document. Re-adding an existing id is a caller bug."""
        if doc_id in self._doc_lengths:
            raise DuplicateDocumentError(f"doc id already indexed: {doc_id!r}")
        tokens = tokenize(text)
        self._doc_lengths[doc_id] = len(tokens)
        self._total_length += len(tokens)
        for token, tf in Counter(tokens).items():
            self._postings.setdefault(token, []).append((doc_id, tf))

    def idf(self, token: str) -> float:
        """Nonnegative IDF: ln(1 + (N - df + 0.5) / (df + 0.5))."""
        df = len(self._postings.get(token, ()))
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def search(self, query: str, k: int, params: Bm25Params = Bm25Params()) -> RankedList:
        """Top-k documents by BM25 score, descending.

        Every query token occurrence contributes one term to the sum.
        Zero-scoring documents are excluded; ties break by ascending doc id.
        An empty query yields an empty result.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        tokens = tokenize(query)
        if not tokens or not self._doc_lengths:
            return RankedList(source="bm25")
        avgdl = self.avg_doc_length
        scores: dict[str, float] = {}
        for token in tokens:
            postings = self._postings.get(token)
            if not postings:
                continue
            idf = self.idf(token)
            for doc_id, tf in postings:
                dl = self._doc_lengths[doc_id]
                denom = tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl)
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (params.k1 + 1.0) / denom
        ranked = sorted(
            ((doc_id, score) for doc_id, score in scores.items() if score != 0.0),
            key=lambda item: (-item[1], item[0]),
        )
        return RankedList(items=ranked[:k], source="bm25")

    def save(self, path: Path) -> None:
        """Write a line-oriented snapshot (one JSON object per line)."""
        with open(path, "w", encoding="utf-8") as fh:
            header = {"format": INDEX_FORMAT, "version": INDEX_VERSION}
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for doc_id, length in self._doc_lengths.items():
                fh.write(json.dumps({"doc": doc_id, "len": length}) + "\n")
            for token, postings in self._postings.items():
                record = {"tok": token, "post": [[d, tf] for d, tf in postings]}
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def load(cls, path: Path) -> "LexicalIndex":
        index = cls()
        with open(path, encoding="utf-8") as fh:
            try:
                header = json.loads(fh.readline())
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}: bad index header: {exc}") from exc
            if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
                raise DataFormatError(f"{path}: unsupported index header {header!r}")
            for lineno, line in enumerate(fh, start=2):
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
                if "doc" in record:
                    index._doc_lengths[record["doc"]] = record["len"]
                    index._total_length += record["len"]
                elif "tok" in record:
                    index._postings[record["tok"]] = [(d, tf) for d, tf in record["post"]]
                else:
                    raise DataFormatError(f"{path}:{lineno}: unrecognized record")
        for postings in index._postings.values():
            for doc_id, _ in postings:
                if doc_id not in index._doc_lengths:
                    raise DataFormatError(f"{path}: posting references unknown doc {doc_id!r}")
        return index
