"""Reciprocal rank fusion of heterogeneous ranked lists."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

DEFAULT_RRF_K = 60


@dataclass
class RankedList:
    """An ordered retrieval result: (doc id, score) pairs, best first.

    Doc ids are unique and scores are non-increasing; ranks are the 1-based
    positions in ``items``.
    """

    items: list[tuple[str, float]] = field(default_factory=list)
    source: str = ""

    def ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.items]

    def truncated(self, k: int) -> "RankedList":
        return RankedList(items=self.items[:k], source=self.source)

    def __len__(self) -> int:
        return len(self.items)


def fusion_depth(k: int) -> int:
    """Candidate depth requested from each retriever before fusing.

    Deeper pools than the final cutoff keep fusion stable when the component
    rankings disagree.
    """
    return max(50, 10 * k)


def rrf_fuse(lists: Sequence[RankedList], k_const: int = DEFAULT_RRF_K) -> RankedList:
    """Fuse ranked lists by summing 1 / (k_const + rank) per document.

    Only lists that rank a document contribute a term for it; input scores
    are ignored entirely (rank is the only signal). Output is sorted by
    fused score descending, ties broken by ascending doc id.
    """
    if not lists:
        raise ValueError("rrf_fuse requires at least one input list")
    if k_const < 1:
        raise ValueError(f"k_const must be >= 1, got {k_const}")
    scores: dict[str, float] = {}
    for ranked in lists:
        for rank, (doc_id, _score) in enumerate(ranked.items, start=1):
            scores[doc_id] = scores.get(doc_id, 0.0) + 1.0 / (k_const + rank)
    fused = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return RankedList(items=fused, source="rrf")
