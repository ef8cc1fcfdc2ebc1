"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import random
import string

import pytest

from memroute.dataset import Benchmark, BenchmarkInstance, Session, Turn
from memroute.routing import QueryType


def make_session(session_id, text, timestamp=None, role="user"):
    """Single-turn session; enough for most retrieval fixtures."""
    return Session(session_id=session_id, turns=(Turn(role=role, content=text),), timestamp=timestamp)


def make_instance(
    instance_id,
    question="what happened",
    qtype=QueryType.SINGLE_SESSION_USER,
    gold=("s1",),
    sessions=None,
):
    if sessions is None:
        sessions = tuple(make_session(sid, f"filler text for {sid}") for sid in gold) or (
            make_session("s1", "filler"),
        )
    return BenchmarkInstance(
        instance_id=instance_id,
        question=question,
        surface_type=qtype,
        gold_session_ids=tuple(gold),
        sessions=tuple(sessions),
    )


def make_typed_instances(counts):
    """counts: mapping QueryType -> n. Ids encode the type for readability."""
    instances = []
    for qtype, n in counts.items():
        for i in range(n):
            instances.append(
                make_instance(f"{qtype.value}_{i:03d}", qtype=qtype, gold=("s1",))
            )
    return instances


def random_words(rng, n, alphabet=string.ascii_lowercase, length=5):
    return [
        "".join(rng.choice(alphabet) for _ in range(length)) for _ in range(n)
    ]


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def mini_benchmark_path():
    from pathlib import Path

    return Path(__file__).parent / "data" / "mini_benchmark.json"
