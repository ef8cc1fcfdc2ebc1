"""Benchmark data model and loader.

The on-disk shape is a JSON array of question instances, each carrying its
own haystack of chat sessions plus the ids of the sessions that contain the
answer. Abstention questions are flagged by an ``_abs`` suffix on the
question id while keeping a regular ``question_type``; that underlying label
is preserved as the instance's *surface type* so oracle routing still has a
retrieval type to work with.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

from .errors import DataFormatError
from .routing import QueryType

ABSTENTION_ID_SUFFIX = "_abs"


@dataclass(frozen=True)
class Turn:
    role: str
    content: str


@dataclass(frozen=True)
class Session:
    session_id: str
    turns: tuple[Turn, ...]
    timestamp: str | None = None


@dataclass(frozen=True)
class BenchmarkInstance:
    instance_id: str
    question: str
    surface_type: QueryType
    gold_session_ids: tuple[str, ...]
    sessions: tuple[Session, ...]
    question_date: str | None = None

    @property
    def is_abstention(self) -> bool:
        return self.instance_id.endswith(ABSTENTION_ID_SUFFIX)

    @property
    def qtype(self) -> QueryType:
        """Effective type: abstention when flagged, else the surface type."""
        return QueryType.ABSTENTION if self.is_abstention else self.surface_type


@dataclass(frozen=True)
class Benchmark:
    instances: tuple[BenchmarkInstance, ...]

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[BenchmarkInstance]:
        return iter(self.instances)

    def retrieval_instances(self) -> tuple[BenchmarkInstance, ...]:
        return tuple(i for i in self.instances if not i.is_abstention)

    def type_counts(self) -> dict[QueryType, int]:
        counts: dict[QueryType, int] = {}
        for instance in self.instances:
            counts[instance.qtype] = counts.get(instance.qtype, 0) + 1
        return counts


def serialize_session(session: Session, include_timestamp: bool = True) -> str:
    """Flatten a session to the text form that gets indexed and embedded."""
    lines: list[str] = []
    if include_timestamp and session.timestamp:
        lines.append(f"date: {session.timestamp}")
    lines.extend(f"{turn.role}: {turn.content}" for turn in session.turns)
    return "\n".join(lines)


def _require(mapping: Mapping, key: str, kind: type, where: str):
    if key not in mapping:
        raise DataFormatError(f"{where}: missing field '{key}'")
    value = mapping[key]
    if not isinstance(value, kind):
        raise DataFormatError(
            f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _parse_turn(raw: object, where: str) -> Turn:
    if not isinstance(raw, dict):
        raise DataFormatError(f"{where}: expected object, got {type(raw).__name__}")
    role = _require(raw, "role", str, where)
    content = _require(raw, "content", str, where)
    return Turn(role=role, content=content)


def _parse_instance(raw: object, where: str) -> BenchmarkInstance:
    if not isinstance(raw, dict):
        raise DataFormatError(f"{where}: expected object, got {type(raw).__name__}")
    instance_id = _require(raw, "question_id", str, where)
    if not instance_id:
        raise DataFormatError(f"{where}.question_id: must be non-empty")
    type_label = _require(raw, "question_type", str, where)
    try:
        surface_type = QueryType(type_label)
    except ValueError as exc:
        raise DataFormatError(f"{where}.question_type: unknown type {type_label!r}") from exc
    if surface_type == QueryType.ABSTENTION:
        raise DataFormatError(
            f"{where}.question_type: abstention is marked by the '{ABSTENTION_ID_SUFFIX}' "
            "id suffix, not a type label"
        )
    question = _require(raw, "question", str, where)

    session_ids = _require(raw, "haystack_session_ids", list, where)
    sessions_raw = _require(raw, "haystack_sessions", list, where)
    if len(session_ids) != len(sessions_raw):
        raise DataFormatError(
            f"{where}: haystack_session_ids has {len(session_ids)} entries but "
            f"haystack_sessions has {len(sessions_raw)}"
        )
    dates_raw = raw.get("haystack_dates")
    if dates_raw is not None:
        if not isinstance(dates_raw, list) or len(dates_raw) != len(sessions_raw):
            raise DataFormatError(
                f"{where}.haystack_dates: must be a list aligned with haystack_sessions"
            )

    sessions: list[Session] = []
    seen_ids: set[str] = set()
    for i, (sid, turns_raw) in enumerate(zip(session_ids, sessions_raw)):
        if not isinstance(sid, str) or not sid:
            raise DataFormatError(f"{where}.haystack_session_ids[{i}]: expected non-empty string")
        if sid in seen_ids:
            raise DataFormatError(f"{where}.haystack_session_ids[{i}]: duplicate id {sid!r}")
        seen_ids.add(sid)
        if not isinstance(turns_raw, list):
            raise DataFormatError(f"{where}.haystack_sessions[{i}]: expected list of turns")
        turns = tuple(
            _parse_turn(t, f"{where}.haystack_sessions[{i}][{j}]")
            for j, t in enumerate(turns_raw)
        )
        timestamp = None
        if dates_raw is not None and dates_raw[i] is not None:
            if not isinstance(dates_raw[i], str):
                raise DataFormatError(f"{where}.haystack_dates[{i}]: expected string")
            timestamp = dates_raw[i]
        sessions.append(Session(session_id=sid, turns=turns, timestamp=timestamp))

    gold_raw = _require(raw, "answer_session_ids", list, where)
    gold: list[str] = []
    for i, sid in enumerate(gold_raw):
        if not isinstance(sid, str):
            raise DataFormatError(f"{where}.answer_session_ids[{i}]: expected string")
        if sid not in seen_ids:
            raise DataFormatError(
                f"{where}.answer_session_ids[{i}]: {sid!r} is not in the haystack"
            )
        gold.append(sid)

    question_date = raw.get("question_date")
    if question_date is not None and not isinstance(question_date, str):
        raise DataFormatError(f"{where}.question_date: expected string")

    return BenchmarkInstance(
        instance_id=instance_id,
        question=question,
        surface_type=surface_type,
        gold_session_ids=tuple(gold),
        sessions=tuple(sessions),
        question_date=question_date,
    )


def load_benchmark(path: Path | str) -> Benchmark:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise DataFormatError(f"{path}: top level must be a JSON array of instances")
    instances = []
    seen: set[str] = set()
    for i, item in enumerate(raw):
        instance = _parse_instance(item, where=f"{path.name}: instances[{i}]")
        if instance.instance_id in seen:
            raise DataFormatError(
                f"{path.name}: instances[{i}]: duplicate question_id {instance.instance_id!r}"
            )
        seen.add(instance.instance_id)
        instances.append(instance)
    return Benchmark(instances=tuple(instances))
