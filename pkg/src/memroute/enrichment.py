"""Storage-time vocabulary enrichment.

Three mechanisms expand the *lexical* index only: hypernym maps (specific
term -> broader categories), action bridges (query-side verbs -> content-side
variants), and topic rooms (named term sets added when every trigger in a
co-occurrence set is present). The original content is never modified and is
never used for embedding enrichment; expansion helps term matching but would
drag a session's single embedding vector off-topic.

The vocabulary file is line-oriented, hand-editable UTF-8 with ``#``
comments. ``[hypernyms]`` and ``[bridges]`` sections hold
``trigger -> term, term, ...`` rules; the ``[rooms]`` section holds
``name | trigger, trigger | term, term`` rules. A room name may appear on
several lines to give it alternative co-occurrence sets; the room count is
over distinct names.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import DataFormatError
from .lexical import tokenize

_SECTIONS = ("hypernyms", "bridges", "rooms")


@dataclass(frozen=True)
class TopicRoom:
    """Terms added when all triggers co-occur in a session."""

    name: str
    triggers: tuple[str, ...]
    added_terms: tuple[str, ...]


@dataclass(frozen=True)
class EnrichmentVocabulary:
    hypernyms: dict[str, tuple[str, ...]]
    bridges: dict[str, tuple[str, ...]]
    rooms: tuple[TopicRoom, ...]
    version: str = ""

    def room_names(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for room in self.rooms:
            seen.setdefault(room.name, None)
        return tuple(seen)

    def counts(self) -> tuple[int, int, int]:
        """(hypernym entries, bridge entries, distinct room names)."""
        return len(self.hypernyms), len(self.bridges), len(self.room_names())


EMPTY_VOCABULARY = EnrichmentVocabulary(hypernyms={}, bridges={}, rooms=(), version="empty")


def default_vocabulary_path() -> Path:
    return Path(str(resources.files("memroute.resources") / "vocabulary_v2.txt"))


def _check_term(term: str, where: str) -> str:
    if tokenize(term) != [term]:
        raise DataFormatError(f"{where}: term {term!r} does not survive tokenization as a single token")
    return term


def _parse_terms(raw: str, where: str) -> tuple[str, ...]:
    terms = tuple(part.strip() for part in raw.split(",") if part.strip())
    for term in terms:
        _check_term(term, where)
    return terms


def parse_vocabulary(lines: Iterable[str], origin: str = "<vocabulary>") -> EnrichmentVocabulary:
    hypernyms: dict[str, tuple[str, ...]] = {}
    bridges: dict[str, tuple[str, ...]] = {}
    rooms: list[TopicRoom] = []
    version = ""
    section: str | None = None
    for lineno, raw_line in enumerate(lines, start=1):
        where = f"{origin}:{lineno}"
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("version:"):
            version = line.split(":", 1)[1].strip()
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise DataFormatError(f"{where}: unknown section {name!r}")
            section = name
            continue
        if section in ("hypernyms", "bridges"):
            if "->" not in line:
                raise DataFormatError(f"{where}: expected 'trigger -> term, ...'")
            trigger_raw, terms_raw = line.split("->", 1)
            trigger = _check_term(trigger_raw.strip(), where)
            terms = _parse_terms(terms_raw, where)
            if not terms:
                raise DataFormatError(f"{where}: entry {trigger!r} has no expansion terms")
            if terms == (trigger,):
                raise DataFormatError(f"{where}: entry {trigger!r} maps only to itself")
            target = hypernyms if section == "hypernyms" else bridges
            if trigger in target:
                raise DataFormatError(f"{where}: duplicate entry for {trigger!r}")
            target[trigger] = terms
        elif section == "rooms":
            parts = line.split("|")
            if len(parts) != 3:
                raise DataFormatError(f"{where}: expected 'name | trigger, trigger | term, ...'")
            name = _check_term(parts[0].strip(), where)
            triggers = _parse_terms(parts[1], where)
            terms = _parse_terms(parts[2], where)
            if len(triggers) < 2:
                raise DataFormatError(f"{where}: room {name!r} needs >= 2 co-occurrence triggers")
            if not terms:
                raise DataFormatError(f"{where}: room {name!r} has no added terms")
            rooms.append(TopicRoom(name=name, triggers=triggers, added_terms=terms))
        else:
            raise DataFormatError(f"{where}: rule outside any [section]")
    return EnrichmentVocabulary(hypernyms=hypernyms, bridges=bridges, rooms=tuple(rooms), version=version)


def load_vocabulary(path: Path | str) -> EnrichmentVocabulary:
    """Load and validate a vocabulary file; errors carry line numbers."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_vocabulary(fh, origin=str(path))


def enrich(content: str, vocab: EnrichmentVocabulary) -> str:
    """Enrichment text for a session: appended bridge terms only.

    Hypernym expansions fire per content token in order, then action-bridge
    terms, then topic rooms (in vocabulary order) whose triggers all occur
    among the content tokens; a fired room contributes its name as a plain
    searchable token followed by its added terms. Output terms are
    deduplicated, first occurrence wins. The original content is untouched;
    callers append the result to the lexical index only.
    """
    tokens = tokenize(content)
    token_set = set(tokens)
    out: list[str] = []
    seen: set[str] = set()

    def emit(term: str) -> None:
        if term not in seen:
            seen.add(term)
            out.append(term)

    for token in tokens:
        for term in vocab.hypernyms.get(token, ()):
            emit(term)
    for token in tokens:
        for term in vocab.bridges.get(token, ()):
            emit(term)
    for room in vocab.rooms:
        if all(trigger in token_set for trigger in room.triggers):
            emit(room.name)
            for term in room.added_terms:
                emit(term)
    return " ".join(out)
