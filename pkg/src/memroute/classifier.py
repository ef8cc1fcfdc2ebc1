"""Rule-based query classification.

Queries are matched against ordered stages of case-insensitive regular
expressions; the first stage with any hit decides the query type, and
anything unmatched falls through to the default. The stock rules live in
``resources/classifier_rules.txt`` so they can be tuned without code changes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataFormatError, EvaluationError
from .routing import PIPELINE_FAMILY, QueryType, RouteTable, resolve_route


@dataclass(frozen=True)
class RuleStage:
    name: str
    qtype: QueryType
    patterns: tuple[re.Pattern, ...]

    def matches(self, text: str) -> bool:
        return any(p.search(text) for p in self.patterns)


@dataclass(frozen=True)
class RuleSet:
    stages: tuple[RuleStage, ...]
    default: QueryType = QueryType.KNOWLEDGE_UPDATE
    version: str = ""


def default_rules_path() -> Path:
    return Path(str(resources.files("memroute.resources") / "classifier_rules.txt"))


def default_rules() -> RuleSet:
    return load_rules(default_rules_path())


def load_rules(path: Path | str) -> RuleSet:
    path = Path(path)
    return parse_rules(path.read_text(encoding="utf-8").splitlines(), origin=str(path))


_STAGE_HEADER = re.compile(r"^\[(?P<name>[\w-]+)\s*->\s*(?P<qtype>[\w-]+)\]$")


def parse_rules(lines: Iterable[str], origin: str = "<rules>") -> RuleSet:
    stages: list[RuleStage] = []
    default = QueryType.KNOWLEDGE_UPDATE
    version = ""
    current_name: str | None = None
    current_qtype: QueryType | None = None
    current_patterns: list[re.Pattern] = []
    seen_names: set[str] = set()

    def flush(lineno: int) -> None:
        nonlocal current_name, current_qtype, current_patterns
        if current_name is None:
            return
        if not current_patterns:
            raise DataFormatError(f"{origin}:{lineno}: stage '{current_name}' has no patterns")
        assert current_qtype is not None
        stages.append(RuleStage(current_name, current_qtype, tuple(current_patterns)))
        current_name, current_qtype, current_patterns = None, None, []

    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("version:"):
            version = line.split(":", 1)[1].strip()
            continue
        if line.startswith("default:"):
            value = line.split(":", 1)[1].strip()
            try:
                default = QueryType(value)
            except ValueError as exc:
                raise DataFormatError(f"{origin}:{lineno}: unknown default type {value!r}") from exc
            continue
        header = _STAGE_HEADER.match(line)
        if header:
            flush(lineno)
            name = header.group("name")
            if name in seen_names:
                raise DataFormatError(f"{origin}:{lineno}: duplicate stage '{name}'")
            seen_names.add(name)
            try:
                current_qtype = QueryType(header.group("qtype"))
            except ValueError as exc:
                raise DataFormatError(
                    f"{origin}:{lineno}: unknown query type {header.group('qtype')!r}"
                ) from exc
            current_name = name
            continue
        if current_name is None:
            raise DataFormatError(f"{origin}:{lineno}: pattern outside any stage")
        try:
            current_patterns.append(re.compile(line, re.IGNORECASE))
        except re.error as exc:
            raise DataFormatError(f"{origin}:{lineno}: bad regex: {exc}") from exc
    flush(lineno + 1)
    if not stages:
        raise DataFormatError(f"{origin}: no stages defined")
    return RuleSet(stages=tuple(stages), default=default, version=version)


def classify_query(text: str, rules: RuleSet) -> QueryType:
    qtype, _ = classify_with_stage(text, rules)
    return qtype


def classify_with_stage(text: str, rules: RuleSet) -> tuple[QueryType, str | None]:
    """Classify and report which stage fired (None means the default)."""
    for stage in rules.stages:
        if stage.matches(text):
            return stage.qtype, stage.name
    return rules.default, None


@dataclass(frozen=True)
class ClassificationReport:
    total: int
    correct: int
    effective: int
    per_type: dict[QueryType, tuple[int, int]]  # type -> (correct, total)
    confusion: dict[tuple[QueryType, QueryType], int]  # (true, predicted) -> count

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def effective_accuracy(self) -> float:
        return self.effective / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "correct": self.correct,
            "effective": self.effective,
            "accuracy": self.accuracy,
            "effective_accuracy": self.effective_accuracy,
            "per_type": {
                t.value: {"correct": c, "total": n, "accuracy": (c / n if n else 0.0)}
                for t, (c, n) in sorted(self.per_type.items(), key=lambda kv: kv[0].value)
            },
            "confusion": {
                f"{t.value}->{p.value}": n
                for (t, p), n in sorted(
                    self.confusion.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
                )
            },
        }


def is_effective(true_type: QueryType, predicted: QueryType, table: RouteTable) -> bool:
    """A prediction is effective when it lands in the same route family.

    A misclassified query still retrieves identically if the table sends
    both types to pipelines of the same family, so routing quality is better
    measured this way than by raw label accuracy.
    """
    if true_type == predicted:
        return True
    true_family = PIPELINE_FAMILY[resolve_route(true_type, table)]
    predicted_family = PIPELINE_FAMILY[resolve_route(predicted, table)]
    return true_family == predicted_family


def effective_accuracy(
    gold: Sequence[QueryType],
    predicted: Sequence[QueryType],
    table: RouteTable,
) -> ClassificationReport:
    """Compare predicted types against gold, crediting same-family misroutes."""
    if len(gold) != len(predicted):
        raise EvaluationError(
            f"gold/predicted length mismatch: {len(gold)} vs {len(predicted)}"
        )
    per_type: dict[QueryType, list[int]] = {}
    confusion: dict[tuple[QueryType, QueryType], int] = {}
    correct = 0
    effective = 0
    for true_type, pred in zip(gold, predicted):
        bucket = per_type.setdefault(true_type, [0, 0])
        bucket[1] += 1
        if pred == true_type:
            correct += 1
            bucket[0] += 1
        confusion[(true_type, pred)] = confusion.get((true_type, pred), 0) + 1
        if is_effective(true_type, pred, table):
            effective += 1
    return ClassificationReport(
        total=len(gold),
        correct=correct,
        effective=effective,
        per_type={t: (c, n) for t, (c, n) in per_type.items()},
        confusion=confusion,
    )


def evaluate_classifier(
    pairs: Sequence[tuple[str, QueryType]],
    rules: RuleSet,
    table: RouteTable,
) -> ClassificationReport:
    """Score the classifier on (query text, true type) pairs.

    Abstention is a dataset artifact, not a routable surface form; callers
    must substitute each abstention instance's surface type before scoring.
    """
    gold = [true_type for _, true_type in pairs]
    predicted = [classify_query(text, rules) for text, _ in pairs]
    return effective_accuracy(gold, predicted, table)
