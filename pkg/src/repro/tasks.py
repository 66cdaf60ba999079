"""Standardized per-task input/output record schemas.

Capsules of the same kind share one input and one output schema so different
capsules can be run on the same data. Schemas for the named kinds are closed:
unknown keys are violations. The ``raw`` kind is the escape hatch and accepts
any record.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Any

from repro.exchange import Record


class TaskKind(str, Enum):
    SUMMARIZATION = "summarization"
    GENERATION_METRIC = "generation-metric"
    QUESTION_ANSWERING = "question-answering"
    RAW = "raw"


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_keys(record: Record, allowed: set[str]) -> list[str]:
    violations = []
    for key in sorted(set(record) - allowed):
        violations.append(f"{key}: unexpected key")
    return violations


def _check_string(record: Record, key: str, *, non_empty: bool = False) -> list[str]:
    if key not in record:
        return [f"{key}: required"]
    value = record[key]
    if not isinstance(value, str):
        return [f"{key}: must be a string"]
    if non_empty and not value:
        return [f"{key}: must be non-empty"]
    return []


def _summarization_input(record: Record) -> list[str]:
    return _check_keys(record, {"document"}) + _check_string(
        record, "document", non_empty=True
    )


def _summarization_output(record: Record) -> list[str]:
    return _check_keys(record, {"summary"}) + _check_string(record, "summary")


def _metric_input(record: Record) -> list[str]:
    violations = _check_keys(record, {"candidate", "references"})
    violations += _check_string(record, "candidate")
    if "references" not in record:
        violations.append("references: required")
    else:
        refs = record["references"]
        if not isinstance(refs, list):
            violations.append("references: must be a list of strings")
        elif not refs:
            violations.append("references: must be non-empty")
        else:
            for i, ref in enumerate(refs):
                if not isinstance(ref, str):
                    violations.append(f"references[{i}]: must be a string")
    return violations


def _metric_output(record: Record) -> list[str]:
    violations = _check_keys(record, {"scores"})
    if "scores" not in record:
        violations.append("scores: required")
        return violations
    scores = record["scores"]
    if not isinstance(scores, dict):
        violations.append("scores: must be an object mapping metric names to numbers")
        return violations
    for name in sorted(scores):
        value = scores[name]
        if not _is_number(value) or not math.isfinite(value):
            violations.append(f"scores.{name}: must be a finite number")
    return violations


def _qa_input(record: Record) -> list[str]:
    violations = _check_keys(record, {"context", "question"})
    violations += _check_string(record, "context")
    violations += _check_string(record, "question", non_empty=True)
    return violations


def _qa_output(record: Record) -> list[str]:
    return _check_keys(record, {"answer"}) + _check_string(record, "answer")


def _raw(_record: Record) -> list[str]:
    return []


_INPUT_SCHEMAS = {
    TaskKind.SUMMARIZATION: _summarization_input,
    TaskKind.GENERATION_METRIC: _metric_input,
    TaskKind.QUESTION_ANSWERING: _qa_input,
    TaskKind.RAW: _raw,
}

_OUTPUT_SCHEMAS = {
    TaskKind.SUMMARIZATION: _summarization_output,
    TaskKind.GENERATION_METRIC: _metric_output,
    TaskKind.QUESTION_ANSWERING: _qa_output,
    TaskKind.RAW: _raw,
}


def validate_input(kind: TaskKind, record: Record) -> list[str]:
    """Check a record against the kind's input schema.

    Returns an empty list when the record conforms; otherwise a list of
    human-readable violations, each naming the offending key and rule.
    Never raises on any record.
    """
    if not isinstance(record, dict):
        return [f"record: must be a JSON object, got {type(record).__name__}"]
    return _INPUT_SCHEMAS[TaskKind(kind)](record)


def validate_output(kind: TaskKind, record: Record) -> list[str]:
    """Check a record against the kind's output schema; mirror of validate_input."""
    if not isinstance(record, dict):
        return [f"record: must be a JSON object, got {type(record).__name__}"]
    return _OUTPUT_SCHEMAS[TaskKind(kind)](record)
