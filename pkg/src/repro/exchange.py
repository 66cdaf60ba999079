"""Host/container data exchange: scratch sessions and canonical JSONL files.

A run exchanges data with its container through one uniquely named scratch
directory bind-mounted at a fixed guest path. Records travel as canonical
JSON Lines: UTF-8, keys sorted by code point at every level, no insignificant
whitespace, one LF-terminated line per record. The byte form is deterministic,
which makes golden-file tests possible.
"""

from __future__ import annotations

import json
import logging
import math
import os
import secrets
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from repro.errors import (
    CountMismatch,
    EmptyBatch,
    MalformedOutputLine,
    OutputMissing,
    SerializationError,
    WorkspaceUnwritable,
)

logger = logging.getLogger(__name__)

Record = dict[str, Any]

INPUT_NAME = "input.jsonl"
OUTPUT_NAME = "output.jsonl"
GUEST_DIR = "/repro"
RUNS_SUBDIR = "runs"

WORKSPACE_ENV = "REPRO_WORKSPACE"
DEFAULT_WORKSPACE = "~/.repro"

_SNIPPET_LEN = 80


def default_workspace() -> Path:
    """Workspace directory: $REPRO_WORKSPACE if set, else ~/.repro."""
    raw = os.environ.get(WORKSPACE_ENV) or DEFAULT_WORKSPACE
    return Path(raw).expanduser()


# --- canonical serialization --------------------------------------------------


def _check_value(value: Any, path: str) -> None:
    if value is None or isinstance(value, (bool, str)):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise SerializationError(f"{path}: non-finite number {value!r}")
        return
    if isinstance(value, list):
        for i, item in enumerate(value):
            _check_value(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise SerializationError(f"{path}: object key {key!r} is not a string")
            _check_value(item, f"{path}.{key}" if path else key)
        return
    raise SerializationError(f"{path}: value of type {type(value).__name__} is not JSON")


def canonical_json(record: Record) -> str:
    """Canonical single-line JSON text for one record.

    Keys are sorted by code point at every nesting level, whitespace is
    stripped, non-ASCII stays raw (UTF-8 on encode), integers print verbatim
    and floats print as their shortest round-trip decimal. Non-finite numbers
    and non-string keys raise :class:`SerializationError`.
    """
    if not isinstance(record, dict):
        raise SerializationError(
            f"record must be a JSON object, got {type(record).__name__}"
        )
    _check_value(record, "")
    return json.dumps(
        record, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


def canonical_record_line(record: Record) -> bytes:
    """Canonical UTF-8 bytes for one record, LF-terminated."""
    return canonical_json(record).encode("utf-8") + b"\n"


def _reject_constant(token: str) -> Any:
    raise ValueError(f"non-finite constant {token}")


def parse_record(text: str | bytes) -> Record:
    """Parse one JSONL line into a record; the top level must be an object."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    value = json.loads(text, parse_constant=_reject_constant)
    if not isinstance(value, dict):
        raise ValueError(f"top level is {type(value).__name__}, not an object")
    return value


# --- sessions -------------------------------------------------------------------


@dataclass(frozen=True)
class ExchangeSession:
    """One run's scratch directory, mounted into the container at ``/repro``."""

    host_dir: Path
    run_id: str
    input_name: str = INPUT_NAME
    output_name: str = OUTPUT_NAME
    guest_dir: str = GUEST_DIR

    @property
    def input_path(self) -> Path:
        return self.host_dir / self.input_name

    @property
    def output_path(self) -> Path:
        return self.host_dir / self.output_name

    @property
    def guest_input_path(self) -> str:
        return f"{self.guest_dir}/{self.input_name}"

    @property
    def guest_output_path(self) -> str:
        return f"{self.guest_dir}/{self.output_name}"


def open_session(workspace: str | Path) -> ExchangeSession:
    """Create ``<workspace>/runs/<run_id>/`` with a fresh 128-bit hex run id.

    Random ids keep concurrent processes sharing one workspace collision-free.
    """
    base = Path(workspace).expanduser() / RUNS_SUBDIR
    for _ in range(3):
        run_id = secrets.token_hex(16)
        host_dir = base / run_id
        try:
            host_dir.mkdir(parents=True, exist_ok=False)
        except FileExistsError:
            continue
        except OSError as exc:
            raise WorkspaceUnwritable(workspace) from exc
        return ExchangeSession(host_dir=host_dir, run_id=run_id)
    raise WorkspaceUnwritable(workspace)


def write_inputs(session: ExchangeSession, records: list[Record]) -> Path:
    """Write the batch as canonical JSONL, every line LF-terminated."""
    if not records:
        raise EmptyBatch()
    payload = b"".join(canonical_record_line(record) for record in records)
    session.input_path.write_bytes(payload)
    return session.input_path


def _split_lines(data: bytes) -> list[bytes]:
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    return lines


def read_outputs(session: ExchangeSession, expected_count: int) -> list[Record]:
    """Read back ``output.jsonl``: exactly ``expected_count`` objects, in order."""
    if expected_count <= 0:
        raise ValueError("expected_count must be positive")
    path = session.output_path
    if not path.is_file():
        raise OutputMissing(path, session.guest_output_path)
    lines = _split_lines(path.read_bytes())
    if len(lines) != expected_count:
        raise CountMismatch(actual=len(lines), expected=expected_count)
    records = []
    for i, line in enumerate(lines, start=1):
        try:
            records.append(parse_record(line))
        except (ValueError, UnicodeDecodeError) as exc:
            snippet = line[:_SNIPPET_LEN].decode("utf-8", "replace")
            raise MalformedOutputLine(i, snippet, str(exc)) from exc
    return records


def close_session(session: ExchangeSession, keep: bool = False) -> None:
    """Remove the scratch directory unless ``keep``; safe to call twice.

    Deletion failures are logged, never raised: cleanup must not mask the
    run's actual result.
    """
    if keep:
        return
    if not session.host_dir.exists():
        return
    try:
        shutil.rmtree(session.host_dir)
    except OSError as exc:
        logger.warning("could not remove scratch directory %s: %s", session.host_dir, exc)
