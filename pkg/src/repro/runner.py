"""Orchestrate one capsule run: resolve, ensure image, exchange, execute, validate.

The batch is the primitive: one container launch processes the whole record
list, and the container must emit exactly one output line per input line, in
input order. Errors from subordinate modules are re-raised with a phase label
so callers can tell environment problems (pull, engine) from capsule problems
(nonzero exit, malformed output).
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from repro.engine import ContainerSpec
from repro.errors import (
    ContainerTimeout,
    EmptyBatch,
    ImageUnavailable,
    InputValidationFailed,
    NonZeroExit,
    OutputValidationFailed,
    ReproError,
)
from repro.exchange import (
    Record,
    close_session,
    default_workspace,
    open_session,
    read_outputs,
    write_inputs,
)
from repro.manifest import canonical_image_ref, render_command
from repro.registry import CapsuleId, Registry, resolve
from repro.tasks import validate_input, validate_output

STDERR_TAIL_BYTES = 4096
_MIB = 1024 * 1024

PHASES = ("pull", "exchange-write", "container", "exchange-read")


class PullPolicy(str, Enum):
    IF_MISSING = "if-missing"
    ALWAYS = "always"
    NEVER = "never"


@dataclass(frozen=True)
class RunOptions:
    timeout_s: int = 3600
    keep_scratch: bool = False
    pull_policy: PullPolicy = PullPolicy.IF_MISSING
    validate_io: bool = True
    workspace: str | Path | None = None  # None resolves to $REPRO_WORKSPACE or ~/.repro

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        object.__setattr__(self, "pull_policy", PullPolicy(self.pull_policy))


@dataclass(frozen=True)
class RunReport:
    """Outcome of one capsule run."""

    capsule: CapsuleId  # version always resolved
    image: str
    exit_code: int
    phase_ms: dict[str, int] = field(default_factory=dict)
    records_in: int = 0
    records_out: int = 0
    scratch_path: Path | None = None
    stderr_tail: str = ""


def stderr_tail(stderr: bytes, limit: int = STDERR_TAIL_BYTES) -> str:
    return stderr[-limit:].decode("utf-8", "replace")


@contextmanager
def _phase(name: str):
    """Stamp errors escaping this block with the pipeline phase they came from."""
    try:
        yield
    except ReproError as exc:
        if exc.phase is None:
            exc.phase = name
        raise


def run_capsule(
    client,
    registry: Registry,
    capsule: CapsuleId | str,
    records: list[Record],
    options: RunOptions | None = None,
) -> tuple[list[Record], RunReport]:
    """Run a record batch through a capsule and return (outputs, report).

    The pipeline: resolve the manifest, pull the image per policy, write the
    batch into a fresh exchange session, run one container against it, read
    back exactly ``len(records)`` outputs, and validate them against the task
    schema. The scratch directory is removed on every path unless
    ``keep_scratch``; on a nonzero exit no output is returned, even partially.
    """
    opts = options or RunOptions()
    if isinstance(capsule, str):
        capsule = CapsuleId.parse(capsule)
    if not records:
        raise EmptyBatch()

    with _phase("resolve"):
        manifest = resolve(registry, capsule)
    resolved = CapsuleId(manifest.name, manifest.version)

    if opts.validate_io:
        with _phase("validate-input"):
            indices = []
            details = []
            for i, record in enumerate(records):
                violations = validate_input(manifest.task, record)
                if violations:
                    indices.append(i)
                    details.append(f"record {i}: {violations[0]}")
            if indices:
                raise InputValidationFailed(indices, details)

    image = canonical_image_ref(manifest.image)
    phase_ms = dict.fromkeys(PHASES, 0)

    started = time.perf_counter()
    with _phase("pull"):
        if opts.pull_policy is PullPolicy.ALWAYS:
            client.pull_image(image)
        elif opts.pull_policy is PullPolicy.IF_MISSING:
            if not client.image_present(image):
                client.pull_image(image)
        elif not client.image_present(image):
            raise ImageUnavailable(image)
    phase_ms["pull"] = _elapsed_ms(started)

    session = None
    try:
        started = time.perf_counter()
        with _phase("exchange-write"):
            session = open_session(opts.workspace or default_workspace())
            write_inputs(session, records)
        phase_ms["exchange-write"] = _elapsed_ms(started)

        started = time.perf_counter()
        with _phase("container"):
            argv = render_command(
                manifest.command,
                input_path=session.guest_input_path,
                output_path=session.guest_output_path,
                dir_path=session.guest_dir,
            )
            spec = ContainerSpec(
                image=image,
                argv=tuple(argv),
                bind=(str(session.host_dir), session.guest_dir, True),
                memory_limit_bytes=manifest.resources.memory_mb * _MIB,
                gpu=manifest.resources.gpu,
                timeout_s=opts.timeout_s,
            )
            outcome = client.run_container(spec)
            if outcome.timed_out:
                raise ContainerTimeout(opts.timeout_s)
            if outcome.exit_code != 0:
                raise NonZeroExit(outcome.exit_code, stderr_tail(outcome.stderr))
        phase_ms["container"] = _elapsed_ms(started)

        started = time.perf_counter()
        with _phase("exchange-read"):
            outputs = read_outputs(session, expected_count=len(records))
        phase_ms["exchange-read"] = _elapsed_ms(started)

        if opts.validate_io:
            with _phase("validate-output"):
                indices = []
                details = []
                for i, record in enumerate(outputs):
                    violations = validate_output(manifest.task, record)
                    if violations:
                        indices.append(i)
                        details.append(f"record {i}: {violations[0]}")
                if indices:
                    raise OutputValidationFailed(indices, details)

        report = RunReport(
            capsule=resolved,
            image=image,
            exit_code=outcome.exit_code,
            phase_ms=phase_ms,
            records_in=len(records),
            records_out=len(outputs),
            scratch_path=session.host_dir if opts.keep_scratch else None,
            stderr_tail=stderr_tail(outcome.stderr),
        )
        return outputs, report
    finally:
        if session is not None:
            close_session(session, keep=opts.keep_scratch)


def run_single(
    client,
    registry: Registry,
    capsule: CapsuleId | str,
    record: Record,
    options: RunOptions | None = None,
) -> tuple[Record, RunReport]:
    """Run a single record: ``run_capsule`` on a one-element batch, unwrapped."""
    outputs, report = run_capsule(client, registry, capsule, [record], options)
    return outputs[0], report


def _elapsed_ms(started: float) -> int:
    return int((time.perf_counter() - started) * 1000)
