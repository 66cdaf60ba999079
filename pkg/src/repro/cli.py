"""The ``repro`` command line: file-in/file-out access to capsule runs.

Exit codes are a stable contract: 0 success, 1 runtime failure (engine,
container, exchange), 2 usage or validation error, 3 verification failed,
4 environment incompatible. Human output goes to stdout, diagnostics to
stderr, and machine output sits behind ``--json`` as canonical JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from repro.engine import connect
from repro.errors import (
    EmptyBatch,
    InputValidationFailed,
    InvalidCapsuleId,
    InvalidEndpoint,
    MalformedSyntax,
    ReproError,
    SchemaViolation,
    UnknownCapsule,
    UnknownVersion,
    UnsupportedSchemaVersion,
)
from repro.exchange import (
    Record,
    canonical_record_line,
    default_workspace,
    parse_record,
)
from repro.manifest import CapsuleManifest, canonical_image_ref, manifest_to_document
from repro.registry import (
    CapsuleId,
    Registry,
    default_registry_root,
    list_capsules,
    load_registry,
    resolve,
)
from repro.runner import RunOptions, run_capsule
from repro.tasks import TaskKind
from repro.verify import check_environment, verify_capsule

PROG = "repro"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VERIFY_FAILED = 3
EXIT_INCOMPATIBLE = 4

_USAGE_ERRORS = (
    InvalidCapsuleId,
    InvalidEndpoint,
    UnknownCapsule,
    UnknownVersion,
    InputValidationFailed,
    EmptyBatch,
    SchemaViolation,
    UnsupportedSchemaVersion,
    MalformedSyntax,
)

ClientFactory = Callable[..., Any]


class _CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Run containerized research code through capsule manifests.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--registry",
        default=None,
        help="capsule registry directory (default: $REPRO_REGISTRY or ./capsules)",
    )
    common.add_argument(
        "--workspace",
        default=None,
        help="scratch workspace directory (default: $REPRO_WORKSPACE or ~/.repro)",
    )
    common.add_argument(
        "--engine",
        default=None,
        help="engine endpoint (default: $REPRO_DOCKER_HOST, $DOCKER_HOST, "
        "or /var/run/docker.sock)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_list = sub.add_parser("list", parents=[common], help="list available capsules")
    p_list.add_argument(
        "--task", choices=[kind.value for kind in TaskKind], default=None,
        help="only capsules of this task kind",
    )
    p_list.add_argument("--json", action="store_true", help="emit canonical JSON")
    p_list.set_defaults(handler=_cmd_list, needs_engine=False)

    p_run = sub.add_parser(
        "run", parents=[common], help="run a capsule on a JSONL input file"
    )
    p_run.add_argument("capsule", metavar="name[@version]")
    p_run.add_argument("--input", required=True, help="input JSONL file")
    p_run.add_argument("--output", required=True, help="output JSONL file to write")
    p_run.add_argument("--timeout", type=int, default=3600, help="run timeout in seconds")
    p_run.add_argument(
        "--keep-scratch", action="store_true", help="keep the scratch directory"
    )
    p_run.add_argument(
        "--pull",
        choices=["if-missing", "always", "never"],
        default="if-missing",
        help="image pull policy",
    )
    p_run.set_defaults(handler=_cmd_run, needs_engine=True)

    p_pull = sub.add_parser("pull", parents=[common], help="pull a capsule's image")
    p_pull.add_argument("capsule", metavar="name[@version]")
    p_pull.set_defaults(handler=_cmd_pull, needs_engine=True)

    p_verify = sub.add_parser(
        "verify", parents=[common], help="replay a capsule's bundled examples"
    )
    p_verify.add_argument("capsule", metavar="name[@version]")
    p_verify.add_argument(
        "--tolerance", type=float, default=None, help="override numeric tolerance"
    )
    p_verify.add_argument("--json", action="store_true", help="emit canonical JSON")
    p_verify.set_defaults(handler=_cmd_verify, needs_engine=True)

    p_doctor = sub.add_parser(
        "doctor", parents=[common], help="check engine and capsule compatibility"
    )
    p_doctor.add_argument("capsule", nargs="?", default=None, metavar="name[@version]")
    p_doctor.add_argument("--json", action="store_true", help="emit canonical JSON")
    p_doctor.set_defaults(handler=_cmd_doctor, needs_engine=True)

    p_info = sub.add_parser("info", parents=[common], help="show a capsule's manifest")
    p_info.add_argument("capsule", metavar="name[@version]")
    p_info.set_defaults(handler=_cmd_info, needs_engine=False)

    return parser


# --- entry point -----------------------------------------------------------------


def main(argv: Sequence[str] | None = None, *, engine_factory: ClientFactory | None = None) -> int:
    """Parse argv, dispatch, and map every outcome to one of the five exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return _exit_code_of(exc)
    factory = engine_factory or _default_engine_factory
    try:
        return args.handler(args, factory)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ReproError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, _USAGE_ERRORS) else EXIT_RUNTIME
    except SystemExit as exc:
        return _exit_code_of(exc)
    except Exception as exc:  # exit codes must stay total, whatever happens
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _exit_code_of(exc: SystemExit) -> int:
    if exc.code is None:
        return EXIT_OK
    if isinstance(exc.code, int):
        return exc.code
    return EXIT_USAGE


def _default_engine_factory(args: argparse.Namespace, *, ping: bool = True):
    return connect(getattr(args, "engine", None), ping=ping)


# --- helpers ----------------------------------------------------------------------


def _load_cli_registry(args: argparse.Namespace) -> Registry:
    root = args.registry or default_registry_root()
    return load_registry(root)


def _workspace(args: argparse.Namespace) -> Path:
    return Path(args.workspace).expanduser() if args.workspace else default_workspace()


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False))


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance (unit insert/delete/substitute costs)."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(previous[j] + 1, current[-1] + 1, previous[j - 1] + (ca != cb))
            )
        previous = current
    return previous[-1]


def nearest_name(name: str, candidates: Sequence[str]) -> str | None:
    """The candidate at minimum edit distance; ties break lexicographically."""
    if not candidates:
        return None
    return min(candidates, key=lambda c: (edit_distance(name, c), c))


def _read_jsonl_records(path: Path) -> list[Record]:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise _CliError(f"cannot read input file {path}: {exc}", EXIT_USAGE) from exc
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    records = []
    for i, line in enumerate(lines, start=1):
        try:
            records.append(parse_record(line))
        except (ValueError, UnicodeDecodeError) as exc:
            raise _CliError(
                f"input line {i} of {path} is not a JSON object: {exc}", EXIT_USAGE
            ) from exc
    if not records:
        raise _CliError(f"input file {path} contains no records", EXIT_USAGE)
    return records


def _manifest_row(manifest: CapsuleManifest) -> tuple[str, str, str, str]:
    return (
        manifest.name,
        manifest.version,
        manifest.task.value,
        canonical_image_ref(manifest.image),
    )


# --- command handlers -----------------------------------------------------------------


def _cmd_list(args: argparse.Namespace, _factory: ClientFactory) -> int:
    registry = _load_cli_registry(args)
    task = TaskKind(args.task) if args.task else None
    manifests = list_capsules(registry, task)
    if args.json:
        _print_json([manifest_to_document(m) for m in manifests])
        return EXIT_OK
    rows = [_manifest_row(m) for m in manifests]
    headers = ("NAME", "VERSION", "TASK", "IMAGE")
    widths = [
        max(len(headers[col]), *(len(row[col]) for row in rows)) if rows else len(headers[col])
        for col in range(4)
    ]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip())
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return EXIT_OK


def _cmd_run(args: argparse.Namespace, factory: ClientFactory) -> int:
    capsule = CapsuleId.parse(args.capsule)
    input_path = Path(args.input)
    if not input_path.is_file():
        raise _CliError(f"input file not found: {input_path}", EXIT_USAGE)
    records = _read_jsonl_records(input_path)
    if args.timeout <= 0:
        raise _CliError("--timeout must be positive", EXIT_USAGE)
    options = RunOptions(
        timeout_s=args.timeout,
        keep_scratch=args.keep_scratch,
        pull_policy=args.pull,
        workspace=_workspace(args),
    )
    registry = _load_cli_registry(args)
    client = factory(args)
    outputs, report = run_capsule(client, registry, capsule, records, options)
    payload = b"".join(canonical_record_line(record) for record in outputs)
    output_path = Path(args.output)
    try:
        output_path.write_bytes(payload)
    except OSError as exc:
        raise _CliError(f"cannot write output file {output_path}: {exc}", EXIT_USAGE) from exc
    timings = ", ".join(f"{phase} {ms} ms" for phase, ms in report.phase_ms.items())
    print(
        f"{report.capsule}: exit {report.exit_code}, "
        f"records {report.records_in}/{report.records_out}, {timings}",
        file=sys.stderr,
    )
    if report.scratch_path is not None:
        print(f"scratch kept at {report.scratch_path}", file=sys.stderr)
    return EXIT_OK


def _cmd_pull(args: argparse.Namespace, factory: ClientFactory) -> int:
    capsule = CapsuleId.parse(args.capsule)
    registry = _load_cli_registry(args)
    manifest = resolve(registry, capsule)
    image = canonical_image_ref(manifest.image)
    client = factory(args)
    if client.image_present(image):
        print(f"{image} up to date")
        return EXIT_OK
    summary = client.pull_image(image)
    plural = "layer" if summary.layers == 1 else "layers"
    print(f"pulled {image} ({summary.layers} {plural}, {summary.duration_ms} ms)")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace, factory: ClientFactory) -> int:
    capsule = CapsuleId.parse(args.capsule)
    if args.tolerance is not None and args.tolerance < 0:
        raise _CliError("--tolerance must be non-negative", EXIT_USAGE)
    registry = _load_cli_registry(args)
    client = factory(args)
    options = RunOptions(workspace=_workspace(args))
    report = verify_capsule(
        client, registry, capsule, args.tolerance, options=options
    )
    if args.json:
        _print_json(report.to_dict())
    elif report.skipped:
        print(f"{report.capsule}: skipped (no examples)")
    else:
        for case in report.cases:
            status = "ok" if case.passed else "FAILED"
            print(f"{report.capsule}: example {case.index} {status}")
            for mismatch in case.mismatches:
                print(
                    f"  {mismatch.path}: expected {mismatch.expected!r}, "
                    f"got {mismatch.actual!r}"
                )
        passed = sum(case.passed for case in report.cases)
        verdict = "passed" if report.passed else "failed"
        print(f"{report.capsule}: verification {verdict} ({passed}/{len(report.cases)})")
    if report.error is not None:
        print(f"error: {report.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def _cmd_doctor(args: argparse.Namespace, factory: ClientFactory) -> int:
    capsule = CapsuleId.parse(args.capsule) if args.capsule else None
    registry = _load_cli_registry(args) if capsule is not None else None
    client = factory(args, ping=False)
    report = check_environment(client, capsule, registry)
    if args.json:
        _print_json(report.to_dict())
    else:
        for check in report.checks:
            status = "ok" if check.passed else "FAIL"
            print(f"{status:4} {check.name}: {check.detail}")
        if report.capsule_compat is not None:
            compat = report.capsule_compat
            status = "ok" if compat.compatible else "FAIL"
            print(
                f"{status:4} capsule-compat: gpu required {compat.gpu_required}, "
                f"gpu available {compat.gpu_available}"
            )
    if not report.engine.reachable:
        return EXIT_RUNTIME
    if report.capsule_compat is not None and not report.capsule_compat.compatible:
        return EXIT_INCOMPATIBLE
    return EXIT_OK


def _cmd_info(args: argparse.Namespace, _factory: ClientFactory) -> int:
    capsule = CapsuleId.parse(args.capsule)
    registry = _load_cli_registry(args)
    try:
        manifest = resolve(registry, capsule)
    except UnknownCapsule as exc:
        suggestion = nearest_name(capsule.name, sorted(registry.entries))
        if suggestion is not None:
            print(f"error: {exc}; did you mean {suggestion!r}?", file=sys.stderr)
            return EXIT_USAGE
        raise
    print(f"name: {manifest.name}")
    print(f"version: {manifest.version}")
    print(f"task: {manifest.task.value}")
    print(f"image: {canonical_image_ref(manifest.image)}")
    paper = manifest.paper
    print(f"paper: {paper.title} ({paper.year})")
    if paper.url:
        print(f"url: {paper.url}")
    print(f"command: {' '.join(manifest.command.tokens)}")
    print(f"gpu: {'yes' if manifest.resources.gpu else 'no'}")
    print(f"memory_mb: {manifest.resources.memory_mb}")
    print(f"examples: {len(manifest.examples)}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
