"""Exception hierarchy shared by all repro modules.

Every error raised by the library derives from :class:`ReproError`. Errors
raised while orchestrating a capsule run carry an optional ``phase`` label
("pull", "container", ...) so callers can tell environment problems from
capsule problems.
"""

from __future__ import annotations


class ReproError(Exception):
    """Base class for all library errors."""

    def __init__(self, message: str, *, phase: str | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.phase = phase

    def __str__(self) -> str:
        if self.phase:
            return f"[{self.phase}] {self.message}"
        return self.message


# --- manifest parsing -------------------------------------------------------


class MalformedSyntax(ReproError):
    """Manifest bytes are not valid UTF-8 JSON."""


class SchemaViolation(ReproError):
    """A manifest field is missing, unknown, or breaks its invariant."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsupportedSchemaVersion(ReproError):
    def __init__(self, found: object) -> None:
        super().__init__(f"unsupported schema_version {found!r} (supported: 1)")
        self.found = found


# --- registry ----------------------------------------------------------------


class RegistryError(ReproError):
    """Base class for capsule registry errors."""


class RegistryRootMissing(RegistryError):
    def __init__(self, root: object) -> None:
        super().__init__(f"registry root does not exist or is not a directory: {root}")
        self.root = root


class ManifestError(RegistryError):
    """A capsule.json inside the registry failed to parse; names the file."""

    def __init__(self, path: object, cause: ReproError) -> None:
        super().__init__(f"{path}: {cause}")
        self.path = path
        self.cause = cause


class NameMismatch(RegistryError):
    def __init__(self, directory: str, manifest: str, path: object) -> None:
        super().__init__(
            f"directory name {directory!r} does not match manifest name {manifest!r} ({path})"
        )
        self.directory = directory
        self.manifest = manifest


class VersionMismatch(RegistryError):
    def __init__(self, directory: str, manifest: str, path: object) -> None:
        super().__init__(
            f"directory version {directory!r} does not match manifest version "
            f"{manifest!r} ({path})"
        )
        self.directory = directory
        self.manifest = manifest


class DuplicateVersion(RegistryError):
    def __init__(self, name: str, first: str, second: str) -> None:
        super().__init__(
            f"capsule {name!r} declares versions {first!r} and {second!r}, "
            "which are equal under zero-padding"
        )


class InvalidCapsuleId(RegistryError):
    """A name[@version] query string is syntactically invalid."""


class UnknownCapsule(RegistryError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown capsule {name!r}")
        self.name = name


class UnknownVersion(RegistryError):
    def __init__(self, name: str, version: str, available: list[str]) -> None:
        super().__init__(
            f"capsule {name!r} has no version {version!r} "
            f"(available: {', '.join(available)})"
        )
        self.name = name
        self.version = version
        self.available = list(available)


# --- engine -------------------------------------------------------------------


class EngineError(ReproError):
    """The container engine reported a failure (non-404 HTTP error and kin)."""

    def __init__(self, message: str, *, status: int | None = None, body: str = "") -> None:
        detail = message
        if status is not None:
            detail = f"{message} (HTTP {status})"
        if body:
            detail = f"{detail}: {body}"
        super().__init__(detail)
        self.status = status
        self.body = body


class EngineUnreachable(EngineError):
    """The engine endpoint could not be contacted."""


class ImageNotFound(EngineError):
    def __init__(self, image: str) -> None:
        super().__init__(f"image not found in registry: {image}")
        self.image = image


class PullTimeout(EngineError):
    def __init__(self, image: str) -> None:
        super().__init__(f"timed out pulling image: {image}")
        self.image = image


class InvalidEndpoint(ReproError):
    """An engine endpoint string or value breaks the endpoint invariants."""


# --- exchange -------------------------------------------------------------------


class ExchangeError(ReproError):
    """Base class for host/container data-exchange errors."""


class WorkspaceUnwritable(ExchangeError):
    def __init__(self, path: object) -> None:
        super().__init__(f"workspace is not writable: {path}")
        self.path = path


class EmptyBatch(ExchangeError):
    def __init__(self, message: str = "record batch must not be empty") -> None:
        super().__init__(message)


class SerializationError(ExchangeError):
    """A record cannot be canonically serialized (non-finite number, bad key...)."""


class OutputMissing(ExchangeError):
    def __init__(self, host_path: object, guest_path: str) -> None:
        super().__init__(
            f"output file missing: {host_path} "
            f"(the container must write {guest_path} before exiting)"
        )
        self.host_path = host_path
        self.guest_path = guest_path


class CountMismatch(ExchangeError):
    def __init__(self, actual: int, expected: int) -> None:
        super().__init__(f"output line count mismatch: got {actual}, expected {expected}")
        self.actual = actual
        self.expected = expected


class MalformedOutputLine(ExchangeError):
    def __init__(self, line_no: int, snippet: str, reason: str) -> None:
        super().__init__(f"output line {line_no} is not a JSON object ({reason}): {snippet!r}")
        self.line_no = line_no
        self.snippet = snippet


# --- runner --------------------------------------------------------------------


class RunnerError(ReproError):
    """Base class for capsule-run orchestration errors."""


class InputValidationFailed(RunnerError):
    def __init__(self, indices: list[int], details: list[str]) -> None:
        shown = "; ".join(details[:3])
        super().__init__(
            f"input records at indices {indices} do not match the task schema: {shown}"
        )
        self.indices = list(indices)
        self.details = list(details)


class OutputValidationFailed(RunnerError):
    def __init__(self, indices: list[int], details: list[str]) -> None:
        shown = "; ".join(details[:3])
        super().__init__(
            f"output records at indices {indices} do not match the task schema: {shown}"
        )
        self.indices = list(indices)
        self.details = list(details)


class ImageUnavailable(RunnerError):
    def __init__(self, image: str) -> None:
        super().__init__(f"image {image} is not present and pull policy is 'never'")
        self.image = image


class NonZeroExit(RunnerError):
    def __init__(self, exit_code: int, stderr_tail: str) -> None:
        message = f"capsule command exited with code {exit_code}"
        if stderr_tail:
            message = f"{message}; stderr tail: {stderr_tail.strip()}"
        super().__init__(message)
        self.exit_code = exit_code
        self.stderr_tail = stderr_tail


class ContainerTimeout(RunnerError):
    def __init__(self, timeout_s: int) -> None:
        super().__init__(
            f"capsule run exceeded {timeout_s}s and the container was force-removed"
        )
        self.timeout_s = timeout_s
