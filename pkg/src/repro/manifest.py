"""Capsule manifests: the declarative unit binding released code to an image.

A capsule manifest is a ``capsule.json`` document declaring the container
image, task kind, command template and bundled example cases for one version
of one codebase. Parsing validates every invariant and applies all defaults,
so downstream code never sees absent fields. All types here are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from typing import Any

from repro.errors import MalformedSyntax, SchemaViolation, UnsupportedSchemaVersion
from repro.exchange import Record, canonical_json
from repro.tasks import TaskKind

SCHEMA_VERSION = 1
MANIFEST_FILENAME = "capsule.json"

NAME_RE = re.compile(r"[a-z0-9][a-z0-9-]{0,63}")
VERSION_RE = re.compile(r"(0|[1-9][0-9]*)(\.(0|[1-9][0-9]*)){0,3}")

_DIGEST_RE = re.compile(r"sha256:[0-9a-f]{64}")
_TAG_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9._-]{0,127}")
_REPO_SEGMENT_RE = re.compile(r"[a-z0-9][a-z0-9._-]*")

DEFAULT_REGISTRY = "docker.io"
DEFAULT_TAG = "latest"
DEFAULT_MEMORY_MB = 2048
MIN_MEMORY_MB = 64

INPUT_PLACEHOLDER = "{input}"
OUTPUT_PLACEHOLDER = "{output}"
DIR_PLACEHOLDER = "{dir}"
PLACEHOLDERS = (INPUT_PLACEHOLDER, OUTPUT_PLACEHOLDER, DIR_PLACEHOLDER)

_TOP_LEVEL_KEYS = {
    "schema_version",
    "name",
    "version",
    "paper",
    "image",
    "task",
    "command",
    "resources",
    "examples",
}


# --- domain types ---------------------------------------------------------------


@dataclass(frozen=True)
class PaperMeta:
    """Stable provenance for the wrapped code: where it came from and when."""

    title: str
    year: int
    url: str | None = None


@dataclass(frozen=True)
class ImageRef:
    registry: str = DEFAULT_REGISTRY
    repository: str = ""
    tag: str = DEFAULT_TAG
    digest: str | None = None

    def __post_init__(self) -> None:
        if self.digest is not None and not _DIGEST_RE.fullmatch(self.digest):
            raise ValueError(
                f"digest must be sha256: followed by 64 hex characters, got {self.digest!r}"
            )


@dataclass(frozen=True)
class CommandTemplate:
    """An argv template; substitution applies to whole tokens only, never a shell."""

    tokens: tuple[str, ...]


@dataclass(frozen=True)
class ResourceSpec:
    gpu: bool = False
    memory_mb: int = DEFAULT_MEMORY_MB


@dataclass(frozen=True)
class ExampleCase:
    input: Record
    expected: Record
    tolerance: float = 0.0


@dataclass(frozen=True)
class CapsuleManifest:
    schema_version: int
    name: str
    version: str
    paper: PaperMeta
    image: ImageRef
    task: TaskKind
    command: CommandTemplate
    resources: ResourceSpec = field(default_factory=ResourceSpec)
    examples: tuple[ExampleCase, ...] = ()


# --- image reference parsing ------------------------------------------------------


def parse_image_ref(text: str) -> ImageRef:
    """Parse an image reference string, applying registry/tag defaults.

    Accepts ``[registry/]repository[:tag][@sha256:<64 hex>]``. The first path
    segment counts as a registry only when it contains a dot or a port, or is
    ``localhost``. Raises ValueError on malformed references.
    """
    if not text:
        raise ValueError("image reference must be non-empty")
    rest = text
    digest = None
    if "@" in rest:
        rest, _, digest = rest.partition("@")
        if not _DIGEST_RE.fullmatch(digest):
            raise ValueError(
                f"digest must be sha256: followed by 64 hex characters, got {digest!r}"
            )
    tag = DEFAULT_TAG
    slash = rest.rfind("/")
    colon = rest.rfind(":")
    if colon > slash:
        rest, tag = rest[:colon], rest[colon + 1 :]
        if not _TAG_RE.fullmatch(tag):
            raise ValueError(f"invalid image tag {tag!r}")
    registry = DEFAULT_REGISTRY
    repository = rest
    if "/" in rest:
        head, tail = rest.split("/", 1)
        if "." in head or ":" in head or head == "localhost":
            registry, repository = head, tail
    if not registry or "/" in registry:
        raise ValueError(f"invalid image registry {registry!r}")
    if not repository:
        raise ValueError("image repository must be non-empty")
    for segment in repository.split("/"):
        if not _REPO_SEGMENT_RE.fullmatch(segment):
            raise ValueError(f"invalid repository segment {segment!r} in {text!r}")
    return ImageRef(registry=registry, repository=repository, tag=tag, digest=digest)


def canonical_image_ref(ref: ImageRef) -> str:
    """Deterministic string form: ``registry/repository:tag[@sha256:...]``."""
    base = f"{ref.registry}/{ref.repository}:{ref.tag}"
    if ref.digest:
        return f"{base}@{ref.digest}"
    return base


# --- command rendering --------------------------------------------------------------


def render_command(
    template: CommandTemplate,
    *,
    input_path: str,
    output_path: str,
    dir_path: str,
) -> list[str]:
    """Substitute guest paths for placeholder tokens.

    Only tokens that are exactly a placeholder are replaced; every other token
    is passed through byte-identical. The result is an argv array and is never
    interpreted by a shell.
    """
    mapping = {
        INPUT_PLACEHOLDER: input_path,
        OUTPUT_PLACEHOLDER: output_path,
        DIR_PLACEHOLDER: dir_path,
    }
    return [mapping.get(token, token) for token in template.tokens]


# --- manifest parsing ------------------------------------------------------------------


def _require(doc: dict, key: str) -> Any:
    if key not in doc:
        raise SchemaViolation(key, "required key is missing")
    return doc[key]


def _string(value: Any, fieldname: str) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(fieldname, f"must be a string, got {type(value).__name__}")
    return value


def _parse_schema_version(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation("schema_version", "must be an integer")
    if value != SCHEMA_VERSION:
        raise UnsupportedSchemaVersion(value)
    return value


def _parse_name(value: Any) -> str:
    name = _string(value, "name")
    if not NAME_RE.fullmatch(name):
        raise SchemaViolation(
            "name", f"must match [a-z0-9][a-z0-9-]{{0,63}}, got {name!r}"
        )
    return name


def _parse_version(value: Any) -> str:
    version = _string(value, "version")
    if not VERSION_RE.fullmatch(version):
        raise SchemaViolation(
            "version",
            "must be 1-4 dot-separated non-negative integers without leading zeros, "
            f"got {version!r}",
        )
    return version


def _parse_paper(value: Any) -> PaperMeta:
    if not isinstance(value, dict):
        raise SchemaViolation("paper", "must be an object")
    unknown = sorted(set(value) - {"title", "year", "url"})
    if unknown:
        raise SchemaViolation(f"paper.{unknown[0]}", "unknown key")
    title = _string(_require_in(value, "title", "paper"), "paper.title")
    if not title:
        raise SchemaViolation("paper.title", "must be non-empty")
    year = _require_in(value, "year", "paper")
    if isinstance(year, bool) or not isinstance(year, int):
        raise SchemaViolation("paper.year", "must be an integer")
    if not 1950 <= year <= 2100:
        raise SchemaViolation("paper.year", f"must be in [1950, 2100], got {year}")
    url = value.get("url")
    if url is not None:
        url = _string(url, "paper.url")
        if not url.startswith("http"):
            raise SchemaViolation("paper.url", f"must begin with 'http', got {url!r}")
    return PaperMeta(title=title, year=year, url=url)


def _require_in(obj: dict, key: str, parent: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"{parent}.{key}", "required key is missing")
    return obj[key]


def _parse_image(value: Any) -> ImageRef:
    text = _string(value, "image")
    try:
        return parse_image_ref(text)
    except ValueError as exc:
        raise SchemaViolation("image", str(exc)) from exc


def _parse_task(value: Any) -> TaskKind:
    text = _string(value, "task")
    try:
        return TaskKind(text)
    except ValueError:
        valid = ", ".join(kind.value for kind in TaskKind)
        raise SchemaViolation("task", f"must be one of: {valid}; got {text!r}") from None


def _parse_command(value: Any) -> CommandTemplate:
    if not isinstance(value, list) or not value:
        raise SchemaViolation("command", "must be a non-empty list of tokens")
    tokens = []
    for i, token in enumerate(value):
        if not isinstance(token, str):
            raise SchemaViolation("command", f"token {i} must be a string")
        if token not in PLACEHOLDERS and any(p in token for p in PLACEHOLDERS):
            raise SchemaViolation(
                "command",
                f"placeholder must be the entire token, got partial token {token!r}",
            )
        tokens.append(token)
    for placeholder in (INPUT_PLACEHOLDER, OUTPUT_PLACEHOLDER):
        if placeholder not in tokens:
            raise SchemaViolation(
                "command", f"must contain a {placeholder} token"
            )
    return CommandTemplate(tokens=tuple(tokens))


def _parse_resources(value: Any) -> ResourceSpec:
    if value is None:
        return ResourceSpec()
    if not isinstance(value, dict):
        raise SchemaViolation("resources", "must be an object")
    unknown = sorted(set(value) - {"gpu", "memory_mb"})
    if unknown:
        raise SchemaViolation(f"resources.{unknown[0]}", "unknown key")
    gpu = value.get("gpu", False)
    if not isinstance(gpu, bool):
        raise SchemaViolation("resources.gpu", "must be a boolean")
    memory_mb = value.get("memory_mb", DEFAULT_MEMORY_MB)
    if isinstance(memory_mb, bool) or not isinstance(memory_mb, int):
        raise SchemaViolation("resources.memory_mb", "must be an integer")
    if memory_mb < MIN_MEMORY_MB:
        raise SchemaViolation(
            "resources.memory_mb", f"must be >= {MIN_MEMORY_MB}, got {memory_mb}"
        )
    return ResourceSpec(gpu=gpu, memory_mb=memory_mb)


def _parse_examples(value: Any) -> tuple[ExampleCase, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise SchemaViolation("examples", "must be a list")
    cases = []
    for i, case in enumerate(value):
        prefix = f"examples[{i}]"
        if not isinstance(case, dict):
            raise SchemaViolation(prefix, "must be an object")
        unknown = sorted(set(case) - {"input", "expected", "tolerance"})
        if unknown:
            raise SchemaViolation(f"{prefix}.{unknown[0]}", "unknown key")
        for key in ("input", "expected"):
            if key not in case:
                raise SchemaViolation(f"{prefix}.{key}", "required key is missing")
            if not isinstance(case[key], dict):
                raise SchemaViolation(
                    f"{prefix}.{key}", "must be a JSON object, not an array or scalar"
                )
        tolerance = case.get("tolerance", 0.0)
        if isinstance(tolerance, bool) or not isinstance(tolerance, (int, float)):
            raise SchemaViolation(f"{prefix}.tolerance", "must be a number")
        if tolerance < 0:
            raise SchemaViolation(
                f"{prefix}.tolerance", f"must be non-negative, got {tolerance}"
            )
        cases.append(
            ExampleCase(
                input=copy.deepcopy(case["input"]),
                expected=copy.deepcopy(case["expected"]),
                tolerance=float(tolerance),
            )
        )
    return tuple(cases)


def parse_manifest(data: bytes) -> CapsuleManifest:
    """Parse and fully validate a ``capsule.json`` document.

    All defaults are applied (registry, tag, resources), unknown keys are hard
    errors, and every field invariant is enforced. Raises
    :class:`MalformedSyntax`, :class:`SchemaViolation`, or
    :class:`UnsupportedSchemaVersion`.
    """
    if data[:3] == b"\xef\xbb\xbf":
        raise MalformedSyntax("manifest must be UTF-8 without a byte order mark")
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedSyntax(f"manifest is not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedSyntax(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedSyntax("manifest top level must be a JSON object")

    unknown = sorted(set(doc) - _TOP_LEVEL_KEYS)
    if unknown:
        raise SchemaViolation(unknown[0], "unknown top-level key")

    schema_version = _parse_schema_version(_require(doc, "schema_version"))
    return CapsuleManifest(
        schema_version=schema_version,
        name=_parse_name(_require(doc, "name")),
        version=_parse_version(_require(doc, "version")),
        paper=_parse_paper(_require(doc, "paper")),
        image=_parse_image(_require(doc, "image")),
        task=_parse_task(_require(doc, "task")),
        command=_parse_command(_require(doc, "command")),
        resources=_parse_resources(doc.get("resources")),
        examples=_parse_examples(doc.get("examples")),
    )


# --- canonical rendering -------------------------------------------------------------


def manifest_to_document(manifest: CapsuleManifest) -> dict:
    """The manifest as a plain document; parsing it back yields an equal manifest."""
    paper: dict[str, Any] = {"title": manifest.paper.title, "year": manifest.paper.year}
    if manifest.paper.url is not None:
        paper["url"] = manifest.paper.url
    return {
        "schema_version": manifest.schema_version,
        "name": manifest.name,
        "version": manifest.version,
        "paper": paper,
        "image": canonical_image_ref(manifest.image),
        "task": manifest.task.value,
        "command": list(manifest.command.tokens),
        "resources": {
            "gpu": manifest.resources.gpu,
            "memory_mb": manifest.resources.memory_mb,
        },
        "examples": [
            {
                "input": copy.deepcopy(case.input),
                "expected": copy.deepcopy(case.expected),
                "tolerance": case.tolerance,
            }
            for case in manifest.examples
        ],
    }


def serialize_manifest(manifest: CapsuleManifest) -> bytes:
    """Canonical UTF-8 bytes of the manifest document, LF-terminated."""
    return canonical_json(manifest_to_document(manifest)).encode("utf-8") + b"\n"
