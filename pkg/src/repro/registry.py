"""Capsule discovery on disk and name/version resolution.

A registry is a directory tree ``<root>/<name>/<version>/capsule.json``.
Loading validates every manifest and checks that directory names agree with
manifest fields, so a loaded registry is internally consistent. The loaded
value is immutable; reloading produces a new value.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from repro.errors import (
    DuplicateVersion,
    InvalidCapsuleId,
    ManifestError,
    MalformedSyntax,
    NameMismatch,
    RegistryRootMissing,
    SchemaViolation,
    UnknownCapsule,
    UnknownVersion,
    UnsupportedSchemaVersion,
    VersionMismatch,
)
from repro.manifest import (
    MANIFEST_FILENAME,
    NAME_RE,
    VERSION_RE,
    CapsuleManifest,
    parse_manifest,
)
from repro.tasks import TaskKind

REGISTRY_ENV = "REPRO_REGISTRY"
DEFAULT_REGISTRY_ROOT = "./capsules"


def default_registry_root() -> Path:
    """Registry root: $REPRO_REGISTRY if set, else ./capsules."""
    raw = os.environ.get(REGISTRY_ENV) or DEFAULT_REGISTRY_ROOT
    return Path(raw).expanduser()


def version_key(version: str) -> tuple[int, ...]:
    """Ordering key for version strings: componentwise numeric, zero-padded.

    Trailing zero components are stripped, which is equivalent to padding the
    shorter tuple with zeros; "1.0" and "1.0.0" map to the same key.
    """
    parts = [int(part) for part in version.split(".")]
    while parts and parts[-1] == 0:
        parts.pop()
    return tuple(parts)


@dataclass(frozen=True)
class CapsuleId:
    """A capsule query: a name plus an optional version."""

    name: str
    version: str | None = None

    @classmethod
    def parse(cls, text: str) -> CapsuleId:
        """Parse ``name`` or ``name@version``; raises InvalidCapsuleId."""
        name, sep, version = text.partition("@")
        if not NAME_RE.fullmatch(name):
            raise InvalidCapsuleId(f"invalid capsule name {name!r}")
        if not sep:
            return cls(name=name)
        if not VERSION_RE.fullmatch(version):
            raise InvalidCapsuleId(f"invalid capsule version {version!r}")
        return cls(name=name, version=version)

    def __str__(self) -> str:
        if self.version is None:
            return self.name
        return f"{self.name}@{self.version}"


@dataclass(frozen=True)
class Registry:
    root: Path
    entries: dict[str, tuple[CapsuleManifest, ...]]


def load_registry(root: str | Path) -> Registry:
    """Scan ``<root>/<name>/<version>/capsule.json`` into a Registry.

    Entries that do not fit the layout (stray files, oddly named directories,
    version directories without a manifest) are ignored. Manifests that fail
    to parse, or whose name/version disagree with their directory, are errors.
    The result is deterministic regardless of filesystem enumeration order.
    """
    root = Path(root)
    if not root.is_dir():
        raise RegistryRootMissing(root)
    entries: dict[str, tuple[CapsuleManifest, ...]] = {}
    for name_dir in sorted(root.iterdir()):
        if not name_dir.is_dir() or not NAME_RE.fullmatch(name_dir.name):
            continue
        manifests = []
        for version_dir in sorted(name_dir.iterdir()):
            if not version_dir.is_dir() or not VERSION_RE.fullmatch(version_dir.name):
                continue
            path = version_dir / MANIFEST_FILENAME
            if not path.is_file():
                continue
            try:
                manifest = parse_manifest(path.read_bytes())
            except (MalformedSyntax, SchemaViolation, UnsupportedSchemaVersion) as exc:
                raise ManifestError(path, exc) from exc
            if manifest.name != name_dir.name:
                raise NameMismatch(name_dir.name, manifest.name, path)
            if manifest.version != version_dir.name:
                raise VersionMismatch(version_dir.name, manifest.version, path)
            manifests.append(manifest)
        if not manifests:
            continue
        manifests.sort(key=lambda m: version_key(m.version), reverse=True)
        for earlier, later in zip(manifests, manifests[1:]):
            if version_key(earlier.version) == version_key(later.version):
                raise DuplicateVersion(name_dir.name, earlier.version, later.version)
        entries[name_dir.name] = tuple(manifests)
    return Registry(root=root, entries=entries)


def list_capsules(
    registry: Registry, task_filter: TaskKind | None = None
) -> list[CapsuleManifest]:
    """Latest version of every capsule, sorted by name, optionally filtered by task."""
    latest = [versions[0] for versions in registry.entries.values()]
    if task_filter is not None:
        task_filter = TaskKind(task_filter)
        latest = [m for m in latest if m.task is task_filter]
    return sorted(latest, key=lambda m: m.name)


def resolve(registry: Registry, capsule: CapsuleId) -> CapsuleManifest:
    """The named manifest: an exact version when given, the greatest otherwise.

    Version matching uses the zero-padding equivalence, so ``name@1.0``
    resolves a capsule stored as ``1.0.0``.
    """
    versions = registry.entries.get(capsule.name)
    if versions is None:
        raise UnknownCapsule(capsule.name)
    if capsule.version is None:
        return versions[0]
    if VERSION_RE.fullmatch(capsule.version):
        wanted = version_key(capsule.version)
        for manifest in versions:
            if version_key(manifest.version) == wanted:
                return manifest
    raise UnknownVersion(
        capsule.name, capsule.version, [m.version for m in versions]
    )
