"""Built-in demonstration capsules.

Each fixture pairs a capsule.json document with the behavior its image shows
when run on the fake engine, so the whole pipeline (registry, pull, run,
verify, CLI) can be exercised without a container daemon. They double as
documentation of the manifest format and the per-task record schemas.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from repro.exchange import Record, canonical_json
from repro.fake_engine import FakeEngine, FakeImage
from repro.manifest import MANIFEST_FILENAME, canonical_image_ref, parse_manifest


@dataclass(frozen=True)
class FixtureCapsule:
    document: dict
    behavior: FakeImage


def capsule_document(
    name: str,
    *,
    version: str = "1.0",
    task: str = "raw",
    image: str | None = None,
    command: list[str] | None = None,
    examples: list[dict] | None = None,
    gpu: bool = False,
    title: str | None = None,
    year: int = 2020,
) -> dict:
    """A complete capsule.json document with sensible fixture defaults."""
    doc = {
        "schema_version": 1,
        "name": name,
        "version": version,
        "paper": {"title": title or f"{name} fixture", "year": year},
        "image": image or f"docker.io/fixtures/{name}:{version}",
        "task": task,
        "command": command
        or ["transform", "--input", "{input}", "--output", "{output}"],
        "resources": {"gpu": gpu, "memory_mb": 2048},
    }
    if examples is not None:
        doc["examples"] = examples
    return doc


# --- transforms -----------------------------------------------------------------


def uppercase_strings(record: Record) -> Record:
    def walk(value):
        if isinstance(value, str):
            return value.upper()
        if isinstance(value, list):
            return [walk(item) for item in value]
        if isinstance(value, dict):
            return {key: walk(item) for key, item in value.items()}
        return value

    return {key: walk(value) for key, value in record.items()}


def length_ratio_score(record: Record) -> Record:
    ratio = len(record["candidate"]) / len(record["references"][0])
    return {"scores": {"length-ratio": ratio}}


def first_sentence_summary(record: Record) -> Record:
    document = record["document"]
    head, sep, _rest = document.partition(".")
    return {"summary": head + sep if sep else document}


def first_word_answer(record: Record) -> Record:
    words = record["context"].split()
    return {"answer": words[0] if words else ""}


# --- the fixture set --------------------------------------------------------------


FIXTURE_CAPSULES: dict[str, FixtureCapsule] = {
    "upper": FixtureCapsule(
        document=capsule_document(
            "upper",
            examples=[{"input": {"text": "hi"}, "expected": {"text": "HI"}}],
        ),
        behavior=FakeImage(transform=uppercase_strings),
    ),
    "echo": FixtureCapsule(
        document=capsule_document(
            "echo",
            image="fixtures/echo",  # exercises registry/tag defaults
            examples=[
                {"input": {}, "expected": {}},
                {"input": {"n": 1, "s": "x"}, "expected": {"n": 1, "s": "x"}},
            ],
        ),
        behavior=FakeImage(),
    ),
    "scorer": FixtureCapsule(
        document=capsule_document(
            "scorer",
            task="generation-metric",
            examples=[
                {
                    "input": {"candidate": "abc", "references": ["abcdef"]},
                    "expected": {"scores": {"length-ratio": 0.5}},
                    "tolerance": 1e-6,
                }
            ],
        ),
        behavior=FakeImage(transform=length_ratio_score),
    ),
    "summarize": FixtureCapsule(
        document=capsule_document(
            "summarize",
            task="summarization",
            examples=[
                {
                    "input": {"document": "Hello world. More text follows."},
                    "expected": {"summary": "Hello world."},
                }
            ],
        ),
        behavior=FakeImage(transform=first_sentence_summary),
    ),
    "qa-head": FixtureCapsule(
        document=capsule_document(
            "qa-head",
            task="question-answering",
            examples=[
                {
                    "input": {
                        "context": "Paris is the capital of France.",
                        "question": "What is the capital of France?",
                    },
                    "expected": {"answer": "Paris"},
                }
            ],
        ),
        behavior=FakeImage(transform=first_word_answer),
    ),
    "boom": FixtureCapsule(
        document=capsule_document("boom"),
        behavior=FakeImage(exit_code=2, stderr=b"boom: synthetic failure\n"),
    ),
    "sleepy": FixtureCapsule(
        document=capsule_document("sleepy"),
        behavior=FakeImage(sleep_s=86400.0),
    ),
    "gpu-echo": FixtureCapsule(
        document=capsule_document("gpu-echo", gpu=True),
        behavior=FakeImage(),
    ),
}


def fixture_image(name: str) -> str:
    """Canonical image string for one fixture capsule."""
    document = FIXTURE_CAPSULES[name].document
    manifest = parse_manifest(canonical_json(document).encode("utf-8"))
    return canonical_image_ref(manifest.image)


def write_capsule(root: str | Path, document: dict) -> Path:
    """Write one capsule.json under ``<root>/<name>/<version>/``."""
    target = Path(root) / document["name"] / document["version"]
    target.mkdir(parents=True, exist_ok=True)
    path = target / MANIFEST_FILENAME
    path.write_bytes(canonical_json(document).encode("utf-8") + b"\n")
    return path


def write_fixture_registry(root: str | Path) -> Path:
    """Write every fixture capsule into a registry tree rooted at ``root``."""
    for fixture in FIXTURE_CAPSULES.values():
        write_capsule(root, fixture.document)
    return Path(root)


def seed_fake_engine(engine: FakeEngine, where: str = "both") -> None:
    """Register fixture images on a fake engine: "local", "remote", or "both"."""
    if where not in ("local", "remote", "both"):
        raise ValueError(f"where must be local, remote, or both, got {where!r}")
    for name, fixture in FIXTURE_CAPSULES.items():
        image = fixture_image(name)
        if where in ("local", "both"):
            engine.add_local_image(image, fixture.behavior)
        if where in ("remote", "both"):
            engine.add_remote_image(image, fixture.behavior)
