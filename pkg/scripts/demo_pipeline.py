#!/usr/bin/env python3
"""End-to-end offline demo: fixture registry plus the in-process engine.

Builds a temporary registry, seeds a fake engine with the fixture images, and
drives the CLI through list / run / verify / doctor. No container daemon is
needed; swap the engine factory for `repro.engine.connect` to target a real
one.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from repro import cli
from repro.fake_engine import FakeEngine
from repro.fixtures import seed_fake_engine, write_fixture_registry


def main() -> int:
    with tempfile.TemporaryDirectory(prefix="repro-demo-") as tmp:
        tmp_path = Path(tmp)
        registry_root = write_fixture_registry(tmp_path / "capsules")
        workspace = tmp_path / "workspace"
        engine = FakeEngine(runtimes=("runc", "nvidia"))
        seed_fake_engine(engine)
        factory = lambda args, **kw: engine  # noqa: E731
        base = ["--registry", str(registry_root), "--workspace", str(workspace)]

        input_path = tmp_path / "in.jsonl"
        output_path = tmp_path / "out.jsonl"
        input_path.write_bytes(b'{"text":"hello world"}\n{"text":"second record"}\n')

        steps = [
            ["list"],
            ["info", "upper"],
            ["run", "upper", "--input", str(input_path), "--output", str(output_path)],
            ["verify", "scorer"],
            ["doctor", "gpu-echo"],
        ]
        for argv in steps:
            print(f"\n$ repro {' '.join(argv)}")
            code = cli.main(argv + base, engine_factory=factory)
            print(f"(exit {code})")
        print(f"\noutput file bytes: {output_path.read_bytes()!r}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
