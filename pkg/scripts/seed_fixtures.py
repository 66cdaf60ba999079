#!/usr/bin/env python3
"""Write the built-in fixture capsules into a registry directory.

Usage: python scripts/seed_fixtures.py [--dest ./capsules]

Afterwards the CLI can browse them, e.g.:
    repro list --registry ./capsules
    repro info upper --registry ./capsules
"""

from __future__ import annotations

import argparse
from pathlib import Path

from repro.fixtures import FIXTURE_CAPSULES, write_fixture_registry


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dest", default="./capsules", help="registry root to create")
    args = parser.parse_args()
    root = write_fixture_registry(Path(args.dest))
    for name in sorted(FIXTURE_CAPSULES):
        document = FIXTURE_CAPSULES[name].document
        print(f"wrote {root / name / document['version'] / 'capsule.json'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
