from __future__ import annotations

import random
import string
from pathlib import Path

import hypothesis
import hypothesis.strategies as st
import pytest

from repro.fake_engine import FakeEngine
from repro.fixtures import seed_fake_engine, write_fixture_registry
from repro.registry import Registry, load_registry
from repro.runner import RunOptions

hypothesis.settings.register_profile(
    "repro", deadline=None, max_examples=60, derandomize=True
)
hypothesis.settings.load_profile("repro")


def pytest_addoption(parser):
    parser.addoption(
        "--real-engine",
        action="store_true",
        default=False,
        help="also run the engine contract tests against a real container daemon",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--real-engine"):
        return
    skip = pytest.mark.skip(reason="needs a container daemon; enable with --real-engine")
    for item in items:
        if "real_engine" in item.keywords:
            item.add_marker(skip)


# --- shared fixtures ---------------------------------------------------------


@pytest.fixture
def fixture_registry_root(tmp_path) -> Path:
    root = tmp_path / "capsules"
    write_fixture_registry(root)
    return root


@pytest.fixture
def fixture_registry(fixture_registry_root) -> Registry:
    return load_registry(fixture_registry_root)


@pytest.fixture
def fake_engine() -> FakeEngine:
    engine = FakeEngine()
    seed_fake_engine(engine, where="both")
    return engine


@pytest.fixture
def workspace(tmp_path) -> Path:
    return tmp_path / "workspace"


@pytest.fixture
def run_options(workspace) -> RunOptions:
    return RunOptions(workspace=workspace)


# --- hypothesis strategies ------------------------------------------------------

json_scalars = (
    st.none()
    | st.booleans()
    | st.integers(min_value=-(10**12), max_value=10**12)
    | st.floats(allow_nan=False, allow_infinity=False)
    | st.text(max_size=12)
)

json_values = st.recursive(
    json_scalars,
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=8), children, max_size=4),
    max_leaves=12,
)

records = st.dictionaries(st.text(max_size=8), json_values, max_size=6)


# --- seeded random record generator (independent of hypothesis) --------------------

_ALPHABET = string.ascii_letters + string.digits + " _-éß€中"


def random_json_value(rng: random.Random, depth: int = 0):
    choices = ["str", "int", "float", "bool", "null"]
    if depth < 3:
        choices += ["list", "dict"]
    kind = rng.choice(choices)
    if kind == "str":
        return "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(0, 10)))
    if kind == "int":
        return rng.randint(-(10**9), 10**9)
    if kind == "float":
        return rng.uniform(-1e6, 1e6)
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "null":
        return None
    if kind == "list":
        return [random_json_value(rng, depth + 1) for _ in range(rng.randint(0, 3))]
    return {
        "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(1, 6))): random_json_value(
            rng, depth + 1
        )
        for _ in range(rng.randint(0, 3))
    }


def random_record(rng: random.Random) -> dict:
    return {
        "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(1, 8))): random_json_value(
            rng
        )
        for _ in range(rng.randint(0, 4))
    }
