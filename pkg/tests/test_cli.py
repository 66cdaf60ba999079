from __future__ import annotations

import functools
import json

import hypothesis.strategies as st
import pytest
from hypothesis import given

from repro import cli
from repro.fake_engine import FakeEngine, FakeImage
from repro.fixtures import capsule_document, seed_fake_engine, write_capsule
from repro.manifest import parse_manifest
from repro.verify import DoctorReport, VerificationReport


@pytest.fixture
def invoke(fake_engine, fixture_registry_root, workspace):
    """Call the CLI against the fixture registry and the in-process engine."""

    def run(*argv, engine=None):
        full = list(argv) + [
            "--registry",
            str(fixture_registry_root),
            "--workspace",
            str(workspace),
        ]
        chosen = engine if engine is not None else fake_engine
        return cli.main(full, engine_factory=lambda args, **kw: chosen)

    return run


class TestList:
    def test_rows_sorted_by_name(self, invoke, capsys):
        assert invoke("list") == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split()[:2] == ["NAME", "VERSION"]
        names = [line.split()[0] for line in lines[1:]]
        assert names == sorted(names)
        assert names.index("echo") < names.index("upper")

    def test_task_filter(self, invoke, capsys):
        assert invoke("list", "--task", "summarization") == 0
        lines = capsys.readouterr().out.splitlines()
        assert [line.split()[0] for line in lines[1:]] == ["summarize"]

    def test_task_filter_no_matches_is_ok(self, invoke, capsys):
        doc_count = invoke("list", "--task", "question-answering")
        assert doc_count == 0

    def test_bad_task_is_usage_error(self, invoke, capsys):
        assert invoke("list", "--task", "flying") == 2
        assert "flying" in capsys.readouterr().err

    def test_json_round_trips_through_manifests(self, invoke, capsys):
        assert invoke("list", "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        assert isinstance(payload, list) and payload
        for document in payload:
            manifest = parse_manifest(json.dumps(document).encode("utf-8"))
            assert manifest.name == document["name"]

    def test_registry_load_failure_is_runtime_error(self, fake_engine, tmp_path, capsys):
        code = cli.main(
            ["list", "--registry", str(tmp_path / "missing")],
            engine_factory=lambda args, **kw: fake_engine,
        )
        assert code == 1


class TestRun:
    def test_golden_output_bytes(self, invoke, tmp_path, capsys):
        input_path = tmp_path / "in.jsonl"
        output_path = tmp_path / "out.jsonl"
        input_path.write_bytes(b'{"text":"hello"}\n')
        code = invoke(
            "run", "upper", "--input", str(input_path), "--output", str(output_path)
        )
        assert code == 0
        assert output_path.read_bytes() == b'{"text":"HELLO"}\n'
        err = capsys.readouterr().err
        assert "upper@1.0" in err and "records 1/1" in err

    def test_missing_input_names_path(self, invoke, tmp_path, capsys):
        missing = tmp_path / "absent.jsonl"
        code = invoke("run", "upper", "--input", str(missing), "--output", str(tmp_path / "o"))
        assert code == 2
        assert str(missing) in capsys.readouterr().err

    def test_nonzero_exit_writes_no_output(self, invoke, tmp_path, capsys):
        input_path = tmp_path / "in.jsonl"
        input_path.write_bytes(b'{"x":1}\n')
        output_path = tmp_path / "out.jsonl"
        code = invoke("run", "boom", "--input", str(input_path), "--output", str(output_path))
        assert code == 1
        assert not output_path.exists()
        err = capsys.readouterr().err
        assert "boom: synthetic failure" in err
        assert "container" in err  # phase label

    def test_invalid_input_jsonl(self, invoke, tmp_path, capsys):
        input_path = tmp_path / "in.jsonl"
        input_path.write_bytes(b"not json\n")
        code = invoke("run", "upper", "--input", str(input_path), "--output", str(tmp_path / "o"))
        assert code == 2
        assert "line 1" in capsys.readouterr().err

    def test_empty_input_file(self, invoke, tmp_path):
        input_path = tmp_path / "in.jsonl"
        input_path.write_bytes(b"")
        assert (
            invoke("run", "upper", "--input", str(input_path), "--output", str(tmp_path / "o"))
            == 2
        )

    def test_unknown_capsule(self, invoke, tmp_path):
        input_path = tmp_path / "in.jsonl"
        input_path.write_bytes(b"{}\n")
        assert (
            invoke("run", "ghost", "--input", str(input_path), "--output", str(tmp_path / "o"))
            == 2
        )

    def test_validation_failure_is_usage_error(self, invoke, tmp_path, capsys):
        input_path = tmp_path / "in.jsonl"
        input_path.write_bytes(b'{"wrong":"key"}\n')
        code = invoke(
            "run", "summarize", "--input", str(input_path), "--output", str(tmp_path / "o")
        )
        assert code == 2
        assert "indices [0]" in capsys.readouterr().err

    def test_keep_scratch_mentions_path(self, invoke, tmp_path, workspace, capsys):
        input_path = tmp_path / "in.jsonl"
        input_path.write_bytes(b'{"text":"a"}\n')
        code = invoke(
            "run",
            "upper",
            "--input",
            str(input_path),
            "--output",
            str(tmp_path / "o"),
            "--keep-scratch",
        )
        assert code == 0
        assert "scratch kept" in capsys.readouterr().err
        assert list((workspace / "runs").iterdir())

    def test_identity_feedback_loop_reproduces_bytes(self, invoke, tmp_path):
        first_in = tmp_path / "in.jsonl"
        first_out = tmp_path / "mid.jsonl"
        second_out = tmp_path / "out.jsonl"
        first_in.write_bytes(b'{"text":"hello","z":[1,2.5,null]}\n{"a":true}\n')
        assert invoke("run", "upper", "--input", str(first_in), "--output", str(first_out)) == 0
        assert (
            invoke("run", "echo", "--input", str(first_out), "--output", str(second_out)) == 0
        )
        assert second_out.read_bytes() == first_out.read_bytes()

    def test_bad_timeout_is_usage_error(self, invoke, tmp_path):
        input_path = tmp_path / "in.jsonl"
        input_path.write_bytes(b"{}\n")
        code = invoke(
            "run",
            "upper",
            "--input",
            str(input_path),
            "--output",
            str(tmp_path / "o"),
            "--timeout",
            "0",
        )
        assert code == 2


class TestPull:
    def test_pull_when_absent(self, invoke, fixture_registry_root, workspace, capsys):
        engine = FakeEngine()
        seed_fake_engine(engine, where="remote")
        assert invoke("pull", "upper", engine=engine) == 0
        assert "pulled docker.io/fixtures/upper:1.0" in capsys.readouterr().out
        assert engine.image_present("docker.io/fixtures/upper:1.0")

    def test_pull_idempotent_when_present(self, invoke, fake_engine, capsys):
        assert invoke("pull", "upper") == 0
        assert "up to date" in capsys.readouterr().out
        assert fake_engine.pull_invocations["docker.io/fixtures/upper:1.0"] == 0

    def test_unknown_capsule_is_usage_error(self, invoke):
        assert invoke("pull", "ghost") == 2

    def test_engine_failure_is_runtime_error(self, invoke):
        engine = FakeEngine()  # image neither local nor remote
        assert invoke("pull", "upper", engine=engine) == 1


class TestVerify:
    def test_passing_fixture(self, invoke, capsys):
        assert invoke("verify", "upper") == 0
        out = capsys.readouterr().out
        assert "example 0 ok" in out
        assert "verification passed (1/1)" in out

    def test_failing_expectation_prints_path(
        self, fake_engine, tmp_path, workspace, capsys
    ):
        root = tmp_path / "reg"
        write_capsule(
            root,
            capsule_document(
                "scorer",
                task="generation-metric",
                examples=[
                    {
                        "input": {"candidate": "abc", "references": ["abcdef"]},
                        "expected": {"scores": {"length-ratio": 0.5 + 2e-6}},
                        "tolerance": 1e-6,
                    }
                ],
            ),
        )
        code = cli.main(
            ["verify", "scorer", "--registry", str(root), "--workspace", str(workspace)],
            engine_factory=lambda args, **kw: fake_engine,
        )
        assert code == 3
        out = capsys.readouterr().out
        assert "scores.length-ratio" in out
        assert "verification failed" in out

    def test_no_examples_skipped(self, invoke, capsys):
        assert invoke("verify", "boom") == 0
        assert "skipped (no examples)" in capsys.readouterr().out

    def test_run_failure_is_runtime_error(self, invoke, fixture_registry_root, workspace):
        engine = FakeEngine()
        seed_fake_engine(engine)
        engine.add_local_image(
            "docker.io/fixtures/upper:1.0", FakeImage(exit_code=7)
        )
        assert invoke("verify", "upper", engine=engine) == 1

    def test_json_round_trips(self, invoke, capsys):
        assert invoke("verify", "upper", "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        report = VerificationReport.from_dict(payload)
        assert report.passed is True

    def test_negative_tolerance_is_usage_error(self, invoke):
        assert invoke("verify", "upper", "--tolerance", "-1") == 2


class TestDoctor:
    def test_healthy_engine_no_capsule(self, invoke, capsys):
        assert invoke("doctor") == 0
        out = capsys.readouterr().out
        assert "engine-reachable" in out

    def test_gpu_capsule_without_runtime_is_incompatible(self, invoke, capsys):
        assert invoke("doctor", "gpu-echo") == 4
        assert "capsule-compat" in capsys.readouterr().out

    def test_gpu_capsule_with_runtime_is_ok(self, invoke):
        engine = FakeEngine(runtimes=("runc", "nvidia"))
        seed_fake_engine(engine)
        assert invoke("doctor", "gpu-echo", engine=engine) == 0

    def test_down_engine_exits_1(self, invoke, capsys):
        engine = FakeEngine(reachable=False)
        assert invoke("doctor", engine=engine) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out

    def test_json_round_trips(self, invoke, capsys):
        assert invoke("doctor", "gpu-echo", "--json") == 4
        payload = json.loads(capsys.readouterr().out)
        report = DoctorReport.from_dict(payload)
        assert report.capsule_compat is not None
        assert report.capsule_compat.compatible is False


class TestInfo:
    def test_renders_manifest_fields(self, invoke, capsys):
        assert invoke("info", "scorer") == 0
        out = capsys.readouterr().out
        assert "name: scorer" in out
        assert "task: generation-metric" in out
        assert "image: docker.io/fixtures/scorer:1.0" in out
        assert "examples: 1" in out

    def test_unknown_name_suggests_nearest(self, invoke, capsys):
        assert invoke("info", "uper") == 2
        err = capsys.readouterr().err
        assert "did you mean 'upper'" in err

    def test_unknown_version_lists_available(self, invoke, capsys):
        assert invoke("info", "upper@9.9") == 2
        assert "available: 1.0" in capsys.readouterr().err


# --- nearest-name suggestion against a reference oracle --------------------------


@functools.cache
def reference_distance(a: str, b: str) -> int:
    """Independent recursive Levenshtein definition."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        reference_distance(a[:-1], b) + 1,
        reference_distance(a, b[:-1]) + 1,
        reference_distance(a[:-1], b[:-1]) + (a[-1] != b[-1]),
    )


class TestNearestName:
    @pytest.mark.parametrize(
        "a,b,expected",
        [("", "", 0), ("abc", "", 3), ("kitten", "sitting", 3), ("flaw", "lawn", 2)],
    )
    def test_edit_distance_known_values(self, a, b, expected):
        assert cli.edit_distance(a, b) == expected

    @given(a=st.text(max_size=8), b=st.text(max_size=8))
    def test_edit_distance_matches_reference(self, a, b):
        assert cli.edit_distance(a, b) == reference_distance(a, b)

    @given(
        query=st.from_regex(r"[a-z0-9][a-z0-9-]{0,8}", fullmatch=True),
        names=st.lists(
            st.from_regex(r"[a-z0-9][a-z0-9-]{0,8}", fullmatch=True),
            min_size=1,
            max_size=8,
            unique=True,
        ),
    )
    def test_suggestion_attains_minimum_distance(self, query, names):
        suggestion = cli.nearest_name(query, names)
        distances = {name: reference_distance(query, name) for name in names}
        assert suggestion is not None
        assert distances[suggestion] == min(distances.values())

    def test_empty_candidates(self):
        assert cli.nearest_name("x", []) is None


class TestGlobalFlagPrecedence:
    def test_registry_flag_beats_env(
        self, fake_engine, fixture_registry_root, tmp_path, monkeypatch, capsys
    ):
        empty = tmp_path / "empty-registry"
        empty.mkdir()
        monkeypatch.setenv("REPRO_REGISTRY", str(empty))
        code = cli.main(
            ["list", "--registry", str(fixture_registry_root)],
            engine_factory=lambda args, **kw: fake_engine,
        )
        assert code == 0
        assert "upper" in capsys.readouterr().out

    def test_env_used_without_flag(self, fake_engine, fixture_registry_root, monkeypatch, capsys):
        monkeypatch.setenv("REPRO_REGISTRY", str(fixture_registry_root))
        code = cli.main(["list"], engine_factory=lambda args, **kw: fake_engine)
        assert code == 0
        assert "upper" in capsys.readouterr().out

    def test_engine_flag_reaches_default_factory(
        self, fixture_registry_root, tmp_path, capsys
    ):
        # no injected factory: the flag must flow into connect()
        missing = tmp_path / "missing.sock"
        code = cli.main(
            ["doctor", "--engine", f"unix://{missing}", "--registry", str(fixture_registry_root)]
        )
        assert code == 1
        assert "engine-reachable" in capsys.readouterr().out
        code = cli.main(
            ["pull", "upper", "--engine", f"unix://{missing}", "--registry", str(fixture_registry_root)]
        )
        assert code == 1
        assert str(missing) in capsys.readouterr().err


class TestJsonOutputsAreCanonical:
    @pytest.mark.parametrize(
        "argv",
        [("list", "--json"), ("verify", "upper", "--json"), ("doctor", "--json")],
        ids=["list", "verify", "doctor"],
    )
    def test_byte_form_is_canonical(self, invoke, capsys, argv):
        invoke(*argv)
        line = capsys.readouterr().out.strip()
        payload = json.loads(line)
        assert (
            json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            == line
        )


class TestExitCodeMapping:
    def test_no_arguments_is_usage_error(self):
        assert cli.main([]) == 2

    def test_help_exits_zero(self, capsys):
        assert cli.main(["--help"]) == 0
        capsys.readouterr()

    def test_unknown_subcommand(self, capsys):
        assert cli.main(["frobnicate"]) == 2
        capsys.readouterr()

    def test_bad_capsule_id_syntax(self, invoke):
        assert invoke("info", "UPPER") == 2

    def test_internal_errors_map_to_runtime(self, fixture_registry_root, workspace, capsys):
        def broken_factory(args, **kw):
            raise RuntimeError("synthetic breakage")

        code = cli.main(
            [
                "pull",
                "upper",
                "--registry",
                str(fixture_registry_root),
                "--workspace",
                str(workspace),
            ],
            engine_factory=broken_factory,
        )
        assert code == 1
        assert "internal error" in capsys.readouterr().err
