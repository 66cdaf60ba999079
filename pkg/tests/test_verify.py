from __future__ import annotations

import json

import hypothesis.strategies as st
import pytest
from hypothesis import given

from repro.fake_engine import FakeEngine
from repro.fixtures import capsule_document, seed_fake_engine, write_capsule
from repro.registry import CapsuleId, load_registry
from repro.verify import (
    MISSING,
    ComparisonPolicy,
    DoctorReport,
    VerificationReport,
    check_environment,
    compare_records,
    verify_capsule,
)

from conftest import records


def policy(tolerance: float = 0.0) -> ComparisonPolicy:
    return ComparisonPolicy(numeric_tolerance=tolerance)


class TestCompareRecords:
    def test_within_tolerance(self):
        expected = {"scores": {"m": 0.5}}
        actual = {"scores": {"m": 0.50000004}}
        assert compare_records(expected, actual, policy(1e-4)) == []

    def test_outside_tolerance_names_path(self):
        expected = {"scores": {"m": 0.5}}
        actual = {"scores": {"m": 0.50000004}}
        mismatches = compare_records(expected, actual, policy(1e-9))
        assert [(m.path, m.expected, m.actual) for m in mismatches] == [
            ("scores.m", 0.5, 0.50000004)
        ]

    def test_identity(self):
        assert compare_records({"summary": "a"}, {"summary": "a"}, policy()) == []

    def test_strings_exact_even_with_tolerance(self):
        mismatches = compare_records({"s": "a"}, {"s": "A"}, policy(10.0))
        assert mismatches[0].path == "s"

    def test_missing_key_reported_on_both_sides(self):
        only_expected = compare_records({"a": 1}, {}, policy())
        assert [(m.path, m.expected, m.actual) for m in only_expected] == [("a", 1, MISSING)]
        only_actual = compare_records({}, {"a": 1}, policy())
        assert [(m.path, m.expected, m.actual) for m in only_actual] == [("a", MISSING, 1)]

    def test_nested_arrays_use_indexed_paths(self):
        expected = {"xs": [{"v": 1.0}, {"v": 2.0}]}
        actual = {"xs": [{"v": 1.0}, {"v": 2.5}]}
        mismatches = compare_records(expected, actual, policy())
        assert [m.path for m in mismatches] == ["xs[1].v"]

    def test_array_length_mismatch_reported_at_array(self):
        mismatches = compare_records({"xs": [1, 2]}, {"xs": [1]}, policy())
        assert [m.path for m in mismatches] == ["xs"]

    def test_bool_never_equals_number(self):
        assert compare_records({"x": True}, {"x": 1}, policy(5.0)) != []
        assert compare_records({"x": 1}, {"x": True}, policy(5.0)) != []

    def test_int_float_compared_numerically(self):
        assert compare_records({"x": 1}, {"x": 1.0}, policy()) == []

    def test_null_exact(self):
        assert compare_records({"x": None}, {"x": None}, policy()) == []
        assert compare_records({"x": None}, {"x": 0}, policy()) != []

    def test_type_mismatch_is_a_mismatch(self):
        assert compare_records({"x": {"y": 1}}, {"x": [1]}, policy())[0].path == "x"

    def test_zero_tolerance_requires_exact_numbers(self):
        assert compare_records({"x": 0.5}, {"x": 0.5}, policy(0.0)) == []
        assert compare_records({"x": 0.5}, {"x": 0.5000001}, policy(0.0)) != []

    @given(expected=records, actual=records)
    def test_symmetric_paths_at_zero_tolerance(self, expected, actual):
        forward = {m.path for m in compare_records(expected, actual, policy())}
        backward = {m.path for m in compare_records(actual, expected, policy())}
        assert forward == backward

    @given(
        expected=records,
        actual=records,
        low=st.floats(min_value=0, max_value=1e6, allow_nan=False),
        high=st.floats(min_value=0, max_value=1e6, allow_nan=False),
    )
    def test_tolerance_monotonicity(self, expected, actual, low, high):
        if low > high:
            low, high = high, low
        if compare_records(expected, actual, policy(low)) == []:
            assert compare_records(expected, actual, policy(high)) == []

    def test_negative_tolerance_rejected(self):
        with pytest.raises(ValueError):
            ComparisonPolicy(numeric_tolerance=-1.0)


class TestVerifyCapsule:
    def test_passing_fixture(self, fake_engine, fixture_registry, run_options):
        report = verify_capsule(fake_engine, fixture_registry, "upper", options=run_options)
        assert report.passed is True
        assert report.skipped is False
        assert [case.passed for case in report.cases] == [True]

    def test_all_fixture_examples_pass(self, fake_engine, fixture_registry, run_options):
        for name in ("upper", "echo", "scorer", "summarize", "qa-head"):
            report = verify_capsule(fake_engine, fixture_registry, name, options=run_options)
            assert report.passed is True, name

    def test_wrong_expectation_fails_with_path(
        self, fake_engine, tmp_path, run_options
    ):
        doc = capsule_document(
            "upper",
            examples=[{"input": {"text": "hi"}, "expected": {"text": "Hi"}}],
        )
        root = tmp_path / "reg"
        write_capsule(root, doc)
        seed_fake_engine(fake_engine)
        report = verify_capsule(
            fake_engine, load_registry(root), "upper", options=run_options
        )
        assert report.passed is False
        assert report.cases[0].mismatches[0].path == "text"
        assert report.cases[0].mismatches[0].expected == "Hi"
        assert report.cases[0].mismatches[0].actual == "HI"

    def test_no_examples_is_skipped_and_passed(
        self, fake_engine, fixture_registry, run_options
    ):
        report = verify_capsule(fake_engine, fixture_registry, "boom", options=run_options)
        assert report.skipped is True
        assert report.passed is True
        assert report.cases == ()

    def test_run_failure_marks_all_cases_failed(self, fake_engine, tmp_path, run_options):
        doc = capsule_document(
            "kaput",
            examples=[
                {"input": {"a": 1}, "expected": {"a": 1}},
                {"input": {"b": 2}, "expected": {"b": 2}},
            ],
        )
        root = tmp_path / "reg"
        write_capsule(root, doc)
        from repro.fake_engine import FakeImage

        fake_engine.add_local_image(
            "docker.io/fixtures/kaput:1.0", FakeImage(exit_code=9, stderr=b"dead\n")
        )
        report = verify_capsule(fake_engine, load_registry(root), "kaput", options=run_options)
        assert report.passed is False
        assert report.error is not None
        assert "9" in report.error
        assert [case.passed for case in report.cases] == [False, False]

    def test_override_tolerance_applies(self, fake_engine, tmp_path, run_options):
        doc = capsule_document(
            "scorer",
            task="generation-metric",
            examples=[
                {
                    "input": {"candidate": "abc", "references": ["abcdef"]},
                    "expected": {"scores": {"length-ratio": 0.6}},
                    "tolerance": 1e-6,
                }
            ],
        )
        root = tmp_path / "reg"
        write_capsule(root, doc)
        seed_fake_engine(fake_engine)
        registry = load_registry(root)
        strict = verify_capsule(fake_engine, registry, "scorer", options=run_options)
        assert strict.passed is False
        loose = verify_capsule(fake_engine, registry, "scorer", 0.5, options=run_options)
        assert loose.passed is True

    def test_report_round_trips_through_json(self, fake_engine, fixture_registry, run_options):
        report = verify_capsule(fake_engine, fixture_registry, "upper", options=run_options)
        payload = json.dumps(report.to_dict(), sort_keys=True)
        assert VerificationReport.from_dict(json.loads(payload)) == report

    def test_resolved_version_pinned_in_report(
        self, fake_engine, fixture_registry, run_options
    ):
        report = verify_capsule(fake_engine, fixture_registry, "upper", options=run_options)
        assert report.capsule == CapsuleId("upper", "1.0")


class TestCheckEnvironment:
    @pytest.mark.parametrize(
        "gpu_required,gpu_available",
        [(False, False), (False, True), (True, False), (True, True)],
    )
    def test_compat_truth_table(
        self, fixture_registry, gpu_required, gpu_available, tmp_path
    ):
        runtimes = ("runc", "nvidia") if gpu_available else ("runc",)
        engine = FakeEngine(runtimes=runtimes)
        capsule = CapsuleId("gpu-echo") if gpu_required else CapsuleId("echo")
        report = check_environment(engine, capsule, fixture_registry)
        compat = report.capsule_compat
        assert compat is not None
        assert compat.gpu_required is gpu_required
        assert compat.gpu_available is gpu_available
        assert compat.compatible is ((not gpu_required) or gpu_available)

    def test_without_capsule_no_compat(self):
        report = check_environment(FakeEngine())
        assert report.capsule_compat is None
        assert all(check.passed for check in report.checks)

    def test_gpu_runtime_listed(self):
        report = check_environment(FakeEngine(runtimes=("runc", "nvidia")))
        gpu_check = next(c for c in report.checks if c.name == "gpu-runtime")
        assert "nvidia" in gpu_check.detail

    def test_down_engine_fails_all_checks_without_crash(self, fixture_registry):
        engine = FakeEngine(reachable=False)
        report = check_environment(engine, CapsuleId("gpu-echo"), fixture_registry)
        assert report.engine.reachable is False
        assert all(not check.passed for check in report.checks)
        assert report.capsule_compat is not None
        assert report.capsule_compat.gpu_available is False

    def test_report_round_trips_through_json(self, fixture_registry):
        report = check_environment(
            FakeEngine(runtimes=("runc", "nvidia")), CapsuleId("gpu-echo"), fixture_registry
        )
        payload = json.dumps(report.to_dict(), sort_keys=True)
        assert DoctorReport.from_dict(json.loads(payload)) == report
