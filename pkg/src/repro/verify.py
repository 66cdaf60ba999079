"""Faithfulness verification and environment doctor.

Verification replays a capsule's bundled example inputs through the full run
pipeline and compares each output to its expected record: numbers within an
absolute tolerance, everything else exactly, objects and arrays structurally
with the policy applied at the leaves. The doctor reports engine reachability
and whether a capsule's declared resource needs can be met.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Any

from repro.engine import EngineInfo
from repro.errors import ReproError
from repro.exchange import Record
from repro.registry import CapsuleId, Registry, resolve
from repro.runner import RunOptions, run_capsule

MISSING = "<missing>"

GPU_RUNTIME = "nvidia"


# --- record comparison ---------------------------------------------------------


@dataclass(frozen=True)
class ComparisonPolicy:
    numeric_tolerance: float = 0.0
    string_mode: str = "exact"

    def __post_init__(self) -> None:
        if self.numeric_tolerance < 0:
            raise ValueError("numeric_tolerance must be non-negative")
        if self.string_mode != "exact":
            raise ValueError("only exact string comparison is supported")


@dataclass(frozen=True)
class Mismatch:
    path: str
    expected: Any
    actual: Any


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _compare(expected: Any, actual: Any, path: str, tolerance: float, out: list[Mismatch]) -> None:
    if isinstance(expected, dict) and isinstance(actual, dict):
        for key in sorted(set(expected) | set(actual)):
            child = _join(path, key)
            if key not in expected:
                out.append(Mismatch(child, MISSING, actual[key]))
            elif key not in actual:
                out.append(Mismatch(child, expected[key], MISSING))
            else:
                _compare(expected[key], actual[key], child, tolerance, out)
        return
    if isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            out.append(Mismatch(path, expected, actual))
            return
        for i, (exp, act) in enumerate(zip(expected, actual)):
            _compare(exp, act, f"{path}[{i}]", tolerance, out)
        return
    if _is_number(expected) and _is_number(actual):
        if not abs(expected - actual) <= tolerance:
            out.append(Mismatch(path, expected, actual))
        return
    # bool is an int subclass; require matching bool-ness so True never equals 1
    if isinstance(expected, bool) != isinstance(actual, bool) or expected != actual:
        out.append(Mismatch(path, expected, actual))


def compare_records(
    expected: Record, actual: Record, policy: ComparisonPolicy
) -> list[Mismatch]:
    """Structural comparison; empty result means the records match under the policy."""
    out: list[Mismatch] = []
    _compare(expected, actual, "", policy.numeric_tolerance, out)
    return out


# --- verification --------------------------------------------------------------


@dataclass(frozen=True)
class CaseResult:
    index: int
    passed: bool
    mismatches: tuple[Mismatch, ...] = ()


@dataclass(frozen=True)
class VerificationReport:
    capsule: CapsuleId
    cases: tuple[CaseResult, ...]
    passed: bool
    skipped: bool
    error: str | None = None  # set when the replay run itself failed

    def to_dict(self) -> dict:
        return {
            "capsule": str(self.capsule),
            "passed": self.passed,
            "skipped": self.skipped,
            "error": self.error,
            "cases": [
                {
                    "index": case.index,
                    "passed": case.passed,
                    "mismatches": [
                        {"path": m.path, "expected": m.expected, "actual": m.actual}
                        for m in case.mismatches
                    ],
                }
                for case in self.cases
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> VerificationReport:
        return cls(
            capsule=CapsuleId.parse(data["capsule"]),
            cases=tuple(
                CaseResult(
                    index=case["index"],
                    passed=case["passed"],
                    mismatches=tuple(
                        Mismatch(m["path"], m["expected"], m["actual"])
                        for m in case["mismatches"]
                    ),
                )
                for case in data["cases"]
            ),
            passed=data["passed"],
            skipped=data["skipped"],
            error=data.get("error"),
        )


def verify_capsule(
    client,
    registry: Registry,
    capsule: CapsuleId | str,
    override_tolerance: float | None = None,
    *,
    options: RunOptions | None = None,
) -> VerificationReport:
    """Replay all bundled examples as one batch and compare outputs.

    Capsules with no examples report ``skipped`` (and pass vacuously), which
    stays distinct from a genuine pass. A failure of the replay run itself
    marks every case failed and carries the error detail.
    """
    if isinstance(capsule, str):
        capsule = CapsuleId.parse(capsule)
    manifest = resolve(registry, capsule)
    resolved = CapsuleId(manifest.name, manifest.version)
    if not manifest.examples:
        return VerificationReport(capsule=resolved, cases=(), passed=True, skipped=True)

    inputs = [copy.deepcopy(case.input) for case in manifest.examples]
    try:
        outputs, _report = run_capsule(client, registry, resolved, inputs, options)
    except ReproError as exc:
        cases = tuple(
            CaseResult(index=i, passed=False) for i in range(len(manifest.examples))
        )
        return VerificationReport(
            capsule=resolved, cases=cases, passed=False, skipped=False, error=str(exc)
        )

    cases = []
    for i, (case, actual) in enumerate(zip(manifest.examples, outputs)):
        tolerance = case.tolerance if override_tolerance is None else override_tolerance
        mismatches = compare_records(
            case.expected, actual, ComparisonPolicy(numeric_tolerance=tolerance)
        )
        cases.append(CaseResult(index=i, passed=not mismatches, mismatches=tuple(mismatches)))
    return VerificationReport(
        capsule=resolved,
        cases=tuple(cases),
        passed=all(case.passed for case in cases),
        skipped=False,
    )


# --- environment doctor ----------------------------------------------------------


@dataclass(frozen=True)
class DoctorCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class CapsuleCompat:
    gpu_required: bool
    gpu_available: bool
    compatible: bool


@dataclass(frozen=True)
class DoctorReport:
    engine: EngineInfo
    checks: tuple[DoctorCheck, ...]
    capsule_compat: CapsuleCompat | None = None

    def to_dict(self) -> dict:
        compat = None
        if self.capsule_compat is not None:
            compat = {
                "gpu_required": self.capsule_compat.gpu_required,
                "gpu_available": self.capsule_compat.gpu_available,
                "compatible": self.capsule_compat.compatible,
            }
        return {
            "engine": {
                "engine_version": self.engine.engine_version,
                "api_version": self.engine.api_version,
                "runtimes": sorted(self.engine.runtimes),
                "reachable": self.engine.reachable,
            },
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
            "capsule_compat": compat,
        }

    @classmethod
    def from_dict(cls, data: dict) -> DoctorReport:
        engine = data["engine"]
        compat = data.get("capsule_compat")
        return cls(
            engine=EngineInfo(
                engine_version=engine["engine_version"],
                api_version=engine["api_version"],
                runtimes=frozenset(engine["runtimes"]),
                reachable=engine["reachable"],
            ),
            checks=tuple(
                DoctorCheck(c["name"], c["passed"], c["detail"]) for c in data["checks"]
            ),
            capsule_compat=None
            if compat is None
            else CapsuleCompat(
                gpu_required=compat["gpu_required"],
                gpu_available=compat["gpu_available"],
                compatible=compat["compatible"],
            ),
        )


def check_environment(
    client, capsule: CapsuleId | str | None = None, registry: Registry | None = None
) -> DoctorReport:
    """Gather engine health checks, plus capsule compatibility when one is named.

    Never raises: an unreachable engine fails every engine check but still
    yields a report.
    """
    info = client.engine_info()
    gpu_available = GPU_RUNTIME in info.runtimes
    checks = [
        DoctorCheck(
            "engine-reachable",
            info.reachable,
            f"engine version {info.engine_version}" if info.reachable else "engine not reachable",
        ),
        DoctorCheck(
            "api-version",
            info.reachable and bool(info.api_version),
            info.api_version or "unknown",
        ),
        DoctorCheck(
            "gpu-runtime",
            info.reachable,
            f"{GPU_RUNTIME} runtime available"
            if gpu_available
            else f"no {GPU_RUNTIME} runtime (gpu capsules will not run)",
        ),
    ]
    compat = None
    if capsule is not None:
        if isinstance(capsule, str):
            capsule = CapsuleId.parse(capsule)
        assert registry is not None, "a registry is required to check a capsule"
        manifest = resolve(registry, capsule)
        required = manifest.resources.gpu
        compat = CapsuleCompat(
            gpu_required=required,
            gpu_available=gpu_available,
            compatible=(not required) or gpu_available,
        )
    return DoctorReport(engine=info, checks=tuple(checks), capsule_compat=compat)
