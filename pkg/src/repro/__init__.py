"""repro: run containerized research code through declarative capsule manifests."""

from repro.engine import (
    ContainerSpec,
    EngineClient,
    EngineEndpoint,
    EngineInfo,
    PullSummary,
    RunOutcome,
    connect,
)
from repro.exchange import (
    ExchangeSession,
    Record,
    canonical_json,
    close_session,
    open_session,
    read_outputs,
    write_inputs,
)
from repro.fake_engine import FakeEngine, FakeImage
from repro.manifest import (
    CapsuleManifest,
    CommandTemplate,
    ExampleCase,
    ImageRef,
    PaperMeta,
    ResourceSpec,
    canonical_image_ref,
    parse_image_ref,
    parse_manifest,
    render_command,
    serialize_manifest,
)
from repro.registry import (
    CapsuleId,
    Registry,
    list_capsules,
    load_registry,
    resolve,
)
from repro.runner import (
    PullPolicy,
    RunOptions,
    RunReport,
    run_capsule,
    run_single,
)
from repro.tasks import TaskKind, validate_input, validate_output
from repro.verify import (
    ComparisonPolicy,
    DoctorReport,
    Mismatch,
    VerificationReport,
    check_environment,
    compare_records,
    verify_capsule,
)

__version__ = "0.1.0"

__all__ = [
    "CapsuleId",
    "CapsuleManifest",
    "CommandTemplate",
    "ComparisonPolicy",
    "ContainerSpec",
    "DoctorReport",
    "EngineClient",
    "EngineEndpoint",
    "EngineInfo",
    "ExampleCase",
    "ExchangeSession",
    "FakeEngine",
    "FakeImage",
    "ImageRef",
    "Mismatch",
    "PaperMeta",
    "PullPolicy",
    "PullSummary",
    "Record",
    "Registry",
    "ResourceSpec",
    "RunOptions",
    "RunOutcome",
    "RunReport",
    "TaskKind",
    "VerificationReport",
    "canonical_image_ref",
    "canonical_json",
    "check_environment",
    "close_session",
    "compare_records",
    "connect",
    "list_capsules",
    "load_registry",
    "open_session",
    "parse_image_ref",
    "parse_manifest",
    "read_outputs",
    "render_command",
    "resolve",
    "run_capsule",
    "run_single",
    "serialize_manifest",
    "validate_input",
    "validate_output",
    "verify_capsule",
    "write_inputs",
]
