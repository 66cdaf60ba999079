"""In-process engine stand-in that runs record transforms instead of containers.

The fake stores images as named behaviors: a per-record (or whole-batch)
transform plus an optional exit code and sleep. Running a "container" reads
``input.jsonl`` from the bind-mounted host directory, applies the behavior,
and writes ``output.jsonl``, exactly like a well-behaved capsule command. The
lifecycle is fully simulated (including timeouts, without real sleeping), and
call counts are recorded so tests can assert pull deduplication and
ephemerality without a daemon.
"""

from __future__ import annotations

import threading
import time
import uuid
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from repro.engine import (
    TIMED_OUT_EXIT_CODE,
    ContainerSpec,
    EngineInfo,
    PullSummary,
    RunOutcome,
    SingleFlight,
)
from repro.errors import EngineError, EngineUnreachable, ImageNotFound
from repro.exchange import (
    INPUT_NAME,
    OUTPUT_NAME,
    Record,
    canonical_record_line,
    parse_record,
)

Transform = Callable[[Record], Record]
BatchTransform = Callable[[list[Record]], list[Record]]


@dataclass(frozen=True)
class FakeImage:
    """Behavior of one fake image when run as a container.

    With a zero exit code the image applies ``transform`` to every input
    record in order (identity when None); ``batch_transform`` takes precedence
    and may change the record count. A ``sleep_s`` above the run's timeout
    produces a timed-out outcome.
    """

    transform: Transform | None = None
    batch_transform: BatchTransform | None = None
    exit_code: int = 0
    sleep_s: float = 0.0
    stdout: bytes = b""
    stderr: bytes = b""


class FakeEngine:
    """Engine client double with the same surface as :class:`repro.engine.EngineClient`."""

    def __init__(
        self,
        *,
        engine_version: str = "24.0.7",
        api_version: str = "v1.41",
        runtimes: tuple[str, ...] = ("runc",),
        reachable: bool = True,
        pull_latency_s: float = 0.0,
    ) -> None:
        self.engine_version = engine_version
        self.api_version = api_version
        self.runtimes = frozenset(runtimes)
        self.reachable = reachable
        self.pull_latency_s = pull_latency_s
        self._lock = threading.Lock()
        self._local: dict[str, FakeImage] = {}
        self._remote: dict[str, FakeImage] = {}
        self._containers: dict[str, ContainerSpec] = {}
        self._pulls = SingleFlight()
        self.pull_requests: Counter[str] = Counter()
        self.pull_invocations: Counter[str] = Counter()
        self.containers_created = 0
        self.run_specs: list[ContainerSpec] = []

    # -- seeding and introspection

    def add_local_image(self, image: str, behavior: FakeImage | None = None) -> None:
        with self._lock:
            self._local[image] = behavior or FakeImage()

    def add_remote_image(self, image: str, behavior: FakeImage | None = None) -> None:
        with self._lock:
            self._remote[image] = behavior or FakeImage()

    @property
    def live_container_count(self) -> int:
        with self._lock:
            return len(self._containers)

    # -- engine client surface

    def _check_reachable(self) -> None:
        if not self.reachable:
            raise EngineUnreachable("engine unreachable at fake://")

    def ping(self) -> None:
        self._check_reachable()

    def image_present(self, image: str) -> bool:
        self._check_reachable()
        with self._lock:
            return image in self._local

    def pull_image(self, image: str) -> PullSummary:
        self._check_reachable()
        with self._lock:
            self.pull_invocations[image] += 1
        return self._pulls.run(image, lambda: self._pull(image))

    def _pull(self, image: str) -> PullSummary:
        if self.pull_latency_s:
            time.sleep(self.pull_latency_s)
        with self._lock:
            self.pull_requests[image] += 1
            behavior = self._remote.get(image)
            if behavior is None:
                behavior = self._local.get(image)
            if behavior is None:
                raise ImageNotFound(image)
            self._local[image] = behavior
        return PullSummary(layers=1, duration_ms=int(self.pull_latency_s * 1000))

    def run_container(self, spec: ContainerSpec) -> RunOutcome:
        self._check_reachable()
        host = Path(spec.bind[0])
        if not host.is_dir():
            raise EngineError(f"bind host path does not exist: {host}")
        with self._lock:
            behavior = self._local.get(spec.image)
            if behavior is None:
                raise EngineError("no such image", status=404, body=spec.image)
            container_id = uuid.uuid4().hex[:12]
            self._containers[container_id] = spec
            self.containers_created += 1
            self.run_specs.append(spec)
        try:
            return self._execute(behavior, spec, host)
        finally:
            with self._lock:
                self._containers.pop(container_id, None)

    def _execute(self, behavior: FakeImage, spec: ContainerSpec, host: Path) -> RunOutcome:
        # Timeouts are simulated rather than slept through, so suites mixing
        # hundreds of timed-out runs stay fast.
        if behavior.sleep_s > spec.timeout_s:
            return RunOutcome(
                exit_code=TIMED_OUT_EXIT_CODE,
                stdout=b"",
                stderr=b"",
                duration_ms=int(spec.timeout_s * 1000),
                timed_out=True,
            )
        simulated_ms = int(behavior.sleep_s * 1000)
        if behavior.exit_code != 0:
            return RunOutcome(
                exit_code=behavior.exit_code,
                stdout=behavior.stdout,
                stderr=behavior.stderr or b"command failed\n",
                duration_ms=simulated_ms,
            )
        input_path = host / INPUT_NAME
        if not input_path.is_file():
            return RunOutcome(
                exit_code=1,
                stdout=behavior.stdout,
                stderr=f"no such file: /repro/{INPUT_NAME}\n".encode(),
                duration_ms=simulated_ms,
            )
        started = time.perf_counter()
        try:
            lines = input_path.read_bytes().split(b"\n")
            records = [parse_record(line) for line in lines if line.strip()]
            if behavior.batch_transform is not None:
                outputs = behavior.batch_transform(records)
            elif behavior.transform is not None:
                outputs = [behavior.transform(record) for record in records]
            else:
                outputs = records
            payload = b"".join(canonical_record_line(record) for record in outputs)
        except Exception as exc:  # a broken transform is a failed command, not a crash
            return RunOutcome(
                exit_code=1,
                stdout=behavior.stdout,
                stderr=f"transform error: {exc}\n".encode(),
                duration_ms=simulated_ms,
            )
        (host / OUTPUT_NAME).write_bytes(payload)
        elapsed_ms = int((time.perf_counter() - started) * 1000)
        return RunOutcome(
            exit_code=0,
            stdout=behavior.stdout,
            stderr=b"",
            duration_ms=simulated_ms + elapsed_ms,
        )

    def engine_info(self) -> EngineInfo:
        if not self.reachable:
            return EngineInfo.unreachable()
        return EngineInfo(
            engine_version=self.engine_version,
            api_version=self.api_version,
            runtimes=self.runtimes,
            reachable=True,
        )
