"""Container engine client: image presence, pulls, and the ephemeral run lifecycle.

Talks to the engine's versioned HTTP API directly (local socket or TCP), with
no engine SDK in between. Every container is created, started, awaited, read
and force-removed within one call; nothing is ever reused, so each run starts
from the image's pristine state. Concurrent pulls of one image are coalesced
into a single underlying request.

An in-process stand-in with the same surface lives in
:mod:`repro.fake_engine` so the full pipeline can run without a daemon.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable

import httpx

from repro.errors import (
    EngineError,
    EngineUnreachable,
    ImageNotFound,
    InvalidEndpoint,
    PullTimeout,
)
from repro.exchange import GUEST_DIR
from repro.manifest import parse_image_ref

DEFAULT_API_VERSION = "v1.41"
DEFAULT_SOCKET = "/var/run/docker.sock"
ENGINE_ENV = "REPRO_DOCKER_HOST"
DOCKER_HOST_ENV = "DOCKER_HOST"

TIMED_OUT_EXIT_CODE = -1
DEFAULT_TIMEOUT_S = 3600

_CONTROL_TIMEOUT_S = 30.0
_PULL_TIMEOUT_S = 1800.0

LOCAL_SOCKET = "local-socket"
TCP = "tcp"


# --- domain types ------------------------------------------------------------------


@dataclass(frozen=True)
class EngineEndpoint:
    transport: str  # "local-socket" or "tcp"
    address: str  # absolute socket path, or host:port
    api_version: str = DEFAULT_API_VERSION

    def __post_init__(self) -> None:
        if self.transport == LOCAL_SOCKET:
            if not self.address.startswith("/"):
                raise InvalidEndpoint(
                    f"local socket address must be an absolute path: {self.address!r}"
                )
        elif self.transport == TCP:
            _, _, port = self.address.rpartition(":")
            if not port.isdigit():
                raise InvalidEndpoint(f"tcp address must include a port: {self.address!r}")
        else:
            raise InvalidEndpoint(f"unknown transport {self.transport!r}")

    def __str__(self) -> str:
        if self.transport == LOCAL_SOCKET:
            return f"unix://{self.address}"
        return f"tcp://{self.address}"


@dataclass(frozen=True)
class ContainerSpec:
    """Everything needed to run one ephemeral container."""

    image: str
    argv: tuple[str, ...]
    bind: tuple[str, str, bool]  # host path, guest path, read-write flag
    memory_limit_bytes: int
    gpu: bool = False
    timeout_s: int = DEFAULT_TIMEOUT_S

    def __post_init__(self) -> None:
        if not self.argv:
            raise ValueError("argv must be non-empty")
        if self.bind[1] != GUEST_DIR:
            raise ValueError(f"guest mount path must be {GUEST_DIR}, got {self.bind[1]!r}")
        if self.memory_limit_bytes <= 0:
            raise ValueError("memory_limit_bytes must be positive")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


@dataclass(frozen=True)
class RunOutcome:
    exit_code: int
    stdout: bytes
    stderr: bytes
    duration_ms: int
    timed_out: bool = False

    def __post_init__(self) -> None:
        if self.timed_out and self.exit_code != TIMED_OUT_EXIT_CODE:
            raise ValueError("timed-out runs must carry the sentinel exit code -1")
        if self.duration_ms < 0:
            raise ValueError("duration_ms must be non-negative")


@dataclass(frozen=True)
class EngineInfo:
    engine_version: str
    api_version: str
    runtimes: frozenset[str]
    reachable: bool

    def __post_init__(self) -> None:
        if not self.reachable and (self.engine_version or self.api_version or self.runtimes):
            raise ValueError("an unreachable engine must report empty fields")

    @classmethod
    def unreachable(cls) -> EngineInfo:
        return cls(engine_version="", api_version="", runtimes=frozenset(), reachable=False)


@dataclass(frozen=True)
class PullSummary:
    layers: int
    duration_ms: int


# --- single-flight deduplication ---------------------------------------------------


class _Call:
    __slots__ = ("event", "result", "error")

    def __init__(self) -> None:
        self.event = threading.Event()
        self.result = None
        self.error: BaseException | None = None


class SingleFlight:
    """Coalesce concurrent calls per key into one execution.

    Only in-flight calls share a result; once the leader finishes, the next
    call for the same key executes again. Followers re-raise the leader's
    exception.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._inflight: dict[str, _Call] = {}

    def run(self, key: str, fn: Callable[[], object]) -> object:
        with self._lock:
            call = self._inflight.get(key)
            leader = call is None
            if leader:
                call = _Call()
                self._inflight[key] = call
        assert call is not None
        if not leader:
            call.event.wait()
            if call.error is not None:
                raise call.error
            return call.result
        try:
            call.result = fn()
        except BaseException as exc:
            call.error = exc
            raise
        finally:
            with self._lock:
                self._inflight.pop(key, None)
            call.event.set()
        return call.result


# --- endpoint resolution ---------------------------------------------------------------


def parse_endpoint(text: str, api_version: str = DEFAULT_API_VERSION) -> EngineEndpoint:
    """Parse ``unix:///path``, ``tcp://host:port``, or a bare socket path."""
    if text.startswith("unix://"):
        return EngineEndpoint(LOCAL_SOCKET, text[len("unix://") :], api_version)
    if text.startswith("tcp://"):
        return EngineEndpoint(TCP, text[len("tcp://") :], api_version)
    if text.startswith("/"):
        return EngineEndpoint(LOCAL_SOCKET, text, api_version)
    raise InvalidEndpoint(
        f"endpoint must be unix://<path>, tcp://<host:port>, or an absolute "
        f"socket path, got {text!r}"
    )


def resolve_endpoint(endpoint: EngineEndpoint | str | None = None) -> EngineEndpoint:
    """Endpoint precedence: explicit value, $REPRO_DOCKER_HOST, $DOCKER_HOST, default socket."""
    if isinstance(endpoint, EngineEndpoint):
        return endpoint
    if endpoint is not None:
        return parse_endpoint(endpoint)
    for env in (ENGINE_ENV, DOCKER_HOST_ENV):
        value = os.environ.get(env)
        if value:
            return parse_endpoint(value)
    return EngineEndpoint(LOCAL_SOCKET, DEFAULT_SOCKET)


# --- log stream demultiplexing ------------------------------------------------------------


def demux_log_stream(data: bytes) -> tuple[bytes, bytes]:
    """Split a multiplexed container log stream into (stdout, stderr).

    Frames are 8-byte headers (stream id, three zero bytes, big-endian length)
    followed by the payload. Data that does not start with a frame header is
    treated as raw stdout (TTY containers are not framed).
    """
    if not data:
        return b"", b""
    if len(data) < 8 or data[0] not in (0, 1, 2) or data[1:4] != b"\x00\x00\x00":
        return data, b""
    stdout = bytearray()
    stderr = bytearray()
    i = 0
    while i + 8 <= len(data):
        stream_id = data[i]
        size = int.from_bytes(data[i + 4 : i + 8], "big")
        chunk = data[i + 8 : i + 8 + size]
        if stream_id == 2:
            stderr.extend(chunk)
        else:
            stdout.extend(chunk)
        i += 8 + size
    return bytes(stdout), bytes(stderr)


# --- client ----------------------------------------------------------------------------


class EngineClient:
    """HTTP client for one engine endpoint; safe to share across threads."""

    def __init__(
        self,
        endpoint: EngineEndpoint,
        *,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        if transport is None and endpoint.transport == LOCAL_SOCKET:
            transport = httpx.HTTPTransport(uds=endpoint.address)
        host = "docker" if endpoint.transport == LOCAL_SOCKET else endpoint.address
        self._http = httpx.Client(
            transport=transport,
            base_url=f"http://{host}/{endpoint.api_version}",
            timeout=_CONTROL_TIMEOUT_S,
        )
        self._pulls = SingleFlight()

    def close(self) -> None:
        self._http.close()

    # -- request plumbing

    def _request(
        self,
        method: str,
        path: str,
        *,
        ok: set[int],
        params: dict | None = None,
        body: dict | None = None,
        timeout: httpx.Timeout | float | None = None,
        map_timeout: bool = True,
    ) -> httpx.Response:
        kwargs: dict = {}
        if params is not None:
            kwargs["params"] = params
        if body is not None:
            kwargs["json"] = body
        if timeout is not None:  # otherwise keep the client default
            kwargs["timeout"] = timeout
        try:
            response = self._http.request(method, path, **kwargs)
        except httpx.TimeoutException:
            if map_timeout:
                raise EngineError(f"engine request timed out: {method} {path}") from None
            raise
        except httpx.HTTPError as exc:
            raise EngineUnreachable(
                f"engine unreachable at {self.endpoint}: {exc}"
            ) from exc
        if response.status_code not in ok:
            raise EngineError(
                f"engine request failed: {method} {path}",
                status=response.status_code,
                body=response.text[:400],
            )
        return response

    # -- operations

    def ping(self) -> None:
        """One round trip to the engine; raises EngineUnreachable when down."""
        try:
            response = self._http.get("/_ping")
        except httpx.HTTPError as exc:
            raise EngineUnreachable(
                f"engine unreachable at {self.endpoint}: {exc}"
            ) from exc
        if response.status_code != 200:
            raise EngineUnreachable(
                f"engine at {self.endpoint} refused ping",
                status=response.status_code,
            )

    def image_present(self, image: str) -> bool:
        """True iff the image inspect endpoint answers 200."""
        response = self._request("GET", f"/images/{image}/json", ok={200, 404})
        return response.status_code == 200

    def pull_image(self, image: str) -> PullSummary:
        """Pull an image; concurrent pulls of the same string share one request."""
        return self._pulls.run(image, lambda: self._pull(image))

    def _pull(self, image: str) -> PullSummary:
        ref = parse_image_ref(image)
        params = {
            "fromImage": f"{ref.registry}/{ref.repository}",
            "tag": ref.digest or ref.tag,
        }
        started = time.perf_counter()
        layers: set[str] = set()
        try:
            with self._http.stream(
                "POST", "/images/create", params=params, timeout=_PULL_TIMEOUT_S
            ) as response:
                if response.status_code == 404:
                    raise ImageNotFound(image)
                if response.status_code != 200:
                    response.read()
                    raise EngineError(
                        "image pull failed",
                        status=response.status_code,
                        body=response.text[:400],
                    )
                for line in response.iter_lines():
                    if not line.strip():
                        continue
                    try:
                        event = json.loads(line)
                    except ValueError:
                        continue
                    error = event.get("error")
                    if error:
                        lowered = str(error).lower()
                        missing = (
                            "not found",
                            "manifest unknown",
                            "does not exist",
                            "access denied",
                        )
                        if any(marker in lowered for marker in missing):
                            raise ImageNotFound(image)
                        raise EngineError(f"image pull failed: {error}")
                    layer = event.get("id")
                    if layer:
                        layers.add(str(layer))
        except httpx.TimeoutException:
            raise PullTimeout(image) from None
        except httpx.HTTPError as exc:
            raise EngineUnreachable(
                f"engine unreachable at {self.endpoint}: {exc}"
            ) from exc
        duration_ms = int((time.perf_counter() - started) * 1000)
        return PullSummary(layers=len(layers), duration_ms=duration_ms)

    def run_container(self, spec: ContainerSpec) -> RunOutcome:
        """Create, start, await, read logs, and force-remove one container.

        Removal happens on every path, including timeout, so no container ever
        outlives its run.
        """
        host, guest, rw = spec.bind
        if not os.path.isdir(host):
            raise EngineError(f"bind host path does not exist: {host}")
        body = {
            "Image": spec.image,
            "Cmd": list(spec.argv),
            "HostConfig": {
                "Binds": [f"{host}:{guest}:{'rw' if rw else 'ro'}"],
                "Memory": spec.memory_limit_bytes,
            },
        }
        if spec.gpu:
            body["HostConfig"]["DeviceRequests"] = [
                {"Driver": "", "Count": -1, "Capabilities": [["gpu"]]}
            ]
        response = self._request("POST", "/containers/create", body=body, ok={201})
        container_id = response.json()["Id"]
        started = time.perf_counter()
        timed_out = False
        exit_code = TIMED_OUT_EXIT_CODE
        stdout = stderr = b""
        try:
            self._request("POST", f"/containers/{container_id}/start", ok={204, 304})
            try:
                wait = self._request(
                    "POST",
                    f"/containers/{container_id}/wait",
                    ok={200},
                    timeout=httpx.Timeout(_CONTROL_TIMEOUT_S, read=spec.timeout_s + 2.0),
                    map_timeout=False,
                )
                exit_code = int(wait.json().get("StatusCode", TIMED_OUT_EXIT_CODE))
            except httpx.TimeoutException:
                timed_out = True
            if not timed_out:
                logs = self._request(
                    "GET",
                    f"/containers/{container_id}/logs",
                    params={"stdout": "1", "stderr": "1"},
                    ok={200},
                )
                stdout, stderr = demux_log_stream(logs.content)
        finally:
            self._remove_container(container_id)
        duration_ms = int((time.perf_counter() - started) * 1000)
        if timed_out:
            return RunOutcome(
                exit_code=TIMED_OUT_EXIT_CODE,
                stdout=b"",
                stderr=b"",
                duration_ms=duration_ms,
                timed_out=True,
            )
        return RunOutcome(
            exit_code=exit_code, stdout=stdout, stderr=stderr, duration_ms=duration_ms
        )

    def _remove_container(self, container_id: str) -> None:
        try:
            self._http.delete(f"/containers/{container_id}", params={"force": "1"})
        except httpx.HTTPError:
            pass

    def engine_info(self) -> EngineInfo:
        """Engine version and runtimes; an unreachable daemon is a result, not an error."""
        try:
            response = self._http.get("/info")
        except httpx.HTTPError:
            return EngineInfo.unreachable()
        if response.status_code != 200:
            return EngineInfo.unreachable()
        data = response.json()
        runtimes = frozenset((data.get("Runtimes") or {}).keys())
        return EngineInfo(
            engine_version=str(data.get("ServerVersion", "")),
            api_version=response.headers.get("Api-Version", self.endpoint.api_version),
            runtimes=runtimes,
            reachable=True,
        )


def connect(
    endpoint: EngineEndpoint | str | None = None, *, ping: bool = True
) -> EngineClient:
    """Resolve an endpoint, build a client, and (by default) ping it once."""
    client = EngineClient(resolve_endpoint(endpoint))
    if ping:
        client.ping()
    return client
