# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Decision functions hosted in a child process.

Parent and child exchange newline-delimited JSON records over the child's
stdin/stdout. The parent opens with a hello record, the child answers with
its protocol version; then every decision is one request and one response.
"""

import io
import queue
import shlex
import subprocess
import threading
from typing import Callable, Literal, Optional, Sequence, TextIO, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from mapinfer.exceptions import MapInferError, ProtocolError
from mapinfer.geograph import BoundingBox, load_graph, save_graph
from mapinfer.logging import get_logger
from mapinfer.oracle import decode_array, encode_array
from mapinfer.tracer import Decider, DecisionInput, DecisionOutput, SearchState

logger = get_logger("protocol")

PROTOCOL_VERSION = 1

M = TypeVar("M", bound=BaseModel)


class Hello(BaseModel):
    type: Literal["hello"] = "hello"
    version: int = PROTOCOL_VERSION
    a: int = Field(gt=0)
    d: int = Field(gt=0)
    resolution: float = Field(gt=0)


class HelloReply(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    wants_state: bool = False


class StatePayload(BaseModel):
    """Search state for children whose decisions depend on the partial graph."""

    graph: str
    stack: list[int]
    bbox: list[float]
    D: float


class DecisionRequest(BaseModel):
    version: int = PROTOCOL_VERSION
    step: int
    center: tuple[float, float]
    d: int
    resolution: float
    channels: str
    state: Optional[StatePayload] = None


class DecisionResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    o_walk: float
    o_stop: float
    angles: list[float]


def state_payload(state: SearchState) -> StatePayload:
    return StatePayload(
        graph=save_graph(state.graph),
        stack=list(state.stack),
        bbox=state.bbox.as_list(),
        D=state.D,
    )


def restore_state(payload: StatePayload, a: int) -> SearchState:
    """Rebuild a SearchState on the child side."""
    graph = load_graph(io.StringIO(payload.graph))
    state = SearchState(BoundingBox(*payload.bbox), payload.D, a, graph)
    for v in payload.stack:
        state.push(v)
    return state


class ExternalDecider:
    """Decision function answered by a child process.

    The child is started lazily on the first decision. Each decide() sends one
    request and blocks for one response, at most ``timeout`` seconds.
    """

    needs_window = True

    def __init__(
        self,
        command: Union[str, Sequence[str]],
        a: int = 64,
        d: int = 256,
        resolution: float = 0.6,
        timeout: float = 30.0,
    ) -> None:
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise ProtocolError("External decider command is empty")
        self.a = a
        self.d = d
        self.resolution = resolution
        self.timeout = timeout
        self.wants_state = False
        self._process: Optional[subprocess.Popen[str]] = None
        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        self._requests = 0

    def __enter__(self) -> "ExternalDecider":
        self.start()
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def start(self) -> None:
        if self._process is not None:
            return
        logger.debug(f"Starting external decider: {self.argv}")
        try:
            self._process = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise ProtocolError(f"Cannot start external decider {self.argv[0]}: {e}") from e
        threading.Thread(target=self._pump, daemon=True).start()
        self._send(Hello(a=self.a, d=self.d, resolution=self.resolution))
        reply = self._receive(HelloReply)
        if reply.version != PROTOCOL_VERSION:
            raise ProtocolError(
                f"External decider speaks protocol version {reply.version}, "
                f"expected {PROTOCOL_VERSION}"
            )
        self.wants_state = reply.wants_state

    def _pump(self) -> None:
        assert self._process is not None and self._process.stdout is not None
        for line in self._process.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _send(self, record: BaseModel) -> None:
        assert self._process is not None and self._process.stdin is not None
        try:
            self._process.stdin.write(record.model_dump_json() + "\n")
            self._process.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ProtocolError(f"External decider closed its input: {e}") from e

    def _receive(self, model: type[M]) -> M:
        assert self._process is not None
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty as e:
            self.close()
            raise ProtocolError(f"External decider timed out after {self.timeout} s") from e
        if line is None:
            code = self._process.wait()
            raise ProtocolError(f"External decider exited with code {code}")
        try:
            return model.model_validate_json(line)
        except ValidationError as e:
            raise ProtocolError(f"Malformed {model.__name__} from external decider: {e}") from e

    def decide(self, inp: DecisionInput, state: SearchState) -> DecisionOutput:
        self.start()
        self._requests += 1
        self._send(
            DecisionRequest(
                step=self._requests,
                center=inp.center,
                d=inp.d,
                resolution=inp.resolution,
                channels=encode_array(inp.window, "<f4"),
                state=state_payload(state) if self.wants_state else None,
            )
        )
        response = self._receive(DecisionResponse)
        if len(response.angles) != self.a:
            raise ProtocolError(
                f"External decider returned {len(response.angles)} angles, expected {self.a}"
            )
        try:
            return DecisionOutput(response.o_walk, response.o_stop, tuple(response.angles))
        except MapInferError as e:
            raise ProtocolError(f"Invalid decision from external decider: {e}") from e

    def close(self) -> None:
        process, self._process = self._process, None
        if process is None:
            return
        if process.stdin is not None:
            try:
                process.stdin.close()
            except OSError:
                pass
        try:
            process.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            process.kill()
            process.wait()


def serve(
    make_decider: Callable[[Hello], Decider],
    stdin: TextIO,
    stdout: TextIO,
    wants_state: bool = False,
) -> int:
    """Child side of the protocol; returns the number of decisions answered."""
    first = stdin.readline()
    if not first:
        return 0
    try:
        hello = Hello.model_validate_json(first)
    except ValidationError as e:
        raise ProtocolError(f"Malformed hello record: {e}") from e
    decider = make_decider(hello)
    stdout.write(HelloReply(version=PROTOCOL_VERSION, wants_state=wants_state).model_dump_json() + "\n")
    stdout.flush()

    answered = 0
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = DecisionRequest.model_validate_json(line)
        except ValidationError as e:
            raise ProtocolError(f"Malformed decision request: {e}") from e
        window = decode_array(request.channels, "<f4", (request.d, request.d, 4))
        inp = DecisionInput.from_window(request.center, request.resolution, window)
        if request.state is not None:
            state = restore_state(request.state, hello.a)
        else:
            state = SearchState(BoundingBox(-1.0, -1.0, 1.0, 1.0), a=hello.a)
        out = decider.decide(inp, state)
        response = DecisionResponse(o_walk=out.o_walk, o_stop=out.o_stop, angles=list(out.angles))
        stdout.write(response.model_dump_json() + "\n")
        stdout.flush()
        answered += 1
    return answered
