# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Iterative graph construction.

A search grows a partial graph one fixed-length edge at a time from a start
vertex. At every step a decision function looks at a window around the vertex
on top of the stack and either walks in one of ``a`` directions or stops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Literal, Optional, Protocol, Sequence

import numpy as np
from numpy.typing import NDArray

from mapinfer.exceptions import DataError, UsageError
from mapinfer.geograph import (
    BoundingBox,
    Edge,
    GridIndex,
    Point,
    SpatialGraph,
    bounded_distances,
    edge_key,
    segment_distance_field,
)
from mapinfer.logging import get_logger
from mapinfer.raster import RasterGrid

logger = get_logger("tracer")

TWO_PI = 2.0 * math.pi
SUM_TOLERANCE = 1e-6


def angle_of_bucket(i: int, a: int) -> float:
    """Direction in radians of angle bucket i out of a."""
    if not 0 <= i < a:
        raise UsageError(f"Angle bucket {i} out of range for a={a}")
    return TWO_PI * i / a


def bucket_of_angle(theta: float, a: int) -> int:
    """Closest bucket to theta, wrapping around 2*pi."""
    frac = (theta % TWO_PI) / (TWO_PI / a)
    return int(math.floor(frac + 0.5)) % a


@dataclass(frozen=True)
class Region:
    """Start point and bounding box of one search."""

    v0: Point
    bbox: BoundingBox


def default_max_steps(bbox: BoundingBox) -> int:
    return max(1, math.ceil(500 * bbox.area_hectares))


# -- decision contract --------------------------------------------------------


@dataclass(frozen=True)
class DecisionOutput:
    """Action probabilities plus one score per angle bucket."""

    o_walk: float
    o_stop: float
    angles: tuple[float, ...]

    def __post_init__(self) -> None:
        values = (self.o_walk, self.o_stop, *self.angles)
        if not all(math.isfinite(v) for v in values):
            raise UsageError("Decision output contains non-finite values")
        if abs(self.o_walk + self.o_stop - 1.0) > SUM_TOLERANCE:
            raise UsageError(
                f"o_walk + o_stop must be 1, got {self.o_walk} + {self.o_stop}"
            )
        if not all(0.0 <= v <= 1.0 for v in values):
            raise UsageError("Decision output values must lie in [0, 1]")

    @classmethod
    def stop(cls, a: int) -> "DecisionOutput":
        return cls(0.0, 1.0, (0.0,) * a)

    @classmethod
    def walk(cls, a: int, buckets: Iterable[int]) -> "DecisionOutput":
        angles = [0.0] * a
        for b in buckets:
            angles[b] = 1.0
        return cls(1.0, 0.0, tuple(angles))

    @property
    def a(self) -> int:
        return len(self.angles)


@dataclass(frozen=True)
class Action:
    kind: Literal["walk", "stop"]
    bucket: Optional[int] = None


STOP = Action("stop")


def choose_action(out: DecisionOutput, T: float) -> Action:
    """Walk toward the best bucket if o_walk >= T, otherwise stop."""
    if out.o_walk >= T and out.angles:
        return Action("walk", int(np.argmax(np.asarray(out.angles))))
    return STOP


def render_graph_channel(
    graph: SpatialGraph, center: Point, d: int, resolution: float
) -> RasterGrid:
    """Draw the graph's edges into a d x d window as 1-px anti-aliased lines.

    Each edge contributes a tent profile ``max(0, 1 - distance_px)``;
    overlapping edges combine by maximum.
    """
    if d <= 0 or resolution <= 0:
        raise UsageError("Window size and resolution must be positive")
    half = d // 2
    origin = (center[0] - half * resolution, center[1] - half * resolution)
    out = np.zeros((d, d), dtype=np.float64)
    grid = RasterGrid(out, resolution, origin)
    edges = graph.edges()
    if not edges:
        return grid

    ids = np.asarray(edges, dtype=np.int64)
    pos = graph.positions()
    # fractional pixel coordinates (col, row) of both endpoints
    pc = (pos - np.asarray(origin)) / resolution
    a_pc, b_pc = pc[ids[:, 0]], pc[ids[:, 1]]
    lo = np.floor(np.minimum(a_pc, b_pc)) - 1
    hi = np.ceil(np.maximum(a_pc, b_pc)) + 1
    visible = (hi[:, 0] >= 0) & (hi[:, 1] >= 0) & (lo[:, 0] <= d - 1) & (lo[:, 1] <= d - 1)

    for k in np.flatnonzero(visible):
        c0, r0 = (max(0, int(v)) for v in lo[k])
        c1, r1 = (min(d - 1, int(v)) for v in hi[k])
        cols = np.arange(c0, c1 + 1, dtype=np.float64)
        rows = np.arange(r0, r1 + 1, dtype=np.float64)
        dist = segment_distance_field(
            cols[None, :],
            rows[:, None],
            (float(a_pc[k, 0]), float(a_pc[k, 1])),
            (float(b_pc[k, 0]), float(b_pc[k, 1])),
        )
        ink = np.clip(1.0 - dist, 0.0, 1.0)
        np.maximum(out[r0 : r1 + 1, c0 : c1 + 1], ink, out=out[r0 : r1 + 1, c0 : c1 + 1])
    return grid


class DecisionInput:
    """The 4-channel window around the vertex on top of the stack.

    The window is rendered on first access, from the graph as it is at that
    moment; deciders that never look at pixels never pay for it.
    """

    def __init__(
        self,
        center: Point,
        d: int,
        resolution: float,
        imagery: Optional[RasterGrid] = None,
        graph: Optional[SpatialGraph] = None,
    ) -> None:
        self.center = center
        self.d = d
        self.resolution = resolution
        self._imagery = imagery
        self._graph = graph

    @classmethod
    def from_window(
        cls, center: Point, resolution: float, window: NDArray[np.float64]
    ) -> "DecisionInput":
        if window.ndim != 3 or window.shape[0] != window.shape[1] or window.shape[2] != 4:
            raise DataError(f"Decision window must be d x d x 4, got {window.shape}")
        inp = cls(center, int(window.shape[0]), resolution)
        inp.__dict__["window"] = np.asarray(window, dtype=np.float64)
        return inp

    @cached_property
    def window(self) -> NDArray[np.float64]:
        out = np.zeros((self.d, self.d, 4), dtype=np.float64)
        if self._imagery is not None:
            crop = self._imagery.crop(self.center, self.d, self.resolution)
            if crop.ndim == 2:
                crop = crop[:, :, None]
            out[:, :, : min(3, crop.shape[2])] = crop[:, :, :3]
        if self._graph is not None:
            out[:, :, 3] = render_graph_channel(
                self._graph, self.center, self.d, self.resolution
            ).values
        return out


# -- search state -------------------------------------------------------------


class SearchState:
    """Partial graph, vertex stack and bounds owned by one search."""

    def __init__(
        self,
        bbox: BoundingBox,
        D: float = 12.0,
        a: int = 64,
        graph: Optional[SpatialGraph] = None,
    ) -> None:
        if D <= 0 or a < 1:
            raise UsageError("Step distance D must be positive and a at least 1")
        self.graph = graph if graph is not None else SpatialGraph()
        self.bbox = bbox
        self.D = D
        self.a = a
        self.stack: list[int] = []
        self.steps_taken = 0
        self.index = GridIndex(3 * D)
        self._pushed: set[int] = set()
        for v in self.graph.vertices():
            self.index.insert(v, self.graph.position(v))

    @classmethod
    def start(
        cls, v0: Point, bbox: BoundingBox, D: float = 12.0, a: int = 64
    ) -> "SearchState":
        state = cls(bbox, D, a)
        state.seed(v0)
        return state

    @property
    def done(self) -> bool:
        return not self.stack

    @property
    def top(self) -> int:
        if not self.stack:
            raise UsageError("The vertex stack is empty")
        return self.stack[-1]

    def seed(self, v0: Point) -> int:
        """Add a start vertex and push it."""
        if not self.bbox.contains(v0):
            raise UsageError(f"Start point {v0} lies outside the bounding box")
        v = self.add_vertex(v0)
        self.push(v)
        return v

    def add_vertex(self, point: Point) -> int:
        v = self.graph.add_vertex(*point)
        self.index.insert(v, self.graph.position(v))
        return v

    def push(self, v: int) -> None:
        if v in self._pushed:
            raise UsageError(f"Vertex {v} was already pushed once")
        self._pushed.add(v)
        self.stack.append(v)


@dataclass(frozen=True)
class StepResult:
    """What one step did; vertex is the added, merged-into or popped vertex."""

    kind: Literal["added", "merged", "popped"]
    vertex: int
    edge: Optional[Edge] = None


def merge_check(state: SearchState, u: Point) -> Optional[int]:
    """Nearest vertex within 3D of u that is at least 6D away along the graph."""
    top = state.top
    candidates = [v for v in state.index.vertices_within(u, 3 * state.D) if v != top]
    if not candidates:
        return None
    near = bounded_distances(state.graph, top, 6 * state.D)
    best: Optional[tuple[float, int]] = None
    for v in candidates:
        if v in near and near[v] < 6 * state.D:
            continue
        x, y = state.graph.position(v)
        key = (math.hypot(x - u[0], y - u[1]), v)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def step(state: SearchState, action: Action) -> StepResult:
    """Apply one walk or stop action to the search."""
    if state.done:
        raise UsageError("Cannot step a search whose stack is empty")
    state.steps_taken += 1
    top = state.top
    if action.kind == "stop" or action.bucket is None:
        state.stack.pop()
        return StepResult("popped", top)

    theta = angle_of_bucket(action.bucket, state.a)
    x, y = state.graph.position(top)
    u = (x + state.D * math.cos(theta), y + state.D * math.sin(theta))
    if not state.bbox.contains(u):
        state.stack.pop()
        return StepResult("popped", top)

    target = merge_check(state, u)
    if target is not None:
        state.graph.add_edge(top, target)
        return StepResult("merged", target, edge_key(top, target))

    v = state.add_vertex(u)
    state.graph.add_edge(top, v)
    state.push(v)
    return StepResult("added", v, edge_key(top, v))


# -- deciders -----------------------------------------------------------------


class Decider(Protocol):
    """A decision function; must not mutate the search state."""

    needs_window: bool

    def decide(self, inp: DecisionInput, state: SearchState) -> DecisionOutput: ...


class StopDecider:
    """Always stops."""

    needs_window = False

    def __init__(self, a: int = 64) -> None:
        self.a = a

    def decide(self, inp: DecisionInput, state: SearchState) -> DecisionOutput:
        return DecisionOutput.stop(self.a)


# -- step trace ---------------------------------------------------------------

TraceAction = Literal["start", "add", "merge", "pop"]
_RESULT_ACTION: dict[str, TraceAction] = {"added": "add", "merged": "merge", "popped": "pop"}


@dataclass(frozen=True)
class TraceRecord:
    step: int
    action: TraceAction
    bucket: Optional[int]
    x: float
    y: float
    depth: int

    def format(self) -> str:
        bucket = "-" if self.bucket is None else str(self.bucket)
        return f"{self.step} {self.action} {bucket} {self.x!r} {self.y!r} {self.depth}"


def format_trace(records: Iterable[TraceRecord]) -> str:
    return "".join(record.format() + "\n" for record in records)


def read_trace(text: str) -> list[TraceRecord]:
    records = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6 or parts[1] not in ("start", "add", "merge", "pop"):
            raise DataError(f"Trace line {line_number}: malformed record {line!r}")
        try:
            records.append(
                TraceRecord(
                    step=int(parts[0]),
                    action=parts[1],  # type: ignore[arg-type]
                    bucket=None if parts[2] == "-" else int(parts[2]),
                    x=float(parts[3]),
                    y=float(parts[4]),
                    depth=int(parts[5]),
                )
            )
        except ValueError as e:
            raise DataError(f"Trace line {line_number}: {e}") from e
    return records


def iter_replay(records: Sequence[TraceRecord]) -> Iterator[tuple[TraceRecord, SpatialGraph]]:
    """Rebuild the graph record by record, yielding it after each one.

    The same graph object is yielded every time and keeps growing.
    """
    graph = SpatialGraph()
    by_position: dict[Point, int] = {}
    stack: list[int] = []
    for record in records:
        point = (record.x, record.y)
        if record.action in ("start", "add"):
            v = graph.add_vertex(*point)
            by_position[point] = v
            if record.action == "add":
                graph.add_edge(stack[-1], v)
            stack.append(v)
        elif record.action == "merge":
            if point not in by_position:
                raise DataError(f"Trace step {record.step}: merge into unknown vertex")
            graph.add_edge(stack[-1], by_position[point])
        else:
            stack.pop()
        if len(stack) != record.depth:
            raise DataError(f"Trace step {record.step}: stack depth mismatch")
        yield record, graph


def replay_trace(records: Sequence[TraceRecord]) -> SpatialGraph:
    graph = SpatialGraph()
    for _, graph in iter_replay(records):
        pass
    return graph


# -- driving a search ---------------------------------------------------------


@dataclass
class SearchResult:
    graph: SpatialGraph
    truncated: bool
    steps: int
    trace: list[TraceRecord] = field(default_factory=list)


def drive(
    state: SearchState,
    decider: Decider,
    T: float,
    d: int,
    resolution: float,
    max_steps: int,
    imagery: Optional[RasterGrid] = None,
    trace: Optional[list[TraceRecord]] = None,
) -> bool:
    """Run decide/choose/step until the stack drains; True if max_steps hit."""
    while state.stack:
        if state.steps_taken >= max_steps:
            return True
        center = state.graph.position(state.top)
        inp = DecisionInput(center, d, resolution, imagery, state.graph)
        action = choose_action(decider.decide(inp, state), T)
        result = step(state, action)
        x, y = state.graph.position(result.vertex)
        logger.debug(f"step {state.steps_taken}: {result.kind} {result.vertex} at ({x:.1f}, {y:.1f})")
        if trace is not None:
            trace.append(
                TraceRecord(
                    state.steps_taken,
                    _RESULT_ACTION[result.kind],
                    action.bucket if action.kind == "walk" else None,
                    x,
                    y,
                    len(state.stack),
                )
            )
    return False


def run_search(
    v0: Point,
    bbox: BoundingBox,
    decider: Decider,
    T: float = 0.4,
    D: float = 12.0,
    a: int = 64,
    d: int = 256,
    resolution: float = 0.6,
    max_steps: Optional[int] = None,
    imagery: Optional[RasterGrid] = None,
) -> SearchResult:
    """Trace a road network outward from v0 until the stack drains."""
    return run_multi_seed([v0], bbox, decider, T, D, a, d, resolution, max_steps, imagery)


def run_multi_seed(
    seeds: Sequence[Point],
    bbox: BoundingBox,
    decider: Decider,
    T: float = 0.4,
    D: float = 12.0,
    a: int = 64,
    d: int = 256,
    resolution: float = 0.6,
    max_steps: Optional[int] = None,
    imagery: Optional[RasterGrid] = None,
) -> SearchResult:
    """Run one search per seed, in order, all growing one shared graph.

    A seed within 3D of a vertex already in the graph is skipped.
    """
    if max_steps is None:
        max_steps = default_max_steps(bbox)
    if max_steps <= 0:
        raise UsageError("max_steps must be positive")
    state = SearchState(bbox, D, a)
    trace: list[TraceRecord] = []
    truncated = False
    for seed in seeds:
        if not bbox.contains(seed):
            logger.warning(f"Skipping seed {seed} outside the bounding box")
            continue
        if state.index.vertices_within(seed, 3 * D):
            logger.debug(f"Skipping seed {seed}: already covered")
            continue
        v = state.seed(seed)
        trace.append(TraceRecord(state.steps_taken, "start", None, *state.graph.position(v), 1))
        truncated = drive(state, decider, T, d, resolution, max_steps, imagery, trace)
        if truncated:
            logger.warning(f"Search stopped after max_steps={max_steps}")
            break
    return SearchResult(state.graph, truncated, state.steps_taken, trace)
