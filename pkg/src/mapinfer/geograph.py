# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Spatial graph model, graph files, spatial indexing and bounded searches.

Coordinates live in a local planar frame measured in meters. Every edge is a
straight segment whose length is the Euclidean distance between its
endpoints.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, TextIO, Union

import networkx as nx
import numpy as np
from numpy.typing import NDArray

from mapinfer.exceptions import GraphFormatError, GraphValidationError, UsageError

Point = tuple[float, float]
Edge = tuple[int, int]
VertexPath = list[int]
RandomSource = Union[int, np.random.Generator, None]


def edge_key(u: int, v: int) -> Edge:
    """Return the canonical (min, max) form of an undirected edge."""
    return (u, v) if u < v else (v, u)


def as_generator(rng: RandomSource) -> np.random.Generator:
    """Turn a seed (or an existing generator) into a numpy Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def project_to_segment(p: Point, a: Point, b: Point) -> tuple[float, float]:
    """Distance from p to segment ab and the clamped projection parameter t."""
    bax, bay = b[0] - a[0], b[1] - a[1]
    denom = bax * bax + bay * bay
    if denom == 0.0:
        return math.hypot(p[0] - a[0], p[1] - a[1]), 0.0
    t = ((p[0] - a[0]) * bax + (p[1] - a[1]) * bay) / denom
    t = min(1.0, max(0.0, t))
    qx, qy = a[0] + t * bax, a[1] + t * bay
    return math.hypot(p[0] - qx, p[1] - qy), t


def segment_distance_field(
    xs: NDArray[np.float64], ys: NDArray[np.float64], a: Point, b: Point
) -> NDArray[np.float64]:
    """Vectorized point-to-segment distance for arrays of query coordinates."""
    bax, bay = b[0] - a[0], b[1] - a[1]
    denom = bax * bax + bay * bay
    if denom == 0.0:
        return np.asarray(np.hypot(xs - a[0], ys - a[1]), dtype=np.float64)
    t = np.clip(((xs - a[0]) * bax + (ys - a[1]) * bay) / denom, 0.0, 1.0)
    return np.asarray(
        np.hypot(xs - (a[0] + t * bax), ys - (a[1] + t * bay)), dtype=np.float64
    )


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in meters."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self) -> None:
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise UsageError(
                f"Degenerate bounding box: ({self.min_x}, {self.min_y}, "
                f"{self.max_x}, {self.max_y})"
            )

    @classmethod
    def around(cls, points: Iterable[Point], margin: float) -> "BoundingBox":
        """Smallest box containing every point, grown by margin on each side."""
        pts = list(points)
        if not pts:
            raise UsageError("Cannot build a bounding box around no points")
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return cls(min(xs) - margin, min(ys) - margin, max(xs) + margin, max(ys) + margin)

    def contains(self, point: Point) -> bool:
        return (
            self.min_x <= point[0] <= self.max_x and self.min_y <= point[1] <= self.max_y
        )

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def area_hectares(self) -> float:
        return self.width * self.height / 10_000.0

    def as_list(self) -> list[float]:
        return [self.min_x, self.min_y, self.max_x, self.max_y]


class SpatialGraph:
    """Undirected graph whose vertices carry planar coordinates.

    Vertex ids are dense integers in creation order. Edges are stored in
    canonical (min, max) form; self-loops and duplicates are rejected. The
    topology lives in a networkx graph whose edges carry a ``length``
    attribute, so the searches below run on it directly.
    """

    def __init__(self) -> None:
        self._xy: list[Point] = []
        self._g = nx.Graph()

    @classmethod
    def from_data(
        cls, points: Iterable[Point], edges: Iterable[tuple[int, int]]
    ) -> "SpatialGraph":
        graph = cls()
        for x, y in points:
            graph.add_vertex(x, y)
        for u, v in edges:
            graph.add_edge(u, v)
        return graph

    # -- mutation -----------------------------------------------------------

    def add_vertex(self, x: float, y: float) -> int:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise GraphValidationError(f"Non-finite vertex coordinate ({x}, {y})")
        v = len(self._xy)
        self._xy.append((float(x), float(y)))
        self._g.add_node(v, pos=self._xy[v])
        return v

    def add_edge(self, u: int, v: int) -> None:
        if not (self.has_vertex(u) and self.has_vertex(v)):
            raise GraphValidationError(f"Edge ({u}, {v}) references an unknown vertex")
        if u == v:
            raise GraphValidationError(f"Self-loop on vertex {u}")
        if self._g.has_edge(u, v):
            raise GraphValidationError(f"Duplicate edge {edge_key(u, v)}")
        self._g.add_edge(u, v, length=self.edge_length(u, v))

    # -- queries ------------------------------------------------------------

    @property
    def vertex_count(self) -> int:
        return len(self._xy)

    @property
    def edge_count(self) -> int:
        return int(self._g.number_of_edges())

    def vertices(self) -> range:
        return range(len(self._xy))

    def has_vertex(self, v: int) -> bool:
        return 0 <= v < len(self._xy)

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self._g.has_edge(u, v))

    def position(self, v: int) -> Point:
        return self._xy[v]

    def neighbors(self, v: int) -> list[int]:
        """Neighbors of v in ascending id order."""
        return sorted(self._g.adj[v])

    def degree(self, v: int) -> int:
        return len(self._g.adj[v])

    def edges(self) -> list[Edge]:
        """All edges as (min, max) pairs in lexicographic order."""
        return sorted(edge_key(u, v) for u, v in self._g.edges)

    def edge_length(self, u: int, v: int) -> float:
        (ax, ay), (bx, by) = self._xy[u], self._xy[v]
        return math.hypot(bx - ax, by - ay)

    def total_length(self) -> float:
        return math.fsum(length for _, _, length in self._g.edges(data="length"))

    def positions(self) -> NDArray[np.float64]:
        if not self._xy:
            return np.zeros((0, 2), dtype=np.float64)
        return np.asarray(self._xy, dtype=np.float64)

    def connected_components(self) -> list[list[int]]:
        """Components as sorted id lists, ordered by their smallest id."""
        return sorted(sorted(members) for members in nx.connected_components(self._g))

    def view(self) -> nx.Graph:
        """Read-only networkx view of the live topology (``pos``, ``length``)."""
        return self._g.copy(as_view=True)

    def validate(self) -> None:
        """Check every structural invariant; raise GraphValidationError if broken."""
        for x, y in self._xy:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GraphValidationError("Non-finite vertex coordinate")
        if sorted(self._g.nodes) != list(self.vertices()):
            raise GraphValidationError("Topology disagrees with the vertex list")
        for u, v, length in self._g.edges(data="length"):
            if u == v:
                raise GraphValidationError(f"Self-loop on vertex {u}")
            if length is None or not math.isclose(length, self.edge_length(u, v)):
                raise GraphValidationError(f"Stale length on edge {edge_key(u, v)}")

    # -- derived graphs -----------------------------------------------------

    def copy(self) -> "SpatialGraph":
        clone = SpatialGraph()
        clone._xy = list(self._xy)
        clone._g = self._g.copy()
        return clone

    def translated(self, dx: float, dy: float) -> "SpatialGraph":
        return SpatialGraph.from_data(
            ((x + dx, y + dy) for x, y in self._xy), self.edges()
        )

    def relabeled(self, order: Sequence[int]) -> "SpatialGraph":
        """Graph where new vertex i is old vertex order[i]."""
        if sorted(order) != list(self.vertices()):
            raise UsageError("Relabeling must be a permutation of the vertex ids")
        new_id = {old: new for new, old in enumerate(order)}
        return SpatialGraph.from_data(
            (self._xy[old] for old in order),
            ((new_id[u], new_id[v]) for u, v in self.edges()),
        )

    def resampled(self, max_segment: float) -> "SpatialGraph":
        """Subdivide edges so none is longer than max_segment.

        Original vertices keep their ids; inserted vertices are appended.
        """
        if max_segment <= 0:
            raise UsageError("max_segment must be positive")
        out = SpatialGraph.from_data(self._xy, [])
        for u, v in self.edges():
            pieces = max(1, math.ceil(self.edge_length(u, v) / max_segment - 1e-9))
            (ax, ay), (bx, by) = self._xy[u], self._xy[v]
            prev = u
            for k in range(1, pieces):
                f = k / pieces
                mid = out.add_vertex(ax + f * (bx - ax), ay + f * (by - ay))
                out.add_edge(prev, mid)
                prev = mid
            out.add_edge(prev, v)
        return out

    def to_networkx(self) -> nx.Graph:
        """Independent copy with ``pos`` node and ``length`` edge attributes."""
        return self._g.copy()

    @classmethod
    def from_networkx(cls, g: nx.Graph) -> "SpatialGraph":
        """Build a compact graph from a networkx graph with ``pos`` node data."""
        order = sorted(g.nodes)
        new_id = {node: i for i, node in enumerate(order)}
        return cls.from_data(
            (tuple(g.nodes[node]["pos"]) for node in order),
            sorted(edge_key(new_id[u], new_id[v]) for u, v in g.edges if u != v),
        )


# -- graph files ------------------------------------------------------------


def load_graph(stream: TextIO) -> SpatialGraph:
    """Parse the line-oriented graph format.

    Raises:
        GraphFormatError: If a line cannot be parsed
        GraphValidationError: If the parsed graph breaks an invariant
    """
    header: Optional[tuple[int, int]] = None
    points: list[Point] = []
    dense: dict[int, int] = {}
    raw_edges: list[tuple[int, int, int]] = []

    for line_number, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if header is None:
            header = _parse_header(tokens, line_number)
            continue
        kind = tokens[0]
        try:
            if kind == "v" and len(tokens) == 4:
                file_id = int(tokens[1])
                x, y = float(tokens[2]), float(tokens[3])
            elif kind == "e" and len(tokens) == 3:
                raw_edges.append((line_number, int(tokens[1]), int(tokens[2])))
                continue
            else:
                raise GraphFormatError(line_number, f"unrecognized record {line!r}")
        except ValueError as e:
            raise GraphFormatError(line_number, f"bad number in {line!r}") from e
        if file_id in dense:
            raise GraphValidationError(f"line {line_number}: duplicate vertex id {file_id}")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise GraphValidationError(f"line {line_number}: non-finite coordinate")
        dense[file_id] = len(points)
        points.append((x, y))

    if header is None:
        raise GraphFormatError(1, "missing 'graph v=<N> e=<M>' header")

    graph = SpatialGraph.from_data(points, [])
    for line_number, a, b in raw_edges:
        if a not in dense or b not in dense:
            raise GraphValidationError(
                f"line {line_number}: edge ({a}, {b}) references an unknown vertex"
            )
        try:
            graph.add_edge(dense[a], dense[b])
        except GraphValidationError as e:
            raise GraphValidationError(f"line {line_number}: {e}") from e

    if header != (graph.vertex_count, graph.edge_count):
        raise GraphValidationError(
            f"header declares v={header[0]} e={header[1]} but file holds "
            f"v={graph.vertex_count} e={graph.edge_count}"
        )
    return graph


def _parse_header(tokens: list[str], line_number: int) -> tuple[int, int]:
    if len(tokens) != 3 or tokens[0] != "graph":
        raise GraphFormatError(line_number, "expected 'graph v=<N> e=<M>' header")
    try:
        fields = dict(token.split("=", 1) for token in tokens[1:])
        return int(fields["v"]), int(fields["e"])
    except (KeyError, ValueError) as e:
        raise GraphFormatError(line_number, "malformed header counts") from e


def save_graph(graph: SpatialGraph) -> str:
    """Serialize a graph in canonical form (vertices by id, sorted edges)."""
    lines = [f"graph v={graph.vertex_count} e={graph.edge_count}"]
    for v in graph.vertices():
        x, y = graph.position(v)
        lines.append(f"v {v} {x!r} {y!r}")
    lines.extend(f"e {u} {v}" for u, v in graph.edges())
    return "\n".join(lines) + "\n"


# -- spatial index ----------------------------------------------------------


class GridIndex:
    """Uniform-grid bucket index answering radius queries over points."""

    def __init__(self, cell_size: float) -> None:
        if cell_size <= 0:
            raise UsageError("cell_size must be positive")
        self.cell_size = float(cell_size)
        self._cells: defaultdict[tuple[int, int], list[int]] = defaultdict(list)
        self._points: dict[int, Point] = {}

    def __len__(self) -> int:
        return len(self._points)

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        return math.floor(x / self.cell_size), math.floor(y / self.cell_size)

    def insert(self, vid: int, point: Point) -> None:
        self._points[vid] = point
        self._cells[self._cell(*point)].append(vid)

    def vertices_within(self, point: Point, radius: float) -> list[int]:
        """Ids at Euclidean distance <= radius from point, ascending."""
        px, py = point
        lo_x, lo_y = self._cell(px - radius, py - radius)
        hi_x, hi_y = self._cell(px + radius, py + radius)
        found = []
        for cx in range(lo_x, hi_x + 1):
            for cy in range(lo_y, hi_y + 1):
                for vid in self._cells.get((cx, cy), ()):
                    qx, qy = self._points[vid]
                    if math.hypot(qx - px, qy - py) <= radius:
                        found.append(vid)
        return sorted(found)

    def nearest(self, point: Point, radius: float) -> Optional[int]:
        """Closest id within radius; ties go to the lowest id."""
        best: Optional[tuple[float, int]] = None
        for vid in self.vertices_within(point, radius):
            qx, qy = self._points[vid]
            key = (math.hypot(qx - point[0], qy - point[1]), vid)
            if best is None or key < best:
                best = key
        return None if best is None else best[1]


def grid_index(graph: SpatialGraph, cell_size: float) -> GridIndex:
    """Index every vertex of graph in a uniform grid of cell_size meters."""
    index = GridIndex(cell_size)
    for v in graph.vertices():
        index.insert(v, graph.position(v))
    return index


# -- searches ---------------------------------------------------------------


def _check_vertex(graph: SpatialGraph, v: int) -> None:
    if not graph.has_vertex(v):
        raise UsageError(f"Vertex {v} does not exist")


def bounded_search(
    graph: SpatialGraph,
    source: int,
    limit: float,
    allowed: Optional[Callable[[int, int], bool]] = None,
) -> tuple[dict[int, float], dict[int, VertexPath]]:
    """Dijkstra from source cut off at limit: distances and shortest paths.

    When given, allowed(u, v) decides which edges may be traversed.
    """
    _check_vertex(graph, source)

    def gated(u: int, v: int, data: dict[str, float]) -> Optional[float]:
        return data["length"] if allowed is None or allowed(u, v) else None

    dist: dict[int, float]
    paths: dict[int, VertexPath]
    dist, paths = nx.single_source_dijkstra(
        graph._g, source, cutoff=limit, weight="length" if allowed is None else gated
    )
    return dist, paths


def bounded_distances(
    graph: SpatialGraph, source: int, limit: float
) -> dict[int, float]:
    """Shortest edge distances from source to every vertex within limit."""
    _check_vertex(graph, source)
    dist: dict[int, float] = nx.single_source_dijkstra_path_length(
        graph._g, source, cutoff=limit, weight="length"
    )
    return dist


def bounded_graph_distance(
    graph: SpatialGraph, source: int, target: int, limit: float
) -> Optional[float]:
    """Exact shortest distance if it is <= limit, else None ("exceeds")."""
    _check_vertex(graph, source)
    _check_vertex(graph, target)
    try:
        found: float = nx.single_source_dijkstra(
            graph._g, source, target=target, cutoff=limit, weight="length"
        )[0]
    except nx.NetworkXNoPath:
        return None
    return float(found)


def random_walk(
    graph: SpatialGraph, start: int, w: int, rng: RandomSource = None
) -> VertexPath:
    """Self-avoiding random walk of at most w vertices starting at start."""
    _check_vertex(graph, start)
    if w < 1:
        raise UsageError("Walk length w must be at least 1")
    gen = as_generator(rng)
    path = [start]
    seen = {start}
    while len(path) < w:
        options = [n for n in graph.neighbors(path[-1]) if n not in seen]
        if not options:
            break
        nxt = options[int(gen.integers(len(options)))]
        path.append(nxt)
        seen.add(nxt)
    return path


@dataclass(frozen=True)
class EdgeProjection:
    """Closest point on an edge; t runs from edge[0] (0) to edge[1] (1)."""

    edge: Edge
    t: float
    point: Point
    distance: float


def nearest_edge_point(
    graph: SpatialGraph, point: Point, radius: float
) -> Optional[EdgeProjection]:
    """Project point onto the nearest edge within radius, if any."""
    edges = graph.edges()
    if not edges:
        return None
    ids = np.asarray(edges, dtype=np.int64)
    pos = graph.positions()
    a, b = pos[ids[:, 0]], pos[ids[:, 1]]
    ab = b - a
    denom = (ab * ab).sum(axis=1)
    p = np.asarray(point, dtype=np.float64)
    t = np.clip(((p - a) * ab).sum(axis=1) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    q = a + t[:, None] * ab
    dist = np.hypot(q[:, 0] - p[0], q[:, 1] - p[1])
    i = int(np.argmin(dist))
    if dist[i] > radius:
        return None
    return EdgeProjection(
        edge=edges[i],
        t=float(t[i]),
        point=(float(q[i, 0]), float(q[i, 1])),
        distance=float(dist[i]),
    )


def junctions(graph: SpatialGraph) -> list[int]:
    """Vertices with three or more incident edges."""
    return [v for v in graph.vertices() if graph.degree(v) >= 3]
