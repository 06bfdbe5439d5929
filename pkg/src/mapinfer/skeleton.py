# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Segmentation post-processing.

Turns a road probability raster into a graph: threshold, thin to one-pixel
centerlines, connect adjacent skeleton pixels, simplify chains with
Douglas-Peucker and clean the result with four refinement heuristics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import networkx as nx
import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import maximum_filter
from skimage.morphology import thin as skimage_thin

from mapinfer.exceptions import UsageError
from mapinfer.geograph import (
    GridIndex,
    Point,
    SpatialGraph,
    edge_key,
    project_to_segment,
)
from mapinfer.logging import get_logger
from mapinfer.raster import RasterGrid


logger = get_logger("skeleton")


def _single_channel(grid: RasterGrid) -> NDArray[np.float64]:
    if grid.values.ndim != 2:
        raise UsageError("Expected a single-channel raster")
    return grid.values


def threshold(mask: RasterGrid, t: float) -> RasterGrid:
    """Binary grid with 1 where the probability is at least t."""
    values = _single_channel(mask)
    return RasterGrid((values >= t).astype(np.float64), mask.resolution, mask.origin)


def thin(binary: RasterGrid) -> RasterGrid:
    """Morphological thinning to one-pixel-wide, 8-connected centerlines."""
    values = _single_channel(binary) > 0.5
    return RasterGrid(skimage_thin(values).astype(np.float64), binary.resolution, binary.origin)


def extract_graph(skeleton: RasterGrid) -> SpatialGraph:
    """One vertex per set pixel, one edge per 8-adjacent pair.

    A diagonal pair is not joined when either pixel at the corner between
    them is set; the two orthogonal edges through that corner connect them.
    Vertex ids follow row-major pixel order.
    """
    mask = _single_channel(skeleton) > 0.5
    rows, cols = np.nonzero(mask)
    ids = np.full(mask.shape, -1, dtype=np.int64)
    ids[rows, cols] = np.arange(len(rows))
    graph = SpatialGraph.from_data((skeleton.pixel_center(int(r), int(c)) for r, c in zip(rows, cols)), [])

    padded = np.pad(mask, 1)
    h, w = mask.shape

    def at(dr: int, dc: int) -> NDArray[np.bool_]:
        return padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]

    pairs = []
    for dr, dc in ((0, 1), (1, 0)):
        r, c = np.nonzero(mask & at(dr, dc))
        pairs.append(np.stack([ids[r, c], ids[r + dr, c + dc]], axis=1))
    for dc in (1, -1):
        blocked = at(0, dc) | at(1, 0)
        r, c = np.nonzero(mask & at(1, dc) & ~blocked)
        pairs.append(np.stack([ids[r, c], ids[r + 1, c + dc]], axis=1))
    for u, v in sorted(edge_key(int(a), int(b)) for a, b in np.concatenate(pairs)):
        graph.add_edge(u, v)
    return graph


# -- Douglas-Peucker ----------------------------------------------------------


def douglas_peucker(points: list[Point], epsilon: float) -> list[int]:
    """Indices of the points kept by Douglas-Peucker simplification.

    Deviation is measured to the simplified segment, so no dropped point lies
    farther than epsilon from the result.
    """
    if len(points) <= 2:
        return list(range(len(points)))
    keep = {0, len(points) - 1}
    pending = [(0, len(points) - 1)]
    while pending:
        lo, hi = pending.pop()
        best, index = -1.0, -1
        for i in range(lo + 1, hi):
            dist, _ = project_to_segment(points[i], points[lo], points[hi])
            if dist > best:
                best, index = dist, i
        if index >= 0 and best > epsilon:
            keep.add(index)
            pending.extend([(lo, index), (index, hi)])
    return sorted(keep)


def _chains(graph: SpatialGraph) -> list[list[int]]:
    """Maximal paths whose interior vertices all have degree 2."""
    chains = []
    used: set[tuple[int, int]] = set()
    anchors = {v for v in graph.vertices() if graph.degree(v) != 2}
    for component in graph.connected_components():
        if all(graph.degree(v) == 2 for v in component):
            anchors.add(component[0])
    for a in sorted(anchors):
        for n in graph.neighbors(a):
            if edge_key(a, n) in used:
                continue
            chain = [a, n]
            used.add(edge_key(a, n))
            while chain[-1] not in anchors:
                nxt = next(x for x in graph.neighbors(chain[-1]) if edge_key(chain[-1], x) not in used)
                used.add(edge_key(chain[-1], nxt))
                chain.append(nxt)
            chains.append(chain)
    return chains


def simplify(graph: SpatialGraph, epsilon: float) -> SpatialGraph:
    """Douglas-Peucker on every chain between junctions and endpoints."""
    if epsilon < 0:
        raise UsageError("epsilon must be non-negative")
    kept_edges: set[tuple[int, int]] = set()
    keep_vertices = {v for v in graph.vertices() if graph.degree(v) != 2}

    for chain in _chains(graph):
        points = [graph.position(v) for v in chain]
        if chain[0] == chain[-1]:
            # closed loop: split at the vertex farthest from the anchor
            far = max(
                range(1, len(chain) - 1),
                key=lambda i: math.dist(points[i], points[0]),
            )
            pieces = [chain[: far + 1], chain[far:]]
        else:
            pieces = [chain]
        for piece in pieces:
            idx = douglas_peucker([graph.position(v) for v in piece], epsilon)
            kept = [piece[i] for i in idx]
            if len(kept) == 2 and (edge_key(*kept) in kept_edges) and len(piece) > 2:
                a, b = graph.position(piece[0]), graph.position(piece[-1])
                mid = max(range(1, len(piece) - 1), key=lambda i: project_to_segment(graph.position(piece[i]), a, b)[0])
                kept = [piece[0], piece[mid], piece[-1]]
            keep_vertices.update(kept)
            kept_edges.update(edge_key(u, v) for u, v in zip(kept, kept[1:]))

    order = sorted(keep_vertices)
    new_id = {old: new for new, old in enumerate(order)}
    return SpatialGraph.from_data(
        (graph.position(v) for v in order),
        sorted(edge_key(new_id[u], new_id[v]) for u, v in kept_edges),
    )


# -- refinement ---------------------------------------------------------------


@dataclass(frozen=True)
class RefineParams:
    """Refinement thresholds in meters."""

    min_segment: float = 20.0
    min_component: float = 80.0
    extend_dist: float = 25.0
    junction_merge: float = 15.0


def _length(g: nx.Graph, u: int, v: int) -> float:
    return math.dist(g.nodes[u]["pos"], g.nodes[v]["pos"])


def prune_spurs(g: nx.Graph, min_segment: float) -> None:
    """Delete dangling chains shorter than min_segment that end at a junction."""
    doomed: set[int] = set()
    for end in sorted(n for n in g.nodes if g.degree(n) == 1):
        chain, length = [end], 0.0
        prev, cur = None, end
        while True:
            nxt = [n for n in g.neighbors(cur) if n != prev]
            if not nxt:
                break
            length += _length(g, cur, nxt[0])
            prev, cur = cur, nxt[0]
            if g.degree(cur) != 2:
                break
            chain.append(cur)
        if g.degree(cur) >= 3 and length < min_segment:
            doomed.update(chain)
    g.remove_nodes_from(doomed)


def remove_small_components(g: nx.Graph, min_component: float) -> None:
    for component in list(nx.connected_components(g)):
        total = sum(_length(g, u, v) for u, v in g.subgraph(component).edges)
        if total < min_component:
            g.remove_nodes_from(component)


def _terminal_bearing(g: nx.Graph, end: int, reach: float) -> Optional[tuple[float, float]]:
    """Unit direction pointing out of a dead end, from up to reach meters back."""
    prev, cur, travelled = None, end, 0.0
    while travelled < reach:
        nxt = [n for n in g.neighbors(cur) if n != prev]
        if not nxt:
            break
        travelled += _length(g, cur, nxt[0])
        prev, cur = cur, nxt[0]
        if g.degree(cur) != 2:
            break
    ex, ey = g.nodes[end]["pos"]
    bx, by = g.nodes[cur]["pos"]
    norm = math.hypot(ex - bx, ey - by)
    if norm == 0.0:
        return None
    return (ex - bx) / norm, (ey - by) / norm


def _ray_segment_hit(
    origin: Point, direction: tuple[float, float], a: Point, b: Point
) -> Optional[tuple[float, float]]:
    """(distance along ray, parameter on ab) where the ray crosses segment ab."""
    dx, dy = direction
    ex, ey = b[0] - a[0], b[1] - a[1]
    denom = dx * ey - dy * ex
    if abs(denom) < 1e-12:
        return None
    wx, wy = a[0] - origin[0], a[1] - origin[1]
    s = (wx * ey - wy * ex) / denom
    t = (wx * dy - wy * dx) / denom
    if s <= 0 or not 0.0 <= t <= 1.0:
        return None
    return s, t


def extend_dead_ends(g: nx.Graph, extend_dist: float, junction_merge: float) -> None:
    """Extend each dead end along its bearing to the first vertex or edge it meets.

    Vertices count as hit when they lie within junction_merge of the ray.
    Targets already within 2 * extend_dist along the graph are ignored. Edges
    carry a ``length`` attribute, kept up to date for the ones added here.
    """
    for end in sorted(n for n in g.nodes if g.degree(n) == 1):
        if end not in g or g.degree(end) != 1:
            continue
        bearing = _terminal_bearing(g, end, extend_dist)
        if bearing is None:
            continue
        origin = g.nodes[end]["pos"]
        close: dict[int, float] = nx.single_source_dijkstra_path_length(
            g, end, cutoff=2 * extend_dist, weight="length"
        )

        best: Optional[tuple[float, str, tuple[int, ...], float]] = None
        for n in sorted(g.nodes):
            if n in close:
                continue
            px, py = g.nodes[n]["pos"]
            wx, wy = px - origin[0], py - origin[1]
            along = wx * bearing[0] + wy * bearing[1]
            lateral = abs(wx * bearing[1] - wy * bearing[0])
            if 0 < along <= extend_dist and lateral <= junction_merge:
                if best is None or along < best[0]:
                    best = (along, "vertex", (n,), 0.0)
        for u, v in sorted(edge_key(a, b) for a, b in g.edges):
            if u in close or v in close:
                continue
            hit = _ray_segment_hit(origin, bearing, g.nodes[u]["pos"], g.nodes[v]["pos"])
            if hit is None or hit[0] > extend_dist:
                continue
            if best is None or hit[0] < best[0]:
                best = (hit[0], "edge", (u, v), hit[1])
        if best is None:
            continue

        _, kind, target, t = best
        if kind == "vertex":
            g.add_edge(end, target[0], length=_length(g, end, target[0]))
        else:
            u, v = target
            (ax, ay), (bx, by) = g.nodes[u]["pos"], g.nodes[v]["pos"]
            split = max(g.nodes) + 1
            g.add_node(split, pos=(ax + t * (bx - ax), ay + t * (by - ay)))
            g.remove_edge(u, v)
            for a, b in ((u, split), (split, v), (end, split)):
                g.add_edge(a, b, length=_length(g, a, b))
        logger.debug(f"Extended dead end {end} to {kind} {target}")


def merge_junctions(g: nx.Graph, junction_merge: float) -> None:
    """Contract clusters of junctions closer than junction_merge to their centroid."""
    junction_nodes = sorted(n for n in g.nodes if g.degree(n) >= 3)
    if len(junction_nodes) < 2:
        return
    index = GridIndex(max(junction_merge, 1e-6))
    for n in junction_nodes:
        index.insert(n, g.nodes[n]["pos"])
    clusters = nx.Graph()
    clusters.add_nodes_from(junction_nodes)
    for n in junction_nodes:
        for m in index.vertices_within(g.nodes[n]["pos"], junction_merge):
            if m != n and math.dist(g.nodes[n]["pos"], g.nodes[m]["pos"]) < junction_merge:
                clusters.add_edge(n, m)
    for members in nx.connected_components(clusters):
        if len(members) < 2:
            continue
        members = sorted(members)
        xs = [g.nodes[m]["pos"][0] for m in members]
        ys = [g.nodes[m]["pos"][1] for m in members]
        keep = members[0]
        for other in members[1:]:
            nx.contracted_nodes(g, keep, other, self_loops=False, copy=False)
        g.nodes[keep]["pos"] = (sum(xs) / len(xs), sum(ys) / len(ys))
        g.nodes[keep].pop("contraction", None)


def refine(graph: SpatialGraph, params: RefineParams = RefineParams()) -> SpatialGraph:
    """Prune spurs, drop small components, extend dead ends, merge junctions."""
    g = graph.to_networkx()
    prune_spurs(g, params.min_segment)
    remove_small_components(g, params.min_component)
    extend_dead_ends(g, params.extend_dist, params.junction_merge)
    merge_junctions(g, params.junction_merge)
    return SpatialGraph.from_networkx(g)


# -- seeds and the full pipeline ------------------------------------------------


def seed_points(mask: RasterGrid, min_prob: float, min_spacing: float) -> list[Point]:
    """Local maxima of at least min_prob, greedily spaced by min_spacing."""
    values = _single_channel(mask)
    if values.size == 0:
        return []
    peaks = (values == maximum_filter(values, size=3, mode="nearest")) & (values >= min_prob)
    rows, cols = np.nonzero(peaks)
    order = np.lexsort((cols, rows, -values[rows, cols]))
    index = GridIndex(max(min_spacing, 1e-6))
    chosen: list[Point] = []
    for k in order:
        p = mask.pixel_center(int(rows[k]), int(cols[k]))
        close = [
            q for q in index.vertices_within(p, min_spacing)
            if math.dist(chosen[q], p) < min_spacing
        ]
        if close:
            continue
        index.insert(len(chosen), p)
        chosen.append(p)
    return chosen


@dataclass
class PipelineStages:
    """Intermediate results of extract_road_graph."""

    binary: RasterGrid
    skeleton: RasterGrid
    graph: SpatialGraph
    simplified: SpatialGraph
    refined: SpatialGraph


def extract_road_graph(
    mask: RasterGrid,
    t: float = 0.5,
    epsilon: float = 1.5,
    params: Optional[RefineParams] = RefineParams(),
) -> PipelineStages:
    """Run the whole post-processing chain; params=None skips refinement."""
    binary = threshold(mask, t)
    if not binary.values.any():
        logger.warning(f"Threshold {t} leaves no road pixels")
    skeleton = thin(binary)
    graph = extract_graph(skeleton)
    simplified = simplify(graph, epsilon)
    refined = simplified if params is None else refine(simplified, params)
    logger.info(
        f"Skeleton graph: {graph.vertex_count} vertices, simplified to "
        f"{simplified.vertex_count}, refined to {refined.vertex_count}"
    )
    return PipelineStages(binary, skeleton, graph, simplified, refined)
