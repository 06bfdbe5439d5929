# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Synthetic worlds: road networks, their rasters and a raster-reading decider.

Everything here is deterministic in the world's seed, so every other module
can be exercised end to end without real imagery.
"""

import math
from typing import Optional

import networkx as nx
import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import gaussian_filter, maximum_filter
from scipy.spatial import Delaunay

from mapinfer.exceptions import UsageError
from mapinfer.geograph import (
    BoundingBox,
    Point,
    SpatialGraph,
    edge_key,
    segment_distance_field,
)
from mapinfer.logging import get_logger
from mapinfer.models import WorldSpec
from mapinfer.raster import RasterGrid
from mapinfer.tracer import DecisionInput, DecisionOutput, SearchState, angle_of_bucket

# colours of the procedural imagery
logger = get_logger("synthworld")

GROUND = np.array([0.30, 0.42, 0.22])
ASPHALT = np.array([0.58, 0.58, 0.56])
CANOPY = np.array([0.12, 0.26, 0.10])

# roads meeting at a narrower angle get merged by the search
MIN_JUNCTION_ANGLE = math.radians(60.0)


def world_bounds(spec: WorldSpec) -> BoundingBox:
    return BoundingBox(0.0, 0.0, spec.extent, spec.extent)


# -- networks -----------------------------------------------------------------


def lattice(k: int, spacing: float, center: Point) -> SpatialGraph:
    """k x k grid of streets centred on center, before any perturbation."""
    if k < 1:
        raise UsageError("A lattice needs at least one row")
    offset = (k - 1) / 2
    points = [
        (center[0] + (col - offset) * spacing, center[1] + (row - offset) * spacing)
        for row in range(k)
        for col in range(k)
    ]
    edges = []
    for row in range(k):
        for col in range(k):
            v = row * k + col
            if col + 1 < k:
                edges.append((v, v + 1))
            if row + 1 < k:
                edges.append((v, v + k))
    return SpatialGraph.from_data(points, edges)


def _curve(g: nx.Graph, u: int, v: int, bulge: float, pieces: int = 4) -> None:
    """Replace edge uv by a quadratic arc bowed sideways by bulge meters."""
    (ax, ay), (bx, by) = g.nodes[u]["pos"], g.nodes[v]["pos"]
    length = math.hypot(bx - ax, by - ay)
    nx_, ny_ = -(by - ay) / length, (bx - ax) / length
    cx, cy = (ax + bx) / 2 + 2 * bulge * nx_, (ay + by) / 2 + 2 * bulge * ny_
    g.remove_edge(u, v)
    prev = u
    for i in range(1, pieces):
        t = i / pieces
        x = (1 - t) ** 2 * ax + 2 * (1 - t) * t * cx + t**2 * bx
        y = (1 - t) ** 2 * ay + 2 * (1 - t) * t * cy + t**2 * by
        node = max(g.nodes) + 1
        g.add_node(node, pos=(x, y))
        g.add_edge(prev, node)
        prev = node
    g.add_edge(prev, v)


def _grid_world(spec: WorldSpec, gen: np.random.Generator) -> nx.Graph:
    margin = 2 * spec.road_width
    k = max(2, int((spec.extent - 2 * margin) // spec.spacing) + 1)
    spacing = min(spec.spacing, (spec.extent - 2 * margin) / (k - 1))
    center = (spec.extent / 2, spec.extent / 2)
    g = lattice(k, spacing, center).to_networkx()

    jitter = 0.08 * spacing
    for n in sorted(g.nodes):
        x, y = g.nodes[n]["pos"]
        g.nodes[n]["pos"] = (x + gen.uniform(-jitter, jitter), y + gen.uniform(-jitter, jitter))

    for u, v in sorted(g.edges):
        if gen.random() < 0.15:
            g.remove_edge(u, v)
            if not nx.is_connected(g):
                g.add_edge(u, v)

    for u, v in sorted(g.edges):
        if gen.random() < 0.2:
            _curve(g, u, v, gen.uniform(-0.1, 0.1) * spacing)

    # dead-end stubs leaving the outer ring of the grid
    for n in range(k * k):
        row, col = divmod(n, k)
        if row not in (0, k - 1) and col not in (0, k - 1):
            continue
        if gen.random() >= 0.3:
            continue
        dx = -1 if col == 0 else 1 if col == k - 1 else 0
        dy = -1 if row == 0 else 1 if row == k - 1 else 0
        x, y = g.nodes[n]["pos"]
        end = (
            float(np.clip(x + dx * spacing / 2, margin, spec.extent - margin)),
            float(np.clip(y + dy * spacing / 2, margin, spec.extent - margin)),
        )
        if math.dist(end, (x, y)) > spec.road_width:
            stub = max(g.nodes) + 1
            g.add_node(stub, pos=end)
            g.add_edge(n, stub)
    return g


def _radial_world(spec: WorldSpec, gen: np.random.Generator) -> nx.Graph:
    """Concentric ring roads crossed by spokes; the innermost ring is a plaza."""
    c = spec.extent / 2
    reach = c - 2 * spec.road_width
    rings = max(1, int(reach // spec.spacing))
    ring_step = reach / (rings + 0.5)
    spokes = int(gen.integers(5, 9))
    angles = np.sort((np.arange(spokes) + gen.uniform(-0.2, 0.2, spokes)) * 2 * math.pi / spokes)

    g = nx.Graph()

    def add(r: float, theta: float) -> int:
        node = g.number_of_nodes()
        g.add_node(node, pos=(c + r * math.cos(theta), c + r * math.sin(theta)))
        return node

    ring_nodes = []
    for theta in angles:
        column = [add((i + 1) * ring_step, theta) for i in range(rings)]
        g.add_edges_from(zip(column, column[1:]))
        g.add_edge(column[-1], add((rings + 0.5) * ring_step, theta))
        ring_nodes.append(column)

    for i in range(rings):
        r = (i + 1) * ring_step
        for s in range(spokes):
            t0 = angles[s]
            t1 = angles[(s + 1) % spokes] + (2 * math.pi if s + 1 == spokes else 0.0)
            pieces = max(2, math.ceil(r * (t1 - t0) / (spec.spacing / 3)))
            prev = ring_nodes[s][i]
            for j in range(1, pieces):
                node = add(r, t0 + (t1 - t0) * j / pieces)
                g.add_edge(prev, node)
                prev = node
            g.add_edge(prev, ring_nodes[(s + 1) % spokes][i])
    return g


def _bearing(g: nx.Graph, u: int, v: int) -> float:
    (ax, ay), (bx, by) = g.nodes[u]["pos"], g.nodes[v]["pos"]
    return math.atan2(by - ay, bx - ax)


def _opens_wide(g: nx.Graph, u: int, v: int) -> bool:
    """True if edge uv would leave both endpoints with no junction angle below the minimum."""
    for a, b in ((u, v), (v, u)):
        theta = _bearing(g, a, b)
        for w in g.neighbors(a):
            diff = abs(theta - _bearing(g, a, w)) % (2 * math.pi)
            if min(diff, 2 * math.pi - diff) < MIN_JUNCTION_ANGLE:
                return False
    return True


def _organic_world(spec: WorldSpec, gen: np.random.Generator) -> nx.Graph:
    """Delaunay triangulation thinned to a spanning tree plus its shortest extra edges.

    Points keep half a block apart. Extra edges that would meet another road
    at less than MIN_JUNCTION_ANGLE are skipped; spanning-tree angles never are.
    """
    margin = 2 * spec.road_width
    n = max(6, round((spec.extent / spec.spacing) ** 2))
    min_gap = spec.spacing / 2
    kept: list[NDArray[np.float64]] = []
    for _ in range(50 * n):
        if len(kept) == n:
            break
        p = gen.uniform(margin, spec.extent - margin, size=2)
        if all(math.dist(p, q) >= min_gap for q in kept):
            kept.append(p)
    pts = np.asarray(kept)
    tri = Delaunay(pts)
    full = nx.Graph()
    for i, (x, y) in enumerate(pts):
        full.add_node(i, pos=(float(x), float(y)))
    for simplex in tri.simplices:
        for a, b in ((0, 1), (1, 2), (0, 2)):
            u, v = int(simplex[a]), int(simplex[b])
            full.add_edge(u, v, length=float(np.hypot(*(pts[u] - pts[v]))))
    g = nx.minimum_spanning_tree(full, weight="length")
    extra = sorted(
        (d["length"], edge_key(u, v)) for u, v, d in full.edges(data=True) if not g.has_edge(u, v)
    )
    for _, (u, v) in extra[: max(1, len(extra) // 3)]:
        if _opens_wide(g, u, v):
            g.add_edge(u, v)
    return g


def _ring_world(spec: WorldSpec, gen: np.random.Generator) -> nx.Graph:
    """One ring road with a single spur; exactly one cycle."""
    c = spec.extent / 2
    radius = 0.3 * spec.extent
    count = 24
    phase = gen.uniform(0, 2 * math.pi / count)
    g = nx.Graph()
    for i in range(count):
        theta = phase + 2 * math.pi * i / count
        g.add_node(i, pos=(c + radius * math.cos(theta), c + radius * math.sin(theta)))
        g.add_edge(i, (i + 1) % count)
    anchor = int(gen.integers(count))
    ax, ay = g.nodes[anchor]["pos"]
    scale = 1.0 + 0.15 * spec.extent / radius
    g.add_node(count, pos=(c + (ax - c) * scale, c + (ay - c) * scale))
    g.add_edge(anchor, count)
    return g


_STYLES = {
    "grid": _grid_world,
    "radial": _radial_world,
    "organic": _organic_world,
    "ring": _ring_world,
}


def gen_network(spec: WorldSpec) -> SpatialGraph:
    """Connected ground-truth road network for spec, deterministic in its seed."""
    if spec.style not in _STYLES:
        raise UsageError(f"Unknown world style: {spec.style}")
    gen = np.random.default_rng(spec.seed)
    graph = SpatialGraph.from_networkx(_STYLES[spec.style](spec, gen))
    graph.validate()
    logger.debug(
        f"Generated {spec.style} world: {graph.vertex_count} vertices, "
        f"{graph.edge_count} edges, {graph.total_length():.0f} m of road"
    )
    return graph


# -- rasters ------------------------------------------------------------------


def distance_to_roads(graph: SpatialGraph, grid: RasterGrid, reach: float) -> NDArray[np.float64]:
    """Distance from every pixel centre to the nearest edge, capped at reach."""
    out = np.full((grid.height, grid.width), reach, dtype=np.float64)
    xs, ys = grid.pixel_coordinates()
    res = grid.resolution
    for u, v in graph.edges():
        (ax, ay), (bx, by) = graph.position(u), graph.position(v)
        c0 = max(0, math.floor((min(ax, bx) - reach - grid.origin[0]) / res))
        c1 = min(grid.width - 1, math.ceil((max(ax, bx) + reach - grid.origin[0]) / res))
        r0 = max(0, math.floor((min(ay, by) - reach - grid.origin[1]) / res))
        r1 = min(grid.height - 1, math.ceil((max(ay, by) + reach - grid.origin[1]) / res))
        if c0 > c1 or r0 > r1:
            continue
        window = out[r0 : r1 + 1, c0 : c1 + 1]
        dist = segment_distance_field(
            xs[r0 : r1 + 1, c0 : c1 + 1], ys[r0 : r1 + 1, c0 : c1 + 1], (ax, ay), (bx, by)
        )
        np.minimum(window, dist, out=window)
    return out


def occlusion_patches(
    graph: SpatialGraph, rate: float, gen: np.random.Generator
) -> list[tuple[Point, Point]]:
    """Road pieces of 10 to 30 m covering about rate of the total road length."""
    edges = [e for e in graph.edges() if graph.edge_length(*e) > 0]
    total = sum(graph.edge_length(*e) for e in edges)
    if rate <= 0 or total == 0:
        return []
    weights = np.array([graph.edge_length(*e) for e in edges]) / total
    patches = []
    covered = 0.0
    while covered < rate * total:
        u, v = edges[int(gen.choice(len(edges), p=weights))]
        length = graph.edge_length(u, v)
        span = min(float(gen.uniform(10.0, 30.0)), length)
        start = float(gen.uniform(0.0, length - span))
        (ax, ay), (bx, by) = graph.position(u), graph.position(v)
        t0, t1 = start / length, (start + span) / length
        patches.append(
            ((ax + t0 * (bx - ax), ay + t0 * (by - ay)), (ax + t1 * (bx - ax), ay + t1 * (by - ay)))
        )
        covered += span
    return patches


def rasterize(
    gt: SpatialGraph, spec: WorldSpec, resolution: Optional[float] = None
) -> tuple[RasterGrid, RasterGrid]:
    """Road probability grid and 3-channel imagery for a world.

    Probability is 1 on centerlines and falls linearly to 0 at road_width / 2.
    Occluded patches are zeroed, Gaussian noise is added and the result
    clamped to [0, 1].
    """
    res = spec.resolution if resolution is None else resolution
    if res <= 0:
        raise UsageError("Raster resolution must be positive")
    gen = np.random.default_rng([spec.seed, 1])
    half = spec.road_width / 2
    prob = RasterGrid.covering(world_bounds(spec), res)
    road = np.clip(1.0 - distance_to_roads(gt, prob, half + res) / half, 0.0, 1.0)

    patches = occlusion_patches(gt, spec.occlusion_rate, gen)
    shade = np.zeros_like(road)
    if patches:
        patch_graph = SpatialGraph()
        for a, b in patches:
            patch_graph.add_edge(patch_graph.add_vertex(*a), patch_graph.add_vertex(*b))
        reach = half + 2 * res
        shade = (distance_to_roads(patch_graph, prob, reach) <= half + res).astype(np.float64)
        logger.debug(f"Occluded {len(patches)} road patches")

    values = road * (1.0 - shade)
    if spec.noise_sigma > 0:
        values = values + gen.normal(0.0, spec.noise_sigma, values.shape)
    prob.values = np.clip(values, 0.0, 1.0)

    texture = gaussian_filter(gen.random(road.shape), sigma=3.0)
    texture = (texture - texture.min()) / max(float(np.ptp(texture)), 1e-12)
    ground = GROUND[None, None, :] * (0.8 + 0.4 * texture[:, :, None])
    image = ground * (1.0 - road[:, :, None]) + ASPHALT[None, None, :] * road[:, :, None]
    image = image * (1.0 - shade[:, :, None]) + CANOPY[None, None, :] * shade[:, :, None]
    imagery = RasterGrid(np.clip(image, 0.0, 1.0), res, prob.origin)
    return prob, imagery


# -- sensor decider -----------------------------------------------------------


class SensorDecider:
    """Reads the probability raster along rays from the vertex on top of the stack.

    Each bucket scores the mean probability of ``samples`` points between D/2
    and ``lookahead * D`` along its bearing. Points near ink in the window's
    graph channel count as zero, so explored directions are suppressed. The
    walk probability is the best bucket score.
    """

    needs_window = True

    def __init__(
        self,
        probability: RasterGrid,
        D: float = 12.0,
        a: int = 64,
        lookahead: float = 1.5,
        suppress_radius: float = 5.0,
        samples: int = 8,
    ) -> None:
        if probability.channels != 1:
            raise UsageError("SensorDecider needs a single-channel probability grid")
        if samples < 1 or lookahead * D <= D / 2:
            raise UsageError("SensorDecider needs samples >= 1 and lookahead above 0.5")
        self.probability = probability
        self.D = D
        self.a = a
        self.suppress_radius = suppress_radius
        distances = np.linspace(D / 2, lookahead * D, samples)
        thetas = np.array([angle_of_bucket(i, a) for i in range(a)])
        self._dx = np.cos(thetas)[:, None] * distances[None, :]
        self._dy = np.sin(thetas)[:, None] * distances[None, :]

    def scores(self, inp: DecisionInput) -> NDArray[np.float64]:
        cx, cy = inp.center
        values = self.probability.sample(cx + self._dx, cy + self._dy)
        ink = inp.window[:, :, 3]
        size = 2 * math.ceil(self.suppress_radius / inp.resolution) + 1
        inked = maximum_filter(ink, size=size, mode="constant") > 0.5
        half = inp.d // 2
        cols = np.rint(self._dx / inp.resolution).astype(np.int64) + half
        rows = np.rint(self._dy / inp.resolution).astype(np.int64) + half
        inside = (rows >= 0) & (rows < inp.d) & (cols >= 0) & (cols < inp.d)
        blocked = np.zeros_like(inside)
        blocked[inside] = inked[rows[inside], cols[inside]]
        return np.where(blocked, 0.0, values).mean(axis=1)

    def decide(self, inp: DecisionInput, state: SearchState) -> DecisionOutput:
        scores = np.clip(self.scores(inp), 0.0, 1.0)
        best = float(scores.max())
        return DecisionOutput(best, 1.0 - best, tuple(float(s) for s in scores))
