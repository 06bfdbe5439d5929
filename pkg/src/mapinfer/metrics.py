# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Map comparison metrics.

Three ways of scoring an inferred road graph against the ground truth:
the junction-by-junction metric (correct fraction and error rate), TOPO
(matching what a car can reach from seed locations) and the shortest-path
metric (Correct / Long / Short / NoPath).
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import networkx as nx
import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial import cKDTree
from scipy.spatial.distance import directed_hausdorff

from mapinfer.exceptions import UsageError
from mapinfer.geograph import (
    Edge,
    GridIndex,
    Point,
    RandomSource,
    SpatialGraph,
    as_generator,
    bounded_distances,
    junctions,
    nearest_edge_point,
)
from mapinfer.logging import get_logger
from mapinfer.models import MetricsConfig

logger = get_logger("metrics")

Scalar = Union[float, int]


# -- junction metric -----------------------------------------------------------


@dataclass(frozen=True)
class JunctionPair:
    gt: int
    inferred: int
    f_correct: float
    f_error: float


@dataclass
class JunctionReport:
    """Junction metric result.

    ``f_correct`` is the captured fraction of ground-truth junction edges,
    ``f_error`` the share of inferred junction edges that match nothing.
    """

    f_correct: float
    f_error: float
    n_correct: float
    n_error: float
    pairs: list[JunctionPair] = field(default_factory=list)
    unpaired_gt: int = 0
    unpaired_inferred: int = 0

    @property
    def recall(self) -> float:
        return self.f_correct

    @property
    def error(self) -> float:
        return self.f_error

    def row(self) -> dict[str, Scalar]:
        return {
            "F_correct": self.f_correct,
            "F_error": self.f_error,
            "n_correct": self.n_correct,
            "n_error": self.n_error,
            "pairs": len(self.pairs),
            "unpaired_gt": self.unpaired_gt,
            "unpaired_inferred": self.unpaired_inferred,
        }


def branch_bearings(graph: SpatialGraph, v: int, reach: float) -> list[float]:
    """Bearing of every edge leaving v, measured at the far end of its chain.

    Each branch is followed through degree-2 vertices until reach meters have
    been covered or another junction or dead end is met.
    """
    vx, vy = graph.position(v)
    bearings = []
    for first in graph.neighbors(v):
        prev, cur = v, first
        travelled = graph.edge_length(v, first)
        while travelled < reach and graph.degree(cur) == 2:
            nxt = next(n for n in graph.neighbors(cur) if n != prev)
            if nxt == v:
                break
            travelled += graph.edge_length(cur, nxt)
            prev, cur = cur, nxt
        x, y = graph.position(cur)
        bearings.append(math.atan2(y - vy, x - vx) % (2 * math.pi))
    return bearings


def angle_difference(a: float, b: float) -> float:
    """Absolute difference of two angles, wrapped to [0, pi]."""
    diff = abs(a - b) % (2 * math.pi)
    return min(diff, 2 * math.pi - diff)


def matched_bearings(gt_bearings: Sequence[float], inf_bearings: Sequence[float], tol: float) -> int:
    """Size of the largest one-to-one pairing of bearings within tol."""
    if not gt_bearings or not inf_bearings:
        return 0
    cost = np.array(
        [[0.0 if angle_difference(g, i) <= tol else 1.0 for i in inf_bearings] for g in gt_bearings]
    )
    rows, cols = linear_sum_assignment(cost)
    return int((cost[rows, cols] == 0.0).sum())


def pair_junctions(
    gt: SpatialGraph, inferred: SpatialGraph, match_radius: float
) -> list[tuple[int, int]]:
    """One-to-one junction pairs, greedily by ascending distance within match_radius."""
    inf_junctions = junctions(inferred)
    index = GridIndex(match_radius)
    for u in inf_junctions:
        index.insert(u, inferred.position(u))
    candidates = []
    for v in junctions(gt):
        p = gt.position(v)
        for u in index.vertices_within(p, match_radius):
            candidates.append((math.dist(p, inferred.position(u)), v, u))
    candidates.sort()
    used_gt: set[int] = set()
    used_inf: set[int] = set()
    pairs = []
    for _, v, u in candidates:
        if v in used_gt or u in used_inf:
            continue
        used_gt.add(v)
        used_inf.add(u)
        pairs.append((v, u))
    return pairs


def junction_metric(
    gt: SpatialGraph,
    inferred: SpatialGraph,
    match_radius: float = 12.0,
    angle_tol: float = math.radians(30.0),
    bearing_reach: float = 24.0,
) -> JunctionReport:
    """Compare two maps junction by junction.

    Args:
        gt: Ground-truth graph
        inferred: Inferred graph
        match_radius: Maximum distance between paired junctions, meters
        angle_tol: Maximum bearing difference of matched edges, radians
        bearing_reach: How far along a branch its bearing is measured

    Returns:
        JunctionReport with the aggregate fractions and per-pair detail
    """
    gt_junctions = junctions(gt)
    inf_junctions = junctions(inferred)
    pairs = []
    n_correct = 0.0
    n_error = 0.0
    paired_inf = set()
    for v, u in pair_junctions(gt, inferred, match_radius):
        matched = matched_bearings(
            branch_bearings(gt, v, bearing_reach),
            branch_bearings(inferred, u, bearing_reach),
            angle_tol,
        )
        f_correct = matched / gt.degree(v)
        f_error = 1.0 - matched / inferred.degree(u)
        pairs.append(JunctionPair(v, u, f_correct, f_error))
        n_correct += f_correct
        n_error += f_error
        paired_inf.add(u)
    unpaired_inf = len(inf_junctions) - len(paired_inf)
    n_error += unpaired_inf

    f_correct_total = n_correct / len(gt_junctions) if gt_junctions else 1.0
    f_error_total = n_error / (n_error + n_correct) if n_error + n_correct > 0 else 0.0
    return JunctionReport(
        f_correct=f_correct_total,
        f_error=f_error_total,
        n_correct=n_correct,
        n_error=n_error,
        pairs=pairs,
        unpaired_gt=len(gt_junctions) - len(pairs),
        unpaired_inferred=unpaired_inf,
    )


# -- TOPO ------------------------------------------------------------------------


@dataclass
class TopoReport:
    precision: float
    recall: float
    seeds: int
    paired_seeds: int

    @property
    def error(self) -> float:
        return 1.0 - self.precision

    def row(self) -> dict[str, Scalar]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "seeds": self.seeds,
            "paired_seeds": self.paired_seeds,
        }


def _geometric_edges(graph: SpatialGraph) -> list[Edge]:
    """Edges ordered by endpoint coordinates rather than vertex ids."""

    def key(e: Edge) -> tuple[Point, Point]:
        a, b = sorted((graph.position(e[0]), graph.position(e[1])))
        return a, b

    return sorted(graph.edges(), key=key)


def sample_edge_points(
    graph: SpatialGraph, count: int, rng: RandomSource = 0
) -> list[tuple[Edge, float]]:
    """Points drawn uniformly by length along the graph, as (edge, t).

    Offsets run from the lower-coordinate endpoint of each edge, so the
    points drawn do not depend on vertex numbering.
    """
    edges = [e for e in _geometric_edges(graph) if graph.edge_length(*e) > 0]
    if not edges:
        return []
    gen = as_generator(rng)
    cumulative = np.cumsum([graph.edge_length(*e) for e in edges])
    samples = []
    for r in gen.random(count) * cumulative[-1]:
        i = min(int(np.searchsorted(cumulative, r, side="right")), len(edges) - 1)
        start = cumulative[i - 1] if i > 0 else 0.0
        u, v = edges[i]
        f = float((r - start) / graph.edge_length(u, v))
        samples.append((edges[i], f if graph.position(u) <= graph.position(v) else 1.0 - f))
    return samples


def _point_on(graph: SpatialGraph, edge: Edge, s: float) -> Point:
    (ax, ay), (bx, by) = graph.position(edge[0]), graph.position(edge[1])
    length = graph.edge_length(*edge)
    t = s / length if length > 0 else 0.0
    return ax + t * (bx - ax), ay + t * (by - ay)


def reachable_holes(
    graph: SpatialGraph, edge: Edge, t: float, drive_dist: float, interval: float
) -> list[Point]:
    """Points every interval meters of driving from a start on edge, up to drive_dist."""
    u, v = edge
    length = graph.edge_length(u, v)
    start = t * length
    holes: dict[tuple[float, float], Point] = {}

    def put(p: Point) -> None:
        holes.setdefault((round(p[0], 6), round(p[1], 6)), p)

    put(_point_on(graph, edge, start))
    k = 1
    while k * interval <= drive_dist:
        for s in (start - k * interval, start + k * interval):
            if 0.0 <= s <= length:
                put(_point_on(graph, edge, s))
        k += 1

    from_u = bounded_distances(graph, u, max(drive_dist - start, 0.0))
    from_v = bounded_distances(graph, v, max(drive_dist - (length - start), 0.0))
    dist: dict[int, float] = {}
    for x, d in from_u.items():
        dist[x] = start + d
    for x, d in from_v.items():
        dist[x] = min(dist.get(x, math.inf), length - start + d)

    for x, y in graph.edges():
        if (x, y) == edge:
            continue
        seg = graph.edge_length(x, y)
        if seg == 0.0:
            continue
        for near, far, forward in ((x, y, True), (y, x, False)):
            dn = dist.get(near)
            if dn is None:
                continue
            df = dist.get(far, math.inf)
            limit = min(seg, (df + seg - dn) / 2.0, drive_dist - dn)
            k = math.floor(dn / interval) + 1
            while k * interval - dn <= limit:
                s = k * interval - dn
                put(_point_on(graph, (x, y), s if forward else seg - s))
                k += 1
    return list(holes.values())


def match_holes(gt_holes: Sequence[Point], inf_holes: Sequence[Point], radius: float) -> int:
    """Maximum one-to-one matching of holes closer than radius."""
    if not gt_holes or not inf_holes:
        return 0
    neighbours = cKDTree(np.asarray(gt_holes)).query_ball_tree(cKDTree(np.asarray(inf_holes)), radius)
    rows = [i for i, cols in enumerate(neighbours) for _ in cols]
    cols = [j for js in neighbours for j in js]
    if not rows:
        return 0
    adjacency = csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(gt_holes), len(inf_holes))
    )
    matching = maximum_bipartite_matching(adjacency, perm_type="column")
    return int((matching >= 0).sum())


def topo(
    gt: SpatialGraph,
    inferred: SpatialGraph,
    seeds: int = 50,
    drive_dist: float = 300.0,
    hole_radius: float = 12.0,
    interval: float = 6.0,
    rng: RandomSource = 0,
) -> TopoReport:
    """Compare what can be reached within drive_dist from shared seed locations."""
    if seeds < 1 or drive_dist <= 0 or hole_radius <= 0 or interval <= 0:
        raise UsageError("TOPO parameters must be positive")
    precisions = []
    recalls = []
    for edge, t in sample_edge_points(gt, seeds, rng):
        gt_holes = reachable_holes(gt, edge, t, drive_dist, interval)
        start = nearest_edge_point(inferred, _point_on(gt, edge, t * gt.edge_length(*edge)), hole_radius)
        if start is None:
            recalls.append(0.0)
            continue
        inf_holes = reachable_holes(inferred, start.edge, start.t, drive_dist, interval)
        matched = match_holes(gt_holes, inf_holes, hole_radius)
        precisions.append(matched / len(inf_holes))
        recalls.append(matched / len(gt_holes))
    return TopoReport(
        precision=float(np.mean(precisions)) if precisions else 0.0,
        recall=float(np.mean(recalls)) if recalls else 0.0,
        seeds=len(recalls),
        paired_seeds=len(precisions),
    )


# -- shortest paths ------------------------------------------------------------------


@dataclass
class SPReport:
    """Shortest-path outcome fractions; they sum to one."""

    correct: float
    long: float
    short: float
    nopath: float
    pairs: int

    @property
    def recall(self) -> float:
        return self.correct

    @property
    def error(self) -> float:
        return self.long + self.short

    def row(self) -> dict[str, Scalar]:
        return {
            "correct": self.correct,
            "long": self.long,
            "short": self.short,
            "nopath": self.nopath,
            "pairs": self.pairs,
        }


def classify_path(len_gt: float, len_inf: Optional[float], similarity: float) -> str:
    """Correct, Short, Long or NoPath for one origin/destination pair."""
    if len_inf is None:
        return "nopath"
    if abs(len_inf - len_gt) <= similarity * len_gt:
        return "correct"
    return "short" if len_inf < len_gt else "long"


def sp_metric(
    gt: SpatialGraph,
    inferred: SpatialGraph,
    n_pairs: int = 200,
    similarity: float = 0.05,
    match_radius: float = 12.0,
    rng: RandomSource = 0,
) -> SPReport:
    """Compare shortest paths between random ground-truth vertex pairs.

    Raises:
        UsageError: If no ground-truth component has two vertices
    """
    if n_pairs < 1:
        raise UsageError("n_pairs must be at least 1")
    components = {}
    for component in gt.connected_components():
        if len(component) >= 2:
            members = sorted(component, key=gt.position)
            for v in members:
                components[v] = members
    if len(components) < 2:
        raise UsageError("Ground truth needs at least two connected vertices")
    candidates = sorted(components, key=gt.position)

    gen = as_generator(rng)
    g_gt = gt.view()
    g_inf = inferred.view()
    index = GridIndex(match_radius)
    for v in inferred.vertices():
        index.insert(v, inferred.position(v))

    gt_lengths: dict[int, dict[int, float]] = {}
    inf_lengths: dict[int, dict[int, float]] = {}
    counts = {"correct": 0, "long": 0, "short": 0, "nopath": 0}
    for _ in range(n_pairs):
        origin = candidates[int(gen.integers(len(candidates)))]
        others = [v for v in components[origin] if v != origin]
        destination = others[int(gen.integers(len(others)))]
        if origin not in gt_lengths:
            gt_lengths[origin] = nx.single_source_dijkstra_path_length(g_gt, origin, weight="length")
        len_gt = gt_lengths[origin][destination]

        a = index.nearest(gt.position(origin), match_radius)
        b = index.nearest(gt.position(destination), match_radius)
        len_inf: Optional[float] = None
        if a is not None and b is not None:
            if a not in inf_lengths:
                inf_lengths[a] = nx.single_source_dijkstra_path_length(g_inf, a, weight="length")
            len_inf = inf_lengths[a].get(b)
        counts[classify_path(len_gt, len_inf, similarity)] += 1

    return SPReport(
        correct=counts["correct"] / n_pairs,
        long=counts["long"] / n_pairs,
        short=counts["short"] / n_pairs,
        nopath=counts["nopath"] / n_pairs,
        pairs=n_pairs,
    )


# -- running, sweeping and reporting --------------------------------------------------

Report = Union[JunctionReport, TopoReport, SPReport]

METRICS = ("junction", "topo", "sp")


def run_metric(name: str, gt: SpatialGraph, inferred: SpatialGraph, cfg: MetricsConfig) -> Report:
    """Evaluate one named metric with the configured parameters."""
    if name == "junction":
        return junction_metric(
            gt, inferred, cfg.match_radius, math.radians(cfg.angle_tol), cfg.bearing_reach
        )
    if name == "topo":
        return topo(
            gt, inferred, cfg.topo_seeds, cfg.drive_dist, cfg.hole_radius, cfg.interval, cfg.seed
        )
    if name == "sp":
        return sp_metric(gt, inferred, cfg.sp_pairs, cfg.similarity, cfg.match_radius, cfg.seed)
    raise UsageError(f"Unknown metric: {name}")


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    report: Report

    @property
    def recall(self) -> float:
        return self.report.recall

    @property
    def error(self) -> float:
        return self.report.error


def sweep(
    gt: SpatialGraph,
    family: Mapping[float, SpatialGraph],
    metric: Callable[[SpatialGraph, SpatialGraph], Report],
) -> list[SweepRow]:
    """Evaluate metric for every threshold of an inferred-graph family, in threshold order."""
    if not family:
        raise UsageError("A sweep needs at least one threshold")
    rows = []
    for t in sorted(family):
        report = metric(gt, family[t])
        logger.debug(f"threshold {t}: recall {report.recall:.4f}, error {report.error:.4f}")
        rows.append(SweepRow(t, report))
    return rows


def best_threshold(rows: Sequence[SweepRow]) -> SweepRow:
    """Row with the highest correct shortest-path fraction; ties go to the lowest threshold."""
    sp_rows = [row for row in rows if isinstance(row.report, SPReport)]
    if not sp_rows:
        raise UsageError("best_threshold needs shortest-path rows")
    return max(sp_rows, key=lambda row: (row.report.recall, -row.threshold))


def _cell(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def format_tsv(rows: Sequence[Mapping[str, object]], columns: Sequence[str]) -> str:
    """Tab-separated table with a header row and fixed column order."""
    out = io.StringIO()
    writer = csv.writer(out, delimiter="\t", lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return out.getvalue()


def report_tsv(label: str, report: Report) -> str:
    row: dict[str, object] = {"graph": label, **report.row()}
    return format_tsv([row], list(row))


def sweep_tsv(rows: Sequence[SweepRow]) -> str:
    table: list[dict[str, object]] = [
        {"threshold": row.threshold, "recall": row.recall, "error": row.error, **row.report.row()}
        for row in rows
    ]
    if not table:
        return ""
    return format_tsv(table, list(table[0]))


# -- geometry -----------------------------------------------------------------------


def sample_centerlines(graph: SpatialGraph, step: float) -> NDArray[np.float64]:
    """Vertices plus points every step meters along each edge, as an (N, 2) array."""
    if step <= 0:
        raise UsageError("step must be positive")
    points = [graph.positions()]
    for u, v in graph.edges():
        n = int(math.ceil(graph.edge_length(u, v) / step))
        if n > 1:
            t = np.arange(1, n)[:, None] / n
            a, b = np.asarray(graph.position(u)), np.asarray(graph.position(v))
            points.append(a + t * (b - a))
    return np.concatenate(points).reshape(-1, 2)


def hausdorff_distance(a: SpatialGraph, b: SpatialGraph, step: float = 0.25) -> float:
    """Symmetric Hausdorff distance between the centerlines of two graphs.

    Centerlines are sampled every step meters, so the result is accurate to
    about step / 2. Two empty graphs are at distance 0, one empty graph is
    infinitely far from anything else.
    """
    pa, pb = sample_centerlines(a, step), sample_centerlines(b, step)
    if len(pa) == 0 and len(pb) == 0:
        return 0.0
    if len(pa) == 0 or len(pb) == 0:
        return math.inf
    return float(max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0]))
