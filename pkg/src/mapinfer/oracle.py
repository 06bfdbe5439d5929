# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Ground-truth oracle, map-matching and training labels.

The oracle decides like a perfect decision function would: it aligns the
recently traced part of the partial graph with the ground-truth graph and
walks toward ground-truth roads nobody has explored yet.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal, Optional, Sequence, TextIO

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from mapinfer.exceptions import DataError, NoMatchError, UsageError
from mapinfer.geograph import (
    BoundingBox,
    Edge,
    Point,
    RandomSource,
    SpatialGraph,
    VertexPath,
    as_generator,
    bounded_search,
    edge_key,
    grid_index,
    project_to_segment,
    random_walk,
)
from mapinfer.logging import get_logger
from mapinfer.raster import RasterGrid
from mapinfer.tracer import (
    TWO_PI,
    Action,
    DecisionInput,
    DecisionOutput,
    Decider,
    Region,
    SearchState,
    angle_of_bucket,
    bucket_of_angle,
    choose_action,
    step,
)

logger = get_logger("oracle")

EPSILON = 1e-6
MAX_CANDIDATES = 6


# -- map-matching -------------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    """Projection of a path vertex onto one ground-truth edge."""

    edge: Edge
    t: float
    point: Point
    distance: float


@dataclass(frozen=True)
class Leg:
    """Ground-truth route between two consecutive matched projections.

    ``gap`` is the graph distance between the two candidate edges (zero when
    they are the same edge or share a vertex). ``driven`` lists the edges the
    route actually moves along, each oriented in travel direction.
    """

    travel: float
    gap: float
    driven: tuple[tuple[int, int], ...]


@dataclass
class MatchResult:
    """Decoded alignment of the last ``len(candidates)`` path vertices."""

    candidates: list[Candidate]
    start: int
    path: VertexPath
    anchor: int
    driven: list[tuple[int, int]] = field(default_factory=list)

    def edges(self) -> set[Edge]:
        """Ground-truth edges the matched path drives along."""
        return {edge_key(u, v) for u, v in self.driven}


def _other(e: Edge, v: int) -> int:
    return e[1] if v == e[0] else e[0]


class MapMatcher:
    """Viterbi map-matching against a fixed ground-truth graph.

    Emission scores are Gaussian in the distance from a path vertex to a
    candidate edge. Transitions cost the ground-truth distance between the two
    candidate edges plus the detour of the route over the straight step, both
    divided by D. They are allowed only when the travel
    distance between consecutive projections is at most the straight-line
    step plus 2D. Candidates and transitions are cached per point, so
    matching overlapping walks again is cheap.
    """

    def __init__(self, gt: SpatialGraph, sigma: float, D: float = 12.0) -> None:
        if gt.vertex_count == 0:
            raise UsageError("Cannot map-match against an empty ground truth")
        if sigma <= 0 or D <= 0:
            raise UsageError("sigma and D must be positive")
        self.gt = gt
        self.sigma = sigma
        self.D = D
        self.reach_limit = 6 * D
        self.radius = 4 * sigma
        # shorter moves along an edge do not count as driving it
        self.min_driven = D / 8
        longest = max((gt.edge_length(u, v) for u, v in gt.edges()), default=0.0)
        self._half_edge = longest / 2
        self._index = grid_index(gt, max(self.radius, 1.0))
        self._reach: dict[int, tuple[dict[int, float], dict[int, VertexPath]]] = {}
        self._candidates: dict[Point, list[Candidate]] = {}
        self._legs: dict[tuple[Point, Point], list[list[Optional[Leg]]]] = {}

    def candidates(self, p: Point) -> list[Candidate]:
        """Edges within 4 sigma of p, nearest first, at most MAX_CANDIDATES."""
        cached = self._candidates.get(p)
        if cached is not None:
            return cached
        seen: set[Edge] = set()
        found = []
        for v in self._index.vertices_within(p, self.radius + self._half_edge):
            for w in self.gt.neighbors(v):
                e = edge_key(v, w)
                if e in seen:
                    continue
                seen.add(e)
                a, b = self.gt.position(e[0]), self.gt.position(e[1])
                dist, t = project_to_segment(p, a, b)
                if dist <= self.radius:
                    point = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
                    found.append(Candidate(e, t, point, dist))
        found.sort(key=lambda c: (c.distance, c.edge))
        self._candidates[p] = found[:MAX_CANDIDATES]
        return self._candidates[p]

    def _reach_from(self, v: int) -> tuple[dict[int, float], dict[int, VertexPath]]:
        if v not in self._reach:
            self._reach[v] = bounded_search(self.gt, v, self.reach_limit)
        return self._reach[v]

    def route(self, c1: Candidate, c2: Candidate) -> Optional[Leg]:
        """Shortest travel from c1 to c2, or None if they are too far apart."""
        if c1.edge == c2.edge:
            travel = abs(c2.t - c1.t) * self.gt.edge_length(*c1.edge)
            if travel <= self.min_driven:
                return Leg(travel, 0.0, ())
            e = c1.edge
            return Leg(travel, 0.0, ((e[0], e[1]) if c2.t > c1.t else (e[1], e[0]),))
        len1 = self.gt.edge_length(*c1.edge)
        len2 = self.gt.edge_length(*c2.edge)
        gap = math.inf
        best: Optional[tuple[float, int, int, float, float]] = None
        for x, dx in ((c1.edge[0], c1.t * len1), (c1.edge[1], (1 - c1.t) * len1)):
            dist, _ = self._reach_from(x)
            for y, dy in ((c2.edge[0], c2.t * len2), (c2.edge[1], (1 - c2.t) * len2)):
                if y not in dist:
                    continue
                gap = min(gap, dist[y])
                key = (dx + dist[y] + dy, x, y, dx, dy)
                if best is None or key < best:
                    best = key
        if best is None:
            return None
        travel, x, y, dx, dy = best
        crossed = self._reach_from(x)[1][y]
        driven: list[tuple[int, int]] = []
        if dx > self.min_driven:
            driven.append((_other(c1.edge, x), x))
        driven.extend(zip(crossed, crossed[1:]))
        if dy > self.min_driven:
            driven.append((y, _other(c2.edge, y)))
        return Leg(travel, gap, tuple(driven))

    def _transitions(self, p: Point, q: Point) -> list[list[Optional[Leg]]]:
        """Feasible legs between every candidate pair of two consecutive points."""
        key = (p, q)
        cached = self._legs.get(key)
        if cached is not None:
            return cached
        limit = math.hypot(q[0] - p[0], q[1] - p[1]) + 2 * self.D
        table: list[list[Optional[Leg]]] = []
        for prev in self.candidates(p):
            row: list[Optional[Leg]] = []
            for cur in self.candidates(q):
                leg = self.route(prev, cur)
                row.append(leg if leg is not None and leg.travel <= limit else None)
            table.append(row)
        self._legs[key] = table
        return table

    def _emission(self, c: Candidate) -> float:
        return -(c.distance**2) / (2 * self.sigma**2)

    def match(self, points: Sequence[Point], strict: bool = True) -> MatchResult:
        """Align points with the ground truth.

        With strict=False only the longest suffix whose points all have
        candidates is matched.

        Raises:
            NoMatchError: If a point (strict) or the last point has no candidate
        """
        if not points:
            raise UsageError("Cannot map-match an empty path")
        layers = [self.candidates(p) for p in points]
        start = 0
        for k, layer in enumerate(layers):
            if not layer:
                if strict or k == len(layers) - 1:
                    raise NoMatchError(
                        f"No ground-truth edge within {self.radius:.1f} m of {points[k]}"
                    )
                start = k + 1
        return self._decode(points[start:], layers[start:], start)

    def _decode(
        self, points: Sequence[Point], layers: list[list[Candidate]], start: int
    ) -> MatchResult:
        scores = [self._emission(c) for c in layers[0]]
        back: list[list[int]] = [[-1] * len(layers[0])]
        for k in range(1, len(layers)):
            table = self._transitions(points[k - 1], points[k])
            straight = math.dist(points[k - 1], points[k])
            new_scores, new_back = [], []
            for j, cur in enumerate(layers[k]):
                best: Optional[tuple[float, int]] = None
                for i in range(len(layers[k - 1])):
                    leg = table[i][j]
                    if leg is None or scores[i] == -math.inf:
                        continue
                    score = scores[i] - (leg.gap + max(0.0, leg.travel - straight)) / self.D
                    if best is None or score > best[0]:
                        best = (score, i)
                if best is None:
                    new_scores.append(-math.inf)
                    new_back.append(-1)
                else:
                    new_scores.append(best[0] + self._emission(cur))
                    new_back.append(best[1])
            if all(s == -math.inf for s in new_scores):
                # lattice break: restart decoding here
                logger.debug(f"Map-matching lattice break at path vertex {start + k}")
                return self._decode(points[k:], layers[k:], start + k)
            scores = new_scores
            back.append(new_back)

        chosen = [int(np.argmax(np.asarray(scores)))]
        for k in range(len(layers) - 1, 0, -1):
            chosen.append(back[k][chosen[-1]])
        chosen.reverse()
        cands = [layers[k][i] for k, i in enumerate(chosen)]
        driven: list[tuple[int, int]] = []
        for k in range(1, len(layers)):
            leg = self._transitions(points[k - 1], points[k])[chosen[k - 1]][chosen[k]]
            assert leg is not None
            driven.extend(leg.driven)
        path = _driven_path(driven)
        if path:
            anchor = path[-1]
        else:
            e = cands[-1].edge
            anchor = e[0] if cands[-1].t < 0.5 else e[1]
        return MatchResult(cands, start, path, anchor, driven)


def _driven_path(driven: Sequence[tuple[int, int]]) -> VertexPath:
    """Vertex sequence of consecutive oriented edges, repeats collapsed."""
    path: VertexPath = []
    for u, v in driven:
        if not path:
            path.extend((u, v))
        elif path[-1] == u:
            path.append(v)
        elif path[-1] != v:
            path.extend((u, v))
    return path


def map_match(
    points: Sequence[Point], gt: SpatialGraph, sigma: float, D: float = 12.0
) -> MatchResult:
    """Strict Viterbi map-matching of a traced path onto gt."""
    return MapMatcher(gt, sigma, D).match(points, strict=True)


# -- oracle -------------------------------------------------------------------


@dataclass
class OracleState:
    """Resampled ground truth plus the set of already explored edges."""

    gt: SpatialGraph
    D: float = 12.0
    w: int = 10
    match_sigma: float = 6.0
    covered_tolerance: float = math.radians(30.0)
    explored: set[Edge] = field(default_factory=set)

    def __post_init__(self) -> None:
        self.matcher = MapMatcher(self.gt, self.match_sigma, self.D)

    @classmethod
    def from_ground_truth(
        cls,
        gt: SpatialGraph,
        D: float = 12.0,
        w: int = 10,
        match_sigma: Optional[float] = None,
        resample: Optional[float] = None,
        covered_tolerance_deg: float = 30.0,
    ) -> "OracleState":
        """Build an oracle over gt with every edge cut to at most resample meters."""
        return cls(
            gt.resampled(resample if resample is not None else D / 2),
            D=D,
            w=w,
            match_sigma=match_sigma if match_sigma is not None else D / 2,
            covered_tolerance=math.radians(covered_tolerance_deg),
        )

    @property
    def ownership_radius(self) -> float:
        """How far a junction may lie from the top vertex and still branch there."""
        return 0.75 * self.D

    def fresh(self) -> "OracleState":
        """Same ground truth, nothing explored; shares the matcher caches."""
        clone = OracleState.__new__(OracleState)
        clone.gt, clone.D, clone.w = self.gt, self.D, self.w
        clone.match_sigma, clone.covered_tolerance = self.match_sigma, self.covered_tolerance
        clone.explored = set()
        clone.matcher = self.matcher
        return clone


@dataclass(frozen=True)
class Target:
    """Where an unexplored road asks the search to go.

    ``joins`` marks targets where the road runs into explored ground truth;
    those are kept even when they are close.
    """

    point: Point
    joins: bool = False


def disk_exit(a: Point, b: Point, center: Point, radius: float) -> Point:
    """First point of segment ab at distance radius from center; a lies inside."""
    wx, wy = b[0] - a[0], b[1] - a[1]
    rx, ry = a[0] - center[0], a[1] - center[1]
    qa = wx * wx + wy * wy
    if qa == 0.0:
        return a
    qb = 2 * (rx * wx + ry * wy)
    qc = rx * rx + ry * ry - radius * radius
    f = (-qb + math.sqrt(max(0.0, qb * qb - 4 * qa * qc))) / (2 * qa)
    f = min(1.0, max(0.0, f))
    return a[0] + f * wx, a[1] + f * wy


def unexplored_targets(
    state: OracleState,
    s_top: Point,
    anchor: int,
    rival_closer: Optional[Callable[[int, float], bool]] = None,
) -> list[Target]:
    """Targets on every unexplored road around the explored ground truth near anchor.

    The explored neighbourhood is everything reachable from anchor through
    explored edges without leaving the disk of radius D around s_top. Walks
    leave it along unexplored edges and end where the road leaves the disk,
    at a dead end, where it meets explored edges, or at a junction at least
    D/2 from s_top. Branches of a junction in the neighbourhood are walked
    only when it lies within the ownership radius and rival_closer (if given)
    does not claim it for another vertex.
    """
    gt, D, explored = state.gt, state.D, state.explored

    def away(v: int) -> float:
        return math.dist(gt.position(v), s_top)

    if away(anchor) >= D:
        return [Target(gt.position(anchor))]
    near, _ = bounded_search(
        gt,
        anchor,
        2 * D,
        allowed=lambda u, v: edge_key(u, v) in explored and away(v) < D,
    )
    found: dict[Point, Target] = {}

    def follow(u: int, v: int, visited: frozenset[int]) -> None:
        pv = gt.position(v)
        if away(v) >= D:
            point = disk_exit(gt.position(u), pv, s_top, D)
            found.setdefault(point, Target(point))
            return
        if any(edge_key(v, w) in explored for w in gt.neighbors(v)):
            found[pv] = Target(pv, joins=True)
            return
        if gt.degree(v) == 1 or (gt.degree(v) >= 3 and away(v) >= D / 2):
            found.setdefault(pv, Target(pv))
            return
        for w in gt.neighbors(v):
            if w != u and w not in visited:
                follow(v, w, visited | {v})

    for x in sorted(near):
        if gt.degree(x) >= 3 and x != anchor:
            d = away(x)
            if d > state.ownership_radius or (rival_closer is not None and rival_closer(x, d)):
                continue
        for y in gt.neighbors(x):
            if edge_key(x, y) not in explored:
                follow(x, y, frozenset((x,)))
    return list(found.values())


def unexplored_angles(
    state: OracleState,
    s_top: Point,
    anchor: int,
    covered: Sequence[float] = (),
    rival_closer: Optional[Callable[[int, float], bool]] = None,
) -> list[float]:
    """Bearings from s_top toward unexplored roads around anchor.

    Targets closer than D/2 to s_top are dropped unless they join explored
    roads, as are bearings within the covered tolerance of any bearing in
    covered.
    """
    angles = []
    for target in unexplored_targets(state, s_top, anchor, rival_closer):
        qx, qy = target.point
        dist = math.hypot(qx - s_top[0], qy - s_top[1])
        if dist < EPSILON or (dist < state.D / 2 and not target.joins):
            continue
        theta = math.atan2(qy - s_top[1], qx - s_top[0]) % TWO_PI
        if any(_angle_diff(theta, c) <= state.covered_tolerance for c in covered):
            continue
        angles.append(theta)
    return sorted(angles)


def _angle_diff(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


def target_vector(
    angles: Sequence[float], a: int
) -> tuple[tuple[float, float], tuple[float, ...]]:
    """(o*_walk, o*_stop) and the a-length 0/1 angle target for a set of bearings."""
    if not angles:
        return (0.0, 1.0), (0.0,) * a
    target = [0.0] * a
    for theta in angles:
        target[bucket_of_angle(theta, a)] = 1.0
    return (1.0, 0.0), tuple(target)


@dataclass(frozen=True)
class OracleLabel:
    target_action: tuple[float, float]
    target_angles: tuple[float, ...]
    angles: tuple[float, ...]

    @property
    def walk(self) -> bool:
        return self.target_action[0] == 1.0

    def as_output(self) -> DecisionOutput:
        return DecisionOutput(*self.target_action, self.target_angles)


class OracleDecider:
    """Decision function that reads the ground truth."""

    needs_window = False

    def __init__(self, state: OracleState, a: int = 64, rng: RandomSource = 0) -> None:
        self.state = state
        self.a = a
        self.rng = as_generator(rng)

    def label(self, search: SearchState) -> OracleLabel:
        """Compute the optimal action at the top of the stack and grow E.

        Walks whose quantized step would leave the search box are not
        offered, since the search would treat them as a stop.
        """
        top = search.top
        graph = search.graph
        s_top = graph.position(top)
        walk = random_walk(graph, top, self.state.w, self.rng)
        points = [graph.position(v) for v in reversed(walk)]
        try:
            match = self.state.matcher.match(points, strict=False)
        except NoMatchError as e:
            logger.warning(f"Map-matching failed at vertex {top}, stopping: {e}")
            return OracleLabel((0.0, 1.0), (0.0,) * self.a, ())
        self.state.explored |= match.edges()
        covered = [
            math.atan2(graph.position(n)[1] - s_top[1], graph.position(n)[0] - s_top[0])
            % TWO_PI
            for n in graph.neighbors(top)
        ]
        stacked: set[int] = set()

        def rival_closer(junction: int, distance: float) -> bool:
            if not stacked:
                stacked.update(search.stack[:-1])
            p = self.state.gt.position(junction)
            return any(
                v in stacked and math.dist(graph.position(v), p) < distance
                for v in search.index.vertices_within(p, distance)
            )

        angles = [
            theta
            for theta in unexplored_angles(self.state, s_top, match.anchor, covered, rival_closer)
            if search.bbox.contains(self._landing(s_top, theta, search.D))
        ]
        action, target = target_vector(angles, self.a)
        return OracleLabel(action, target, tuple(angles))

    def _landing(self, s_top: Point, theta: float, D: float) -> Point:
        phi = angle_of_bucket(bucket_of_angle(theta, self.a), self.a)
        return s_top[0] + D * math.cos(phi), s_top[1] + D * math.sin(phi)

    def decide(self, inp: DecisionInput, state: SearchState) -> DecisionOutput:
        return self.label(state).as_output()


# -- training examples --------------------------------------------------------


@dataclass
class TrainingExample:
    """A decision window and the oracle's answer for it."""

    input: DecisionInput
    target_action: tuple[float, float]
    target_angles: tuple[float, ...]
    session: int = 0
    step: int = 0
    executed: Optional[Action] = None
    partial_graph: Optional[SpatialGraph] = None

    def __post_init__(self) -> None:
        walk, stop = self.target_action
        if sorted((walk, stop)) != [0.0, 1.0]:
            raise DataError("Exactly one of o*_walk, o*_stop must be 1")
        if stop == 1.0 and any(self.target_angles):
            raise DataError("Angle targets must be zero when the target is stop")
        if any(v not in (0.0, 1.0) for v in self.target_angles):
            raise DataError("Angle targets must be 0 or 1")

    @property
    def walk(self) -> bool:
        return self.target_action[0] == 1.0


def _clamp(p: float) -> float:
    return min(1.0 - EPSILON, max(EPSILON, p))


def loss(out: DecisionOutput, ex: TrainingExample) -> float:
    """Cross entropy on the action plus, for walk targets, MSE on the angles.

    Probabilities and targets are clamped to [eps, 1 - eps] and the target's
    own entropy is subtracted, so an output equal to its target scores zero.
    """
    if len(out.angles) != len(ex.target_angles):
        raise UsageError("Output and target angle vectors differ in length")
    value = 0.0
    for p, t in ((out.o_walk, ex.target_action[0]), (out.o_stop, ex.target_action[1])):
        tc = _clamp(t)
        value += tc * (math.log(tc) - math.log(_clamp(p)))
    if ex.walk:
        diff = np.asarray(out.angles) - np.asarray(ex.target_angles)
        value += float(np.mean(diff * diff))
    return max(0.0, value)


def loss_gradient(
    out: DecisionOutput, ex: TrainingExample
) -> tuple[float, float, NDArray[np.float64]]:
    """d loss / d (o_walk, o_stop, angles)."""
    grads = []
    for p, t in ((out.o_walk, ex.target_action[0]), (out.o_stop, ex.target_action[1])):
        inside = EPSILON < p < 1.0 - EPSILON
        grads.append(-_clamp(t) / p if inside else 0.0)
    angles = np.asarray(out.angles, dtype=np.float64)
    if ex.walk:
        g_angles = 2.0 * (angles - np.asarray(ex.target_angles)) / len(angles)
    else:
        g_angles = np.zeros_like(angles)
    return grads[0], grads[1], g_angles


def jitter_graph(graph: SpatialGraph, sigma: float, rng: RandomSource = None) -> SpatialGraph:
    """Copy of graph with Gaussian noise of sigma meters on every vertex."""
    gen = as_generator(rng)
    if sigma <= 0 or graph.vertex_count == 0:
        return graph.copy()
    noise = gen.normal(0.0, sigma, size=(graph.vertex_count, 2))
    moved = graph.positions() + noise
    return SpatialGraph.from_data(((float(x), float(y)) for x, y in moved), graph.edges())


@dataclass(frozen=True)
class LabelSettings:
    """Search geometry shared by label generators."""

    T: float = 0.4
    a: int = 64
    d: int = 256
    resolution: float = 0.6


def sample_start(oracle: OracleState, bbox: BoundingBox, gen: np.random.Generator) -> Point:
    """Uniformly chosen ground-truth vertex inside bbox."""
    inside = [v for v in oracle.gt.vertices() if bbox.contains(oracle.gt.position(v))]
    if not inside:
        raise UsageError("The ground truth has no vertex inside the region")
    return oracle.gt.position(inside[int(gen.integers(len(inside)))])


def generate_static_examples(
    bbox: BoundingBox,
    oracle: OracleState,
    count: int,
    rng: RandomSource = 0,
    max_n: int = 50,
    settings: LabelSettings = LabelSettings(),
    imagery: Optional[RasterGrid] = None,
    jitter_sigma: float = 0.0,
) -> list[TrainingExample]:
    """Sample (v0, n), run n - 1 oracle steps, label the n-th.

    Samples whose search drains before step n are drawn again.
    """
    gen = as_generator(rng)
    examples: list[TrainingExample] = []
    attempts = 0
    while len(examples) < count:
        attempts += 1
        if attempts > 20 * count:
            raise DataError(f"Could only sample {len(examples)} of {count} static examples")
        v0 = sample_start(oracle, bbox, gen)
        n = int(gen.integers(1, max_n + 1))
        search = SearchState.start(v0, bbox, oracle.D, settings.a)
        decider = OracleDecider(oracle.fresh(), settings.a, gen)
        for i in range(1, n + 1):
            label = decider.label(search)
            if i == n:
                shown = jitter_graph(search.graph, jitter_sigma, gen)
                center = shown.position(search.top)
                inp = DecisionInput(center, settings.d, settings.resolution, imagery, shown)
                _ = inp.window
                examples.append(
                    TrainingExample(
                        inp,
                        label.target_action,
                        label.target_angles,
                        session=len(examples),
                        step=i,
                        partial_graph=shown,
                    )
                )
                break
            step(search, choose_action(label.as_output(), settings.T))
            if search.done:
                break
    logger.info(f"Generated {len(examples)} static examples in {attempts} samples")
    return examples


def dynamic_training_session(
    oracle: OracleState,
    decider: Optional[Decider],
    region: Region,
    steps: int,
    settings: LabelSettings = LabelSettings(),
    imagery: Optional[RasterGrid] = None,
    rng: RandomSource = 0,
    session: int = 0,
) -> Iterator[tuple[TrainingExample, Action]]:
    """Label every step with the oracle while the decider drives the search.

    With decider=None the oracle's own labels drive the search.
    """
    search = SearchState.start(region.v0, region.bbox, oracle.D, settings.a)
    labeler = OracleDecider(oracle, settings.a, rng)
    for k in range(1, steps + 1):
        if search.done:
            return
        center = search.graph.position(search.top)
        inp = DecisionInput(center, settings.d, settings.resolution, imagery, search.graph)
        _ = inp.window
        label = labeler.label(search)
        out = label.as_output() if decider is None else decider.decide(inp, search)
        action = choose_action(out, settings.T)
        example = TrainingExample(
            inp, label.target_action, label.target_angles, session, k, executed=action
        )
        step(search, action)
        yield example, action


# -- example files ------------------------------------------------------------


def encode_array(values: NDArray[np.float64], dtype: str) -> str:
    """Base64 of the row-major array cast to dtype."""
    return base64.b64encode(np.ascontiguousarray(values, dtype=dtype).tobytes()).decode("ascii")


def decode_array(blob: str, dtype: str, shape: tuple[int, ...]) -> NDArray[np.float64]:
    raw = np.frombuffer(base64.b64decode(blob), dtype=dtype)
    if raw.size != int(np.prod(shape)):
        raise DataError(f"Array blob holds {raw.size} values, expected shape {shape}")
    return raw.reshape(shape).astype(np.float64)


class ExecutedRecord(BaseModel):
    kind: Literal["walk", "stop"]
    bucket: Optional[int] = None


class ExampleRecord(BaseModel):
    """One line of a training-example file."""

    model_config = ConfigDict(extra="forbid")

    session: int = 0
    step: int = 0
    center: tuple[float, float]
    d: int = Field(gt=0)
    resolution: float = Field(gt=0)
    window: str
    target_action: tuple[float, float]
    target_angles: list[float]
    executed: Optional[ExecutedRecord] = None


def example_to_record(ex: TrainingExample) -> ExampleRecord:
    return ExampleRecord(
        session=ex.session,
        step=ex.step,
        center=ex.input.center,
        d=ex.input.d,
        resolution=ex.input.resolution,
        window=encode_array(ex.input.window, "<f4"),
        target_action=ex.target_action,
        target_angles=list(ex.target_angles),
        executed=(
            None
            if ex.executed is None
            else ExecutedRecord(kind=ex.executed.kind, bucket=ex.executed.bucket)
        ),
    )


def example_from_record(record: ExampleRecord) -> TrainingExample:
    window = decode_array(record.window, "<f4", (record.d, record.d, 4))
    executed = None
    if record.executed is not None:
        executed = Action(record.executed.kind, record.executed.bucket)
    return TrainingExample(
        DecisionInput.from_window(record.center, record.resolution, window),
        record.target_action,
        tuple(record.target_angles),
        session=record.session,
        step=record.step,
        executed=executed,
    )


def save_examples(examples: Sequence[TrainingExample]) -> str:
    """One JSON record per line, in the given order."""
    return "".join(
        example_to_record(ex).model_dump_json(exclude_none=True) + "\n" for ex in examples
    )


def load_examples(stream: TextIO) -> list[TrainingExample]:
    """Parse a training-example file.

    Raises:
        DataError: If a line is not a valid record
    """
    examples = []
    for line_number, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            record = ExampleRecord.model_validate_json(line)
        except ValidationError as e:
            raise DataError(f"Examples line {line_number}: {e}") from e
        examples.append(example_from_record(record))
    return examples
