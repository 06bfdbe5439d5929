"""Tests for the spatial graph model, graph files, indexing and searches."""

import io
import math

import networkx as nx
import numpy as np
import pytest

from mapinfer.exceptions import GraphFormatError, GraphValidationError, UsageError
from mapinfer.geograph import (
    BoundingBox,
    SpatialGraph,
    bounded_distances,
    bounded_graph_distance,
    bounded_search,
    grid_index,
    junctions,
    load_graph,
    nearest_edge_point,
    project_to_segment,
    random_walk,
    save_graph,
)


def chain(n: int, spacing: float = 10.0) -> SpatialGraph:
    return SpatialGraph.from_data(
        [(i * spacing, 0.0) for i in range(n)], [(i, i + 1) for i in range(n - 1)]
    )


def random_graph(seed: int, n: int = 50) -> SpatialGraph:
    gen = np.random.default_rng(seed)
    points = gen.uniform(0, 200, size=(n, 2))
    g = SpatialGraph.from_data([tuple(p) for p in points], [])
    for _ in range(2 * n):
        u, v = (int(x) for x in gen.integers(n, size=2))
        if u != v and not g.has_edge(u, v):
            g.add_edge(u, v)
    return g


def test_load_graph_minimal() -> None:
    """Test a two-vertex, one-edge file."""
    g = load_graph(io.StringIO("graph v=2 e=1\nv 0 0 0\nv 1 10 0\ne 0 1\n"))
    assert g.vertex_count == 2
    assert g.edges() == [(0, 1)]
    assert g.edge_length(0, 1) == 10.0


def test_load_graph_comments_and_dense_ids() -> None:
    """Test that comments are ignored and file ids are remapped in file order."""
    text = "# exported\ngraph v=2 e=1\nv 7 1.5 2  # first\n\nv 3 4 6\ne 3 7\n"
    g = load_graph(io.StringIO(text))
    assert g.position(0) == (1.5, 2.0)
    assert g.position(1) == (4.0, 6.0)
    assert g.edges() == [(0, 1)]


def test_load_graph_dangling_edge() -> None:
    """Test that an edge without vertices is a validation error."""
    with pytest.raises(GraphValidationError, match="unknown vertex"):
        load_graph(io.StringIO("graph v=0 e=1\ne 0 1\n"))


def test_load_graph_missing_header() -> None:
    """Test that the header is required."""
    with pytest.raises(GraphFormatError, match="line 1") as excinfo:
        load_graph(io.StringIO("v 0 0 0\n"))
    assert excinfo.value.line_number == 1


def test_load_graph_empty_stream() -> None:
    """Test that an empty file has no header either."""
    with pytest.raises(GraphFormatError, match="header"):
        load_graph(io.StringIO(""))


def test_load_graph_bad_number() -> None:
    """Test that parse errors carry the line number."""
    with pytest.raises(GraphFormatError, match="line 3"):
        load_graph(io.StringIO("graph v=2 e=0\nv 0 0 0\nv 1 abc 0\n"))


def test_load_graph_unknown_record() -> None:
    """Test that unrecognized records are rejected."""
    with pytest.raises(GraphFormatError, match="line 2"):
        load_graph(io.StringIO("graph v=1 e=0\nvertex 0 0 0\n"))


def test_load_graph_header_mismatch() -> None:
    """Test that header counts must match the body."""
    with pytest.raises(GraphValidationError, match="header declares"):
        load_graph(io.StringIO("graph v=3 e=0\nv 0 0 0\nv 1 1 1\n"))


def test_load_graph_self_loop_and_duplicate() -> None:
    """Test that self-loops and duplicate edges are rejected."""
    with pytest.raises(GraphValidationError, match="Self-loop"):
        load_graph(io.StringIO("graph v=1 e=1\nv 0 0 0\ne 0 0\n"))
    with pytest.raises(GraphValidationError, match="Duplicate edge"):
        load_graph(io.StringIO("graph v=2 e=2\nv 0 0 0\nv 1 1 0\ne 0 1\ne 1 0\n"))


def test_load_graph_non_finite() -> None:
    """Test that NaN coordinates are rejected."""
    with pytest.raises(GraphValidationError, match="non-finite"):
        load_graph(io.StringIO("graph v=1 e=0\nv 0 nan 0\n"))


def test_save_graph_empty_and_single() -> None:
    """Test the canonical form of trivial graphs."""
    assert save_graph(SpatialGraph()) == "graph v=0 e=0\n"
    one = SpatialGraph.from_data([(1.0, 2.5)], [])
    assert save_graph(one) == "graph v=1 e=0\nv 0 1.0 2.5\n"


def test_save_graph_sorts_edges() -> None:
    """Test that edges are written as (min, max) in lexicographic order."""
    g = SpatialGraph.from_data([(0, 0), (1, 0), (2, 0)], [(2, 1), (1, 0)])
    assert save_graph(g).splitlines()[-2:] == ["e 0 1", "e 1 2"]


def test_save_load_round_trip() -> None:
    """Test that save(load(save(g))) is stable for random graphs."""
    for seed in range(5):
        text = save_graph(random_graph(seed, n=30))
        assert save_graph(load_graph(io.StringIO(text))) == text


def test_add_edge_validation() -> None:
    """Test edge insertion invariants."""
    g = chain(2)
    with pytest.raises(GraphValidationError):
        g.add_edge(0, 5)
    with pytest.raises(GraphValidationError):
        g.add_edge(1, 1)
    with pytest.raises(GraphValidationError):
        g.add_edge(1, 0)
    g.validate()


def test_neighbors_are_sorted_and_symmetric() -> None:
    """Test adjacency ordering and symmetry."""
    g = SpatialGraph.from_data([(0, 0), (1, 0), (0, 1), (1, 1)], [(0, 3), (0, 1), (2, 0)])
    assert g.neighbors(0) == [1, 2, 3]
    assert g.neighbors(3) == [0]
    assert g.degree(0) == 3


def test_connected_components() -> None:
    """Test component grouping."""
    g = SpatialGraph.from_data([(0, 0), (1, 0), (5, 5), (6, 5), (9, 9)], [(0, 1), (2, 3)])
    assert g.connected_components() == [[0, 1], [2, 3], [4]]


def test_relabeled_and_translated() -> None:
    """Test derived graphs keep geometry and structure."""
    g = chain(3)
    r = g.relabeled([2, 0, 1])
    assert r.position(0) == (20.0, 0.0)
    assert r.edges() == [(0, 2), (1, 2)]
    t = g.translated(5.0, -1.0)
    assert t.position(2) == (25.0, -1.0)
    with pytest.raises(UsageError):
        g.relabeled([0, 0, 1])


def test_resampled() -> None:
    """Test that long edges are subdivided."""
    g = SpatialGraph.from_data([(0, 0), (25, 0)], [(0, 1)])
    r = g.resampled(10.0)
    assert r.vertex_count == 4
    assert r.edge_count == 3
    assert r.position(0) == (0.0, 0.0)
    assert r.position(1) == (25.0, 0.0)
    assert math.isclose(r.total_length(), 25.0)
    assert all(r.edge_length(u, v) <= 10.0 for u, v in r.edges())


def test_networkx_round_trip() -> None:
    """Test conversion to and from networkx."""
    g = chain(4)
    ng = g.to_networkx()
    assert ng.number_of_edges() == 3
    assert ng.edges[0, 1]["length"] == 10.0
    back = SpatialGraph.from_networkx(ng)
    assert save_graph(back) == save_graph(g)


def test_from_networkx_compacts_labels() -> None:
    """Test that sparse node labels become dense ids."""
    ng = nx.Graph()
    ng.add_node(10, pos=(0.0, 0.0))
    ng.add_node(4, pos=(3.0, 4.0))
    ng.add_edge(10, 4)
    g = SpatialGraph.from_networkx(ng)
    assert g.position(0) == (3.0, 4.0)
    assert g.edges() == [(0, 1)]


def test_bounding_box() -> None:
    """Test degenerate boxes and around()."""
    with pytest.raises(UsageError, match="Degenerate"):
        BoundingBox(0, 0, 0, 5)
    box = BoundingBox.around([(0, 0), (10, 4)], 2.0)
    assert box.as_list() == [-2.0, -2.0, 12.0, 6.0]
    assert box.contains((0.0, 5.0))
    assert not box.contains((13.0, 0.0))


def test_grid_index_radius_zero_and_far() -> None:
    """Test exact-point and empty queries."""
    index = grid_index(chain(5), 3.0)
    assert index.vertices_within((20.0, 0.0), 0.0) == [2]
    assert index.vertices_within((500.0, 500.0), 10.0) == []
    assert index.nearest((500.0, 500.0), 10.0) is None


def test_grid_index_matches_linear_scan() -> None:
    """Test radius queries against brute force."""
    gen = np.random.default_rng(7)
    points = gen.uniform(-100, 100, size=(1000, 2))
    g = SpatialGraph.from_data([tuple(p) for p in points], [])
    index = grid_index(g, 7.5)
    for q in gen.uniform(-110, 110, size=(100, 2)):
        r = float(gen.uniform(0, 30))
        expected = [i for i, p in enumerate(points) if math.hypot(*(p - q)) <= r]
        assert index.vertices_within((q[0], q[1]), r) == expected


def test_grid_index_nearest_tie() -> None:
    """Test that equidistant vertices resolve to the lowest id."""
    g = SpatialGraph.from_data([(2, 0), (-2, 0)], [])
    assert grid_index(g, 1.0).nearest((0.0, 0.0), 5.0) == 0


def test_bounded_graph_distance_trivial() -> None:
    """Test source==target and a single edge."""
    g = SpatialGraph.from_data([(0, 0), (10, 0)], [(0, 1)])
    assert bounded_graph_distance(g, 0, 0, 72.0) == 0.0
    assert bounded_graph_distance(g, 0, 1, 72.0) == 10.0
    assert bounded_graph_distance(g, 0, 1, 9.9) is None


def test_bounded_graph_distance_disconnected() -> None:
    """Test unreachable targets."""
    g = SpatialGraph.from_data([(0, 0), (1, 0)], [])
    assert bounded_graph_distance(g, 0, 1, 1e9) is None


def test_bounded_graph_distance_matches_dijkstra() -> None:
    """Test against unbounded networkx Dijkstra clipped at the limit."""
    gen = np.random.default_rng(3)
    for seed in range(10):
        g = random_graph(seed)
        lengths = nx.single_source_dijkstra_path_length(g.to_networkx(), 0, weight="length")
        limit = float(gen.uniform(20, 300))
        for target in g.vertices():
            got = bounded_graph_distance(g, 0, target, limit)
            exact = lengths.get(target)
            if exact is not None and exact <= limit:
                assert got is not None and math.isclose(got, exact)
            else:
                assert got is None
            back = bounded_graph_distance(g, target, 0, limit)
            if got is not None and back is not None:
                assert math.isclose(got, back)


def test_bounded_distances_respects_limit() -> None:
    """Test that the search stops at the limit."""
    dist = bounded_distances(chain(6), 0, 25.0)
    assert dist == {0: 0.0, 1: 10.0, 2: 20.0}


def test_bounded_search_paths_and_gate() -> None:
    """Test shortest paths and an edge gate that forces a detour."""
    g = SpatialGraph.from_data(
        [(0.0, 0.0), (10.0, 0.0), (20.0, 0.0), (10.0, 10.0)],
        [(0, 1), (1, 2), (0, 3), (3, 2)],
    )
    dist, paths = bounded_search(g, 0, 100.0)
    assert paths[2] == [0, 1, 2]
    assert dist[2] == 20.0

    dist, paths = bounded_search(g, 0, 100.0, allowed=lambda u, v: {u, v} != {1, 2})
    assert paths[2] == [0, 3, 2]
    assert dist[2] == pytest.approx(2 * math.hypot(10.0, 10.0))
    assert dist[1] == 10.0

    dist, _ = bounded_search(g, 0, 25.0, allowed=lambda u, v: {u, v} != {1, 2})
    assert 2 not in dist


def test_view_tracks_the_live_graph() -> None:
    """Test that the networkx view follows edits and cannot be mutated."""
    g = chain(3)
    view = g.view()
    g.add_edge(0, 2)
    assert view.has_edge(0, 2)
    assert view.edges[0, 2]["length"] == 20.0
    assert view.nodes[1]["pos"] == (10.0, 0.0)
    with pytest.raises(nx.NetworkXError):
        view.add_edge(0, 1)


def test_random_walk_isolated_and_forced() -> None:
    """Test trivial walks."""
    assert random_walk(SpatialGraph.from_data([(0, 0)], []), 0, 10, 1) == [0]
    assert random_walk(chain(5), 0, 10, 1) == [0, 1, 2, 3, 4]
    assert random_walk(chain(5), 0, 3, 1) == [0, 1, 2]


def test_random_walk_is_simple_path() -> None:
    """Test the simple-path property over random graphs and seeds."""
    for seed in range(10):
        g = random_graph(seed, n=20)
        for start in range(0, 20, 4):
            path = random_walk(g, start, 10, seed)
            assert path[0] == start
            assert len(path) <= 10
            assert len(set(path)) == len(path)
            assert all(g.has_edge(a, b) for a, b in zip(path, path[1:]))


def test_random_walk_is_seeded() -> None:
    """Test reproducibility from an integer seed."""
    g = random_graph(1, n=20)
    assert random_walk(g, 0, 10, 42) == random_walk(g, 0, 10, 42)


def test_random_walk_rejects_bad_arguments() -> None:
    """Test argument validation."""
    with pytest.raises(UsageError):
        random_walk(chain(2), 0, 0)
    with pytest.raises(UsageError):
        random_walk(chain(2), 9, 3)


def test_junctions() -> None:
    """Test degree >= 3 detection."""
    assert junctions(chain(5)) == []
    star = SpatialGraph.from_data([(0, 0), (1, 0), (0, 1), (-1, 0)], [(0, 1), (0, 2), (0, 3)])
    assert junctions(star) == [0]
    g = random_graph(2)
    assert junctions(g) == [v for v in g.vertices() if len(g.neighbors(v)) >= 3]


def test_project_to_segment() -> None:
    """Test clamped projections."""
    assert project_to_segment((5.0, 3.0), (0.0, 0.0), (10.0, 0.0)) == (3.0, 0.5)
    dist, t = project_to_segment((-4.0, 3.0), (0.0, 0.0), (10.0, 0.0))
    assert (dist, t) == (5.0, 0.0)


def test_nearest_edge_point() -> None:
    """Test projection onto the closest edge."""
    g = SpatialGraph.from_data([(0, 0), (10, 0), (10, 10)], [(0, 1), (1, 2)])
    proj = nearest_edge_point(g, (4.0, 2.0), 5.0)
    assert proj is not None
    assert proj.edge == (0, 1)
    assert math.isclose(proj.t, 0.4)
    assert proj.point == (4.0, 0.0)
    assert nearest_edge_point(g, (4.0, 8.0), 5.0) is None
    assert nearest_edge_point(SpatialGraph(), (0.0, 0.0), 5.0) is None
