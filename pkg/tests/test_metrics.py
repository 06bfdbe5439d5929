"""Tests for the map comparison metrics."""

import math

import numpy as np
import pytest

from mapinfer.exceptions import UsageError
from mapinfer.geograph import SpatialGraph
from mapinfer.metrics import (
    JunctionReport,
    SPReport,
    angle_difference,
    best_threshold,
    branch_bearings,
    classify_path,
    hausdorff_distance,
    junction_metric,
    reachable_holes,
    report_tsv,
    run_metric,
    sp_metric,
    sweep,
    sweep_tsv,
    topo,
)
from mapinfer.models import MetricsConfig, WorldSpec
from mapinfer.oracle import jitter_graph
from mapinfer.synthworld import gen_network, lattice


def star(center: tuple[float, float], bearings: list[float], arm: float = 50.0) -> SpatialGraph:
    cx, cy = center
    points = [center] + [(cx + arm * math.cos(b), cy + arm * math.sin(b)) for b in bearings]
    return SpatialGraph.from_data(points, [(0, i) for i in range(1, len(points))])


CROSS = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]
TEE = [0.0, math.pi / 2, math.pi]


def test_angle_difference_wraps() -> None:
    """Test wrap-around of angle differences."""
    assert angle_difference(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    assert angle_difference(0.0, math.pi) == pytest.approx(math.pi)


def test_branch_bearings_follow_chains() -> None:
    """Test that a bent branch is measured at its far end within reach."""
    g = SpatialGraph.from_data([(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)], [(0, 1), (1, 2)])
    assert branch_bearings(g, 0, 5.0) == [0.0]
    assert branch_bearings(g, 0, 24.0) == [pytest.approx(math.pi / 4)]


def test_junction_metric_self_comparison() -> None:
    """Test that a map compared with itself is perfect."""
    g = star((0.0, 0.0), CROSS)
    report = junction_metric(g, g)
    assert report.f_correct == 1.0
    assert report.f_error == 0.0
    assert len(report.pairs) == 1


def test_junction_metric_missing_branch() -> None:
    """Test a four-way junction inferred as a T."""
    report = junction_metric(star((0.0, 0.0), CROSS), star((2.0, 1.0), TEE))
    assert report.f_correct == pytest.approx(0.75)
    assert report.f_error == pytest.approx(0.0)


def test_junction_metric_spurious_junction() -> None:
    """Test that an unpaired inferred junction counts as one error."""
    gt = star((0.0, 0.0), CROSS)
    inferred = star((0.0, 0.0), CROSS)
    extra = star((500.0, 500.0), TEE)
    base = inferred.vertex_count
    for v in extra.vertices():
        inferred.add_vertex(*extra.position(v))
    for u, v in extra.edges():
        inferred.add_edge(base + u, base + v)
    report = junction_metric(gt, inferred)
    assert report.f_correct == 1.0
    assert report.f_error == pytest.approx(0.5)
    assert report.unpaired_inferred == 1


def test_junction_metric_empty_inferred() -> None:
    """Test that an empty inferred map captures nothing."""
    report = junction_metric(star((0.0, 0.0), CROSS), SpatialGraph())
    assert report.f_correct == 0.0
    assert report.f_error == 0.0
    assert report.unpaired_gt == 1


def test_junction_metric_without_junctions() -> None:
    """Test the vacuous case of a ground truth with no junctions."""
    road = SpatialGraph.from_data([(0.0, 0.0), (100.0, 0.0)], [(0, 1)])
    assert junction_metric(road, road).f_correct == 1.0


def test_reachable_holes_on_a_single_road() -> None:
    """Test hole placement along one edge."""
    road = SpatialGraph.from_data([(0.0, 0.0), (100.0, 0.0)], [(0, 1)])
    holes = reachable_holes(road, (0, 1), 0.5, drive_dist=30.0, interval=6.0)
    assert sorted(x for x, _ in holes) == pytest.approx([20, 26, 32, 38, 44, 50, 56, 62, 68, 74, 80])


def test_reachable_holes_cross_vertices() -> None:
    """Test that driving continues through a vertex onto the next edge."""
    road = SpatialGraph.from_data([(0.0, 0.0), (10.0, 0.0), (40.0, 0.0)], [(0, 1), (1, 2)])
    holes = reachable_holes(road, (0, 1), 0.0, drive_dist=30.0, interval=6.0)
    assert sorted(x for x, _ in holes) == pytest.approx([0, 6, 12, 18, 24, 30])


def test_topo_self_comparison() -> None:
    """Test that TOPO of a map against itself is perfect."""
    g = lattice(3, 100.0, (100.0, 100.0))
    report = topo(g, g, seeds=10, rng=1)
    assert report.precision == pytest.approx(1.0, abs=0.02)
    assert report.recall == pytest.approx(1.0, abs=0.02)
    assert report.paired_seeds == 10


def test_topo_missing_half() -> None:
    """Test that a map with half the road keeps precision but loses recall."""
    gt = SpatialGraph.from_data([(0.0, 0.0), (100.0, 0.0), (200.0, 0.0)], [(0, 1), (1, 2)])
    half = SpatialGraph.from_data([(0.0, 0.0), (100.0, 0.0)], [(0, 1)])
    report = topo(gt, half, seeds=20, rng=2)
    assert report.precision > 0.95
    assert report.recall < 0.7
    assert report.seeds == 20


def test_topo_empty_inferred_and_bad_arguments() -> None:
    """Test TOPO against nothing and its argument checks."""
    gt = lattice(2, 100.0, (0.0, 0.0))
    report = topo(gt, SpatialGraph(), seeds=5)
    assert (report.precision, report.recall, report.paired_seeds) == (0.0, 0.0, 0)
    with pytest.raises(UsageError):
        topo(gt, gt, seeds=0)


def test_classify_path() -> None:
    """Test the four shortest-path outcomes."""
    assert classify_path(100.0, None, 0.05) == "nopath"
    assert classify_path(100.0, 104.0, 0.05) == "correct"
    assert classify_path(100.0, 94.0, 0.05) == "short"
    assert classify_path(100.0, 106.0, 0.05) == "long"


def test_sp_metric_self_comparison() -> None:
    """Test that every path is correct on an identical map."""
    g = lattice(3, 100.0, (0.0, 0.0))
    report = sp_metric(g, g, n_pairs=50)
    assert report.correct == 1.0
    assert report.pairs == 50


def test_sp_metric_shortcut_gives_short_paths() -> None:
    """Test that a spurious shortcut across a U makes paths short."""
    points = [(0.0, 0.0), (0.0, 100.0), (100.0, 100.0), (100.0, 0.0)]
    gt = SpatialGraph.from_data(points, [(0, 1), (1, 2), (2, 3)])
    inferred = SpatialGraph.from_data(points, [(0, 1), (1, 2), (2, 3), (0, 3)])
    report = sp_metric(gt, inferred, n_pairs=200, rng=4)
    assert report.short > 0.0
    assert report.long == 0.0
    assert report.nopath == 0.0
    assert report.correct + report.short == pytest.approx(1.0)


def test_sp_metric_nopath_and_errors() -> None:
    """Test an empty inferred map and a ground truth without paths."""
    g = lattice(2, 100.0, (0.0, 0.0))
    assert sp_metric(g, SpatialGraph(), n_pairs=10).nopath == 1.0
    lonely = SpatialGraph.from_data([(0.0, 0.0)], [])
    with pytest.raises(UsageError, match="two connected"):
        sp_metric(lonely, lonely)
    with pytest.raises(UsageError):
        sp_metric(g, g, n_pairs=0)


def test_sweep_and_best_threshold() -> None:
    """Test threshold ordering and selection of the best shortest-path row."""
    g = lattice(2, 100.0, (0.0, 0.0))
    family = {0.7: SpatialGraph(), 0.3: g, 0.5: g}
    rows = sweep(g, family, lambda gt, inf: sp_metric(gt, inf, n_pairs=20))
    assert [row.threshold for row in rows] == [0.3, 0.5, 0.7]
    assert best_threshold(rows).threshold == 0.3
    assert rows[2].recall == 0.0


def test_sweep_errors() -> None:
    """Test empty sweeps and best_threshold without shortest-path rows."""
    g = star((0.0, 0.0), CROSS)
    with pytest.raises(UsageError):
        sweep(g, {}, junction_metric)
    rows = sweep(g, {0.5: g}, junction_metric)
    with pytest.raises(UsageError):
        best_threshold(rows)


def test_run_metric_dispatch() -> None:
    """Test metric selection by name."""
    g = star((0.0, 0.0), CROSS)
    assert isinstance(run_metric("junction", g, g, MetricsConfig()), JunctionReport)
    assert isinstance(run_metric("sp", g, g, MetricsConfig(sp_pairs=5)), SPReport)
    with pytest.raises(UsageError, match="Unknown metric"):
        run_metric("frechet", g, g, MetricsConfig())


def test_report_tsv_columns() -> None:
    """Test the single-report table layout."""
    text = report_tsv("inferred", SPReport(0.5, 0.25, 0.125, 0.125, 8))
    header, row = text.splitlines()
    assert header.split("\t") == ["graph", "correct", "long", "short", "nopath", "pairs"]
    assert row.split("\t") == ["inferred", "0.500000", "0.250000", "0.125000", "0.125000", "8"]


def test_sweep_tsv_columns() -> None:
    """Test the sweep table layout."""
    g = star((0.0, 0.0), CROSS)
    text = sweep_tsv(sweep(g, {0.4: g}, junction_metric))
    header, row = text.splitlines()
    assert header.split("\t")[:4] == ["threshold", "recall", "error", "F_correct"]
    assert row.split("\t")[:3] == ["0.400000", "1.000000", "0.000000"]
    assert sweep_tsv([]) == ""


def test_hausdorff_distance() -> None:
    """Test the centerline distance on parallel and empty graphs."""
    a = SpatialGraph.from_data([(0.0, 0.0), (100.0, 0.0)], [(0, 1)])
    b = SpatialGraph.from_data([(0.0, 3.0), (100.0, 3.0)], [(0, 1)])
    assert hausdorff_distance(a, b) == pytest.approx(3.0)
    assert hausdorff_distance(a, a) == 0.0
    assert hausdorff_distance(SpatialGraph(), SpatialGraph()) == 0.0
    assert math.isinf(hausdorff_distance(a, SpatialGraph()))


def test_metrics_ignore_vertex_numbering_and_placement() -> None:
    """Test that relabeling either graph or shifting both leaves every metric unchanged."""
    gt = gen_network(WorldSpec(seed=4, style="grid", extent=500.0))
    inferred = jitter_graph(gt, 3.0, rng=1)
    gen = np.random.default_rng(2)
    shuffled_gt = gt.relabeled([int(v) for v in gen.permutation(gt.vertex_count)])
    shuffled_inf = inferred.relabeled([int(v) for v in gen.permutation(inferred.vertex_count)])
    variants = [
        (shuffled_gt, shuffled_inf),
        (gt.translated(1250.0, -730.0), inferred.translated(1250.0, -730.0)),
    ]

    junction = junction_metric(gt, inferred)
    shortest = sp_metric(gt, inferred, n_pairs=50)
    reach = topo(gt, inferred, seeds=20)
    assert 0.0 < junction.f_correct
    for g, i in variants:
        other = junction_metric(g, i)
        assert other.f_correct == pytest.approx(junction.f_correct, abs=1e-9)
        assert other.f_error == pytest.approx(junction.f_error, abs=1e-9)
        assert len(other.pairs) == len(junction.pairs)
        assert sp_metric(g, i, n_pairs=50).row() == pytest.approx(shortest.row(), abs=1e-9)
        other_topo = topo(g, i, seeds=20)
        assert other_topo.precision == pytest.approx(reach.precision, abs=1e-9)
        assert other_topo.recall == pytest.approx(reach.recall, abs=1e-9)
