"""Tests for CLI module."""

import logging
import math
import sys
from pathlib import Path
from unittest.mock import patch

import pytest

from mapinfer.cli import main, read_graph, read_seeds, threshold_of
from mapinfer.exceptions import DataError
from mapinfer.geograph import SpatialGraph, save_graph
from mapinfer.logging import get_logger, setup_logging
from mapinfer.metrics import hausdorff_distance, junction_metric
from mapinfer.raster import load_raster
from mapinfer.toy import ToyDecider
from mapinfer.tracer import read_trace


def run_cli(*args: str) -> None:
    with patch.object(sys, "argv", ["mapinfer", *args]):
        main()


def exit_code(*args: str) -> object:
    with pytest.raises(SystemExit) as exc_info:
        run_cli(*args)
    return exc_info.value.code


@pytest.fixture
def world(tmp_path: Path) -> Path:
    out = tmp_path / "world"
    run_cli("synth", "--seed", "1", "--style", "ring", "--extent", "200", "-o", str(out))
    return out


def test_cli_synth(world: Path) -> None:
    """Test that synth writes the ground truth and both rasters."""
    gt = read_graph(world / "gt.graph")
    assert gt.vertex_count == 25
    probability = load_raster(world / "probability.pgm")
    imagery = load_raster(world / "imagery.ppm")
    assert probability.values.shape == (201, 201)
    assert imagery.channels == 3


def test_cli_postprocess(world: Path, tmp_path: Path) -> None:
    """Test the segmentation baseline with stage dumps."""
    out = tmp_path / "skeleton.graph"
    stages = tmp_path / "stages"
    run_cli(
        "postprocess",
        "--probability", str(world / "probability.pgm"),
        "--dump-stages", str(stages),
        "--gt", str(world / "gt.graph"),
        "-o", str(out),
    )
    graph = read_graph(out)
    assert graph.vertex_count > 0
    assert (stages / "skeleton.pgm").exists()
    assert (stages / "simplified.graph").exists()


def test_cli_trace_with_oracle(world: Path, tmp_path: Path) -> None:
    """Test that an oracle trace of the ring world closes the ring once and stays on the roads."""
    out = tmp_path / "run"
    run_cli("trace", "--decider", "oracle", "--gt", str(world / "gt.graph"), "-o", str(out))
    gt = read_graph(world / "gt.graph")
    inferred = read_graph(out / "inferred.graph")
    assert inferred.edge_count == inferred.vertex_count
    assert len(inferred.connected_components()) == 1
    assert hausdorff_distance(gt, inferred) <= 12.0
    assert junction_metric(gt, inferred).f_correct > 0.0
    assert (out / "trace.txt").read_text().startswith("0 start")


def test_cli_trace_search_options(world: Path, tmp_path: Path) -> None:
    """Test that --D --T --a --d --max-steps and --seed-file reach the search."""
    gt = read_graph(world / "gt.graph")
    x, y = gt.position(0)
    seeds = tmp_path / "seeds.txt"
    seeds.write_text(f"{x!r} {y!r}\n")
    out = tmp_path / "run"
    run_cli(
        "trace", "--decider", "oracle", "--gt", str(world / "gt.graph"),
        "--D", "10", "--T", "0.4", "--a", "8", "--d", "64", "--max-steps", "5",
        "--seed-file", str(seeds), "-o", str(out),
    )
    records = read_trace((out / "trace.txt").read_text())
    assert len(records) == 6
    assert (records[0].action, records[0].x, records[0].y) == ("start", x, y)
    assert records[1].action == "add"
    assert records[1].bucket is not None and 0 <= records[1].bucket < 8
    assert math.hypot(records[1].x - x, records[1].y - y) == pytest.approx(10.0)


def test_cli_trace_rejects_bad_window(world: Path, tmp_path: Path) -> None:
    """Test that --d is validated as the window size."""
    args = ("trace", "--decider", "oracle", "--gt", str(world / "gt.graph"), "-o", str(tmp_path / "run"))
    assert exit_code(*args, "--d", "0") == 1
    assert exit_code(*args, "--max-steps", "0") == 1


def test_cli_trace_threshold_sweep(world: Path, tmp_path: Path) -> None:
    """Test that several thresholds write one graph each."""
    out = tmp_path / "run"
    run_cli(
        "trace", "--decider", "oracle", "--gt", str(world / "gt.graph"),
        "--T", "0.3", "0.5", "--workers", "2", "-o", str(out),
    )
    assert (out / "inferred_T0.30.graph").exists()
    assert (out / "trace_T0.50.txt").exists()


def test_cli_eval_single_and_sweep(world: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Test report files for one inferred graph and for a threshold family."""
    reports = tmp_path / "reports"
    gt = str(world / "gt.graph")
    run_cli("eval", "--gt", gt, gt, "--metric", "junction", "-o", str(reports))
    table = (reports / "junction.tsv").read_text()
    assert table.splitlines()[0].startswith("graph\tF_correct")
    assert table in capsys.readouterr().out

    family = []
    for t in ("0.30", "0.50"):
        path = tmp_path / f"inferred_T{t}.graph"
        path.write_text((world / "gt.graph").read_text())
        family.append(str(path))
    run_cli("eval", "--gt", gt, *family, "--metric", "sp", "-o", str(reports))
    rows = (reports / "sp_sweep.tsv").read_text().splitlines()
    assert rows[0].startswith("threshold\trecall\terror")
    assert [row.split("\t")[0] for row in rows[1:]] == ["0.300000", "0.500000"]


def test_cli_render(world: Path, tmp_path: Path) -> None:
    """Test an SVG overlay over the imagery."""
    out = tmp_path / "overlay.svg"
    run_cli(
        "render", "--gt", str(world / "gt.graph"), "--underlay", str(world / "imagery.ppm"),
        "--resolution", "2", "-o", str(out),
    )
    text = out.read_text()
    assert "data:image/png;base64," in text
    assert text.count("<line ") == 25


def test_cli_labels_and_train(world: Path, tmp_path: Path) -> None:
    """Test static label export followed by toy training on the file."""
    labels = tmp_path / "labels.jsonl"
    weights = tmp_path / "toy.json"
    run_cli("labels", "--gt", str(world / "gt.graph"), "--count", "3", "-o", str(labels))
    assert len(labels.read_text().splitlines()) == 3
    run_cli("train", "--labels", str(labels), "--epochs", "2", "-o", str(weights))
    assert ToyDecider.load(weights.read_text()).a == 64


def test_cli_dynamic_labels(world: Path, tmp_path: Path) -> None:
    """Test labels recorded from oracle-driven sessions."""
    labels = tmp_path / "dynamic.jsonl"
    run_cli(
        "--set", "toy.sessions=1", "--set", "oracle.session_steps=10",
        "labels", "--gt", str(world / "gt.graph"), "--mode", "dynamic", "-o", str(labels),
    )
    assert 0 < len(labels.read_text().splitlines()) <= 10


def test_cli_train_needs_input() -> None:
    """Test that train without labels or ground truth is a usage error."""
    assert exit_code("train", "-o", "toy.json") == 1


def test_cli_config(capsys: pytest.CaptureFixture[str]) -> None:
    """Test that config prints overrides."""
    run_cli("--set", "tracer.D=10", "config")
    out = capsys.readouterr().out
    assert "tracer.D=10.0\n" in out
    assert "metrics.match_radius=12.0\n" in out


def test_cli_verbose_flag(tmp_path: Path) -> None:
    """Test CLI with verbose flag enables debug logging."""
    run_cli("-v", "synth", "--style", "ring", "--extent", "200", "-o", str(tmp_path / "w"))
    assert (tmp_path / "w" / "gt.graph").exists()


def test_cli_invalid_style() -> None:
    """Test that usage errors exit with status 1."""
    assert exit_code("synth", "--style", "hexagonal") == 1


def test_cli_render_needs_output() -> None:
    """Test the required -o of render."""
    assert exit_code("render", "--gt", "gt.graph") == 1


def test_cli_unknown_config_key() -> None:
    """Test that bad overrides are configuration errors."""
    assert exit_code("--set", "tracer.speed=3", "config") == 1


def test_cli_missing_file(tmp_path: Path) -> None:
    """Test that unreadable inputs exit with status 2."""
    missing = str(tmp_path / "missing.graph")
    assert exit_code("eval", "--gt", missing, missing) == 2


def test_cli_malformed_graph(tmp_path: Path) -> None:
    """Test that data errors exit with status 2."""
    bad = tmp_path / "bad.graph"
    bad.write_text("not a graph\n")
    assert exit_code("eval", "--gt", str(bad), str(bad)) == 2


def test_cli_unknown_decider(tmp_path: Path) -> None:
    """Test that an unknown decider name is a usage error."""
    gt = tmp_path / "gt.graph"
    gt.write_text(save_graph(SpatialGraph.from_data([(0.0, 0.0), (50.0, 0.0)], [(0, 1)])))
    assert exit_code("trace", "--decider", "magic", "--gt", str(gt), "-o", str(tmp_path / "run")) == 1


def test_read_seeds(tmp_path: Path) -> None:
    """Test the seed file format."""
    seeds = tmp_path / "seeds.txt"
    seeds.write_text("# starts\n10 20\n\n30.5 -4  # second\n")
    assert read_seeds(seeds) == [(10.0, 20.0), (30.5, -4.0)]
    seeds.write_text("10 20 30\n")
    with pytest.raises(DataError, match="line 1"):
        read_seeds(seeds)


def test_threshold_of() -> None:
    """Test threshold parsing from file names."""
    assert threshold_of(Path("runs/inferred_T0.45.graph"), 0.0) == 0.45
    assert threshold_of(Path("runs/skeleton.graph"), 2.0) == 2.0


def test_cli_log_level_per_stage(tmp_path: Path) -> None:
    """Test that --log-level quiets one stage and rejects unknown levels."""
    out = tmp_path / "world"
    run_cli("--log-level", "tracer=warning", "synth", "--seed", "2", "--extent", "100", "-o", str(out))
    assert get_logger("tracer").level == logging.WARNING
    assert get_logger("oracle").level == logging.NOTSET

    assert exit_code("--log-level", "tracer=chatty", "config") == 1
    assert exit_code("--log-level", "tracer", "config") == 1
    setup_logging()
