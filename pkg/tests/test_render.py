"""Tests for map overlays."""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from mapinfer.exceptions import UsageError
from mapinfer.geograph import BoundingBox, SpatialGraph
from mapinfer.oracle import OracleDecider, OracleState
from mapinfer.raster import RasterGrid
from mapinfer.render import (
    BACKGROUND,
    GT_COLOR,
    INFERRED_COLOR,
    Layer,
    MapRenderer,
    overlay_layers,
    render_bounds,
)
from mapinfer.tracer import run_search

BOX = BoundingBox(0.0, 0.0, 20.0, 10.0)


def horizontal() -> SpatialGraph:
    return SpatialGraph.from_data([(0.0, 5.0), (20.0, 5.0)], [(0, 1)])


def test_to_pixel() -> None:
    """Test the world to image mapping."""
    renderer = MapRenderer(BoundingBox(10.0, 20.0, 30.0, 40.0), resolution=2.0)
    assert renderer.to_pixel((14.0, 26.0)) == (2.0, 3.0)
    assert (renderer.width, renderer.height) == (11, 11)
    with pytest.raises(UsageError):
        MapRenderer(BOX, resolution=0.0)


def test_empty_image_is_background() -> None:
    """Test that no layers leave only background."""
    img = MapRenderer(BOX).image([])
    assert img.size == (21, 11)
    assert set(img.getdata()) == {BACKGROUND}


def test_image_draws_layers() -> None:
    """Test that edges land on the expected pixels."""
    img = MapRenderer(BOX).image([Layer("gt", horizontal(), GT_COLOR, 1.0)])
    assert img.getpixel((10, 5)) == GT_COLOR
    assert img.getpixel((10, 0)) == BACKGROUND


def test_image_over_underlay() -> None:
    """Test that a raster underlay replaces the background."""
    underlay = RasterGrid(np.ones((11, 21)), 1.0)
    img = MapRenderer(BOX).image([], underlay)
    assert img.getpixel((0, 0)) == (255, 255, 255)


def test_svg_lists_segments() -> None:
    """Test the SVG template output."""
    g = SpatialGraph.from_data([(0.0, 0.0), (10.0, 0.0), (10.0, 10.0)], [(0, 1), (1, 2)])
    text = MapRenderer(BOX).svg(overlay_layers(horizontal(), [g]), title="demo")
    assert text.count("<line ") == 3
    assert 'stroke="#0066ff"' in text
    assert 'stroke="#ffdd00"' in text
    assert "<title>demo</title>" in text
    assert 'x1="0.00" y1="5.00" x2="20.00" y2="5.00"' in text


def test_save_by_suffix(tmp_path: Path) -> None:
    """Test SVG, PNG and PPM output and the unsupported-suffix error."""
    renderer = MapRenderer(BOX)
    layers = overlay_layers(horizontal(), [])
    renderer.save(tmp_path / "map.svg", layers)
    renderer.save(tmp_path / "map.png", layers)
    renderer.save(tmp_path / "map.ppm", layers)
    assert (tmp_path / "map.svg").read_text().startswith("<?xml")
    with Image.open(tmp_path / "map.png") as img:
        assert img.size == (21, 11)
    with Image.open(tmp_path / "map.ppm") as img:
        assert img.getpixel((10, 5)) == GT_COLOR
    with pytest.raises(UsageError, match="Unsupported image format"):
        renderer.save(tmp_path / "map.jpg", layers)


def test_frames_per_step(tmp_path: Path) -> None:
    """Test that every non-start trace record gets a frame."""
    gt = SpatialGraph.from_data([(0.0, 0.0), (60.0, 0.0)], [(0, 1)])
    bbox = BoundingBox(-20.0, -20.0, 80.0, 20.0)
    result = run_search((0.0, 0.0), bbox, OracleDecider(OracleState.from_ground_truth(gt), rng=0))
    paths = MapRenderer(bbox).frames(result.trace, tmp_path, gt=gt)
    assert len(paths) == len(result.trace) - 1
    assert paths[0].name == "frame_00000.png"
    assert all(p.exists() for p in paths)


def test_render_bounds() -> None:
    """Test overlay extents with and without geometry."""
    assert render_bounds([]) == BoundingBox(0.0, 0.0, 20.0, 20.0)
    assert render_bounds([horizontal()], margin=5.0) == BoundingBox(-5.0, 0.0, 25.0, 10.0)
    underlay = RasterGrid(np.zeros((3, 4)), 2.0, (1.0, 1.0))
    assert render_bounds([horizontal()], underlay) == underlay.bounds()


def test_overlay_layers() -> None:
    """Test layer naming and colours."""
    layers = overlay_layers(horizontal(), [SpatialGraph(), SpatialGraph()])
    assert [layer.name for layer in layers] == ["gt", "inferred0", "inferred1"]
    assert layers[1].color == INFERRED_COLOR
    assert overlay_layers(None, []) == []
