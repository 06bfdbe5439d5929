# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Map overlays: ground truth in blue, inferred graphs in yellow.

Raster output (PNG/PPM) is drawn with Pillow; SVG output goes through the
packaged Jinja2 template. Pixel (row, col) covers the world point
``bbox.min + (col, row) * resolution``, the same convention as RasterGrid.
"""

import base64
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from jinja2 import Environment, PackageLoader, TemplateNotFound
from PIL import Image, ImageDraw

from mapinfer.exceptions import TemplateError, UsageError
from mapinfer.geograph import BoundingBox, Point, SpatialGraph
from mapinfer.loader import write_bytes_atomic, write_text_atomic
from mapinfer.logging import get_logger
from mapinfer.raster import RasterGrid, to_image
from mapinfer.tracer import TraceRecord, iter_replay

logger = get_logger("render")

GT_COLOR = (0, 102, 255)
INFERRED_COLOR = (255, 221, 0)
MARKER_COLOR = (230, 40, 40)
BACKGROUND = (0, 0, 0)

TEMPLATE_NAME = "overlay.svg.j2"


@dataclass(frozen=True)
class Layer:
    """One graph drawn in one colour."""

    name: str
    graph: SpatialGraph
    color: tuple[int, int, int]
    width: float = 2.0


def render_bounds(
    graphs: Iterable[SpatialGraph], underlay: Optional[RasterGrid] = None, margin: float = 10.0
) -> BoundingBox:
    """Extent of the underlay if given, else of every vertex plus margin."""
    if underlay is not None:
        return underlay.bounds()
    points = [g.position(v) for g in graphs for v in g.vertices()]
    if not points:
        return BoundingBox(0.0, 0.0, 2 * margin, 2 * margin)
    return BoundingBox.around(points, margin)


def _hex(color: tuple[int, int, int]) -> str:
    return "#{:02x}{:02x}{:02x}".format(*color)


class MapRenderer:
    """Render graph layers over an optional raster underlay."""

    def __init__(self, bbox: BoundingBox, resolution: float = 1.0) -> None:
        if resolution <= 0:
            raise UsageError("Render resolution must be positive")
        self.bbox = bbox
        self.resolution = resolution
        self.width = int(math.ceil(bbox.width / resolution)) + 1
        self.height = int(math.ceil(bbox.height / resolution)) + 1

        self.env = Environment(
            loader=PackageLoader("mapinfer", "templates"),
            trim_blocks=True,
            lstrip_blocks=True,
            autoescape=False,
        )
        self.env.filters["num"] = lambda v: f"{v:.2f}"
        try:
            self.template = self.env.get_template(TEMPLATE_NAME)
        except TemplateNotFound as e:
            raise TemplateError(f"Failed to load template {TEMPLATE_NAME}: {e}") from e

    def to_pixel(self, point: Point) -> tuple[float, float]:
        """(x, y) image coordinates of a world point."""
        return (
            (point[0] - self.bbox.min_x) / self.resolution,
            (point[1] - self.bbox.min_y) / self.resolution,
        )

    def segments(self, graph: SpatialGraph) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        return [(self.to_pixel(graph.position(u)), self.to_pixel(graph.position(v))) for u, v in graph.edges()]

    def _underlay_image(self, underlay: RasterGrid) -> Image.Image:
        grid = RasterGrid.covering(self.bbox, self.resolution)
        xs, ys = grid.pixel_coordinates()
        resampled = RasterGrid(underlay.sample(xs, ys), self.resolution, grid.origin)
        return to_image(resampled).convert("RGB")

    def image(
        self,
        layers: Sequence[Layer],
        underlay: Optional[RasterGrid] = None,
        marker: Optional[Point] = None,
    ) -> Image.Image:
        if underlay is not None:
            img = self._underlay_image(underlay)
        else:
            img = Image.new("RGB", (self.width, self.height), BACKGROUND)
        draw = ImageDraw.Draw(img)
        for layer in layers:
            width = max(1, round(layer.width))
            for a, b in self.segments(layer.graph):
                draw.line([a, b], fill=layer.color, width=width)
        if marker is not None:
            x, y = self.to_pixel(marker)
            draw.ellipse([x - 3, y - 3, x + 3, y + 3], fill=MARKER_COLOR)
        return img

    def svg(self, layers: Sequence[Layer], underlay: Optional[RasterGrid] = None, title: str = "map") -> str:
        """Render the layers with the SVG template.

        Raises:
            TemplateError: If rendering fails
        """
        encoded = None
        if underlay is not None:
            buffer = io.BytesIO()
            self._underlay_image(underlay).save(buffer, format="PNG")
            encoded = base64.b64encode(buffer.getvalue()).decode("ascii")
        context: dict[str, Any] = {
            "width": self.width,
            "height": self.height,
            "title": title,
            "background": _hex(BACKGROUND),
            "underlay": encoded,
            "layers": [
                {
                    "name": layer.name,
                    "color": _hex(layer.color),
                    "width": layer.width,
                    "segments": self.segments(layer.graph),
                }
                for layer in layers
            ],
        }
        try:
            return self.template.render(context)
        except Exception as e:
            raise TemplateError(f"Failed to render template: {e}") from e

    def save(self, path: Path, layers: Sequence[Layer], underlay: Optional[RasterGrid] = None) -> None:
        """Write an overlay; the format follows the suffix (.svg, .png or .ppm)."""
        suffix = path.suffix.lower()
        if suffix == ".svg":
            write_text_atomic(path, self.svg(layers, underlay, title=path.stem))
        elif suffix in (".png", ".ppm"):
            buffer = io.BytesIO()
            self.image(layers, underlay).save(buffer, format="PNG" if suffix == ".png" else "PPM")
            write_bytes_atomic(path, buffer.getvalue())
        else:
            raise UsageError(f"Unsupported image format: {path.suffix}")
        logger.info(f"Rendered {path}")

    def frames(
        self,
        records: Sequence[TraceRecord],
        out_dir: Path,
        gt: Optional[SpatialGraph] = None,
        underlay: Optional[RasterGrid] = None,
    ) -> list[Path]:
        """One PNG per search step of a trace, showing the graph as it grew."""
        written = []
        base = [Layer("gt", gt, GT_COLOR)] if gt is not None else []
        for record, graph in iter_replay(records):
            if record.action == "start":
                continue
            img = self.image(base + [Layer("inferred", graph, INFERRED_COLOR)], underlay, (record.x, record.y))
            buffer = io.BytesIO()
            img.save(buffer, format="PNG")
            path = out_dir / f"frame_{len(written):05d}.png"
            write_bytes_atomic(path, buffer.getvalue())
            written.append(path)
        logger.info(f"Wrote {len(written)} frames to {out_dir}")
        return written


def overlay_layers(gt: Optional[SpatialGraph], inferred: Sequence[SpatialGraph]) -> list[Layer]:
    layers = [Layer("gt", gt, GT_COLOR, 3.0)] if gt is not None else []
    layers.extend(Layer(f"inferred{i}", g, INFERRED_COLOR) for i, g in enumerate(inferred))
    return layers
