# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Raster grids and their file codecs.

Pixel (row, col) has its centre at ``origin + (col * resolution, row *
resolution)``; rows grow with y.
"""

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from mapinfer.exceptions import DataError, UsageError
from mapinfer.geograph import BoundingBox, Point
from mapinfer.loader import write_bytes_atomic
from mapinfer.logging import get_logger

logger = get_logger("raster")

MAXVAL = 65535


@dataclass
class RasterGrid:
    """2-D scalar grid, or a stack of channels with shape (H, W, C)."""

    values: NDArray[np.float64]
    resolution: float
    origin: Point = (0.0, 0.0)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim not in (2, 3):
            raise UsageError(f"Raster values must be 2-D or 3-D, got {self.values.ndim}-D")
        if not self.resolution > 0:
            raise UsageError("Raster resolution must be positive")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @classmethod
    def covering(
        cls, bbox: BoundingBox, resolution: float, channels: int = 0
    ) -> "RasterGrid":
        """Zero grid whose pixel centres cover bbox."""
        width = int(np.ceil(bbox.width / resolution)) + 1
        height = int(np.ceil(bbox.height / resolution)) + 1
        shape: tuple[int, ...] = (height, width) if channels == 0 else (height, width, channels)
        return cls(np.zeros(shape), resolution, (bbox.min_x, bbox.min_y))

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.values.ndim == 2 else int(self.values.shape[2])

    def pixel_center(self, row: int, col: int) -> Point:
        return (
            self.origin[0] + col * self.resolution,
            self.origin[1] + row * self.resolution,
        )

    def world_to_pixel(self, point: Point) -> tuple[float, float]:
        """Fractional (row, col) of a world point."""
        return (
            (point[1] - self.origin[1]) / self.resolution,
            (point[0] - self.origin[0]) / self.resolution,
        )

    def pixel_coordinates(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """World x and y of every pixel centre, each shaped (H, W)."""
        xs = self.origin[0] + np.arange(self.width) * self.resolution
        ys = self.origin[1] + np.arange(self.height) * self.resolution
        gx, gy = np.meshgrid(xs, ys)
        return gx, gy

    def bounds(self) -> BoundingBox:
        half = self.resolution / 2
        return BoundingBox(
            self.origin[0] - half,
            self.origin[1] - half,
            self.origin[0] + (self.width - 1) * self.resolution + half,
            self.origin[1] + (self.height - 1) * self.resolution + half,
        )

    def sample(
        self, xs: NDArray[np.float64], ys: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """Nearest-pixel values at world coordinates; zero outside the grid."""
        cols = np.rint((np.asarray(xs) - self.origin[0]) / self.resolution).astype(np.int64)
        rows = np.rint((np.asarray(ys) - self.origin[1]) / self.resolution).astype(np.int64)
        valid = (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)
        out = np.zeros(rows.shape + self.values.shape[2:], dtype=np.float64)
        out[valid] = self.values[rows[valid], cols[valid]]
        return out

    def crop(
        self, center: Point, d: int, resolution: Optional[float] = None
    ) -> NDArray[np.float64]:
        """d x d window whose pixel (d//2, d//2) sits on center."""
        res = self.resolution if resolution is None else resolution
        offsets = (np.arange(d) - d // 2) * res
        xs = np.broadcast_to(center[0] + offsets[None, :], (d, d))
        ys = np.broadcast_to(center[1] + offsets[:, None], (d, d))
        return self.sample(xs, ys)

    def channel(self, index: int) -> "RasterGrid":
        if self.values.ndim == 2:
            if index != 0:
                raise UsageError(f"Channel {index} out of range for a single-channel grid")
            return self
        return RasterGrid(self.values[:, :, index], self.resolution, self.origin)


# -- PGM / PPM ----------------------------------------------------------------


def encode_pnm(grid: RasterGrid) -> bytes:
    """16-bit binary PGM (1 channel) or PPM (3 channels) with metadata comments."""
    if grid.channels == 1:
        magic = b"P5"
    elif grid.channels == 3:
        magic = b"P6"
    else:
        raise UsageError(f"PNM output needs 1 or 3 channels, got {grid.channels}")
    header = (
        f"{magic.decode()}\n"
        f"# resolution={grid.resolution!r}\n"
        f"# origin={grid.origin[0]!r},{grid.origin[1]!r}\n"
        f"{grid.width} {grid.height}\n{MAXVAL}\n"
    ).encode("ascii")
    levels = np.rint(np.clip(grid.values, 0.0, 1.0) * MAXVAL).astype(">u2")
    return header + levels.tobytes()


def decode_pnm(data: bytes) -> RasterGrid:
    """Parse a binary PGM/PPM; resolution and origin come from its comments."""
    tokens: list[bytes] = []
    meta: dict[str, str] = {}
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise DataError("Truncated PNM header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            end = len(data) if end < 0 else end
            key, _, value = data[pos + 1 : end].decode("ascii", "replace").strip().partition("=")
            meta[key.strip()] = value.strip()
            pos = end
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1

    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise DataError(f"Unsupported PNM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
        resolution = float(meta.get("resolution", "1.0"))
        ox, oy = (float(v) for v in meta.get("origin", "0,0").split(","))
    except ValueError as e:
        raise DataError(f"Malformed PNM header: {e}") from e
    if not (0 < maxval <= MAXVAL):
        raise DataError(f"Unsupported PNM maxval {maxval}")

    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    if len(data) - pos < count * dtype.itemsize:
        raise DataError("Truncated PNM pixel data")
    levels = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    shape: tuple[int, ...] = (height, width) if channels == 1 else (height, width, 3)
    return RasterGrid(levels.reshape(shape) / maxval, resolution, (ox, oy))


# -- files --------------------------------------------------------------------


def load_raster(path: Path, resolution: float = 1.0, origin: Point = (0.0, 0.0)) -> RasterGrid:
    """Read a PGM/PPM (metadata from the header) or a PNG (metadata from args)."""
    if not path.exists():
        raise DataError(f"Raster file not found: {path}")
    data = path.read_bytes()
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return decode_pnm(data)
    try:
        with Image.open(io.BytesIO(data)) as image:
            mode = image.mode
            array = np.asarray(image)
    except OSError as e:
        raise DataError(f"Cannot decode image {path}: {e}") from e
    scale = MAXVAL if mode.startswith("I") else 255
    if array.ndim == 3 and array.shape[2] == 4:
        array = array[:, :, :3]
    logger.debug(f"Imported {mode} image {path} with shape {array.shape}")
    return RasterGrid(array.astype(np.float64) / scale, resolution, origin)


def to_image(grid: RasterGrid) -> Image.Image:
    """8-bit Pillow image of a 1- or 3-channel grid."""
    levels = np.rint(np.clip(grid.values, 0.0, 1.0) * 255).astype(np.uint8)
    return Image.fromarray(levels)


def save_raster(path: Path, grid: RasterGrid) -> None:
    """Write a raster atomically; ``.pgm``/``.ppm`` are 16-bit and lossless."""
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        write_bytes_atomic(path, encode_pnm(grid))
        return
    buffer = io.BytesIO()
    to_image(grid).save(buffer, format="PNG")
    write_bytes_atomic(path, buffer.getvalue())
