"""Georeferenced rasters (terrain, building heights, land use) in ESRI ASCII grid format.

Row 0 of a raster is the northernmost row, as in the file format. All
coordinates live in one planar metric frame; nothing here reprojects.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundsError, ConfigError, FormatError, NodataError, TruncationError

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


@dataclass(frozen=True, eq=False)
class RasterGrid:
    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray  # row-major, length ncols * nrows

    def __post_init__(self):
        if self.ncols < 1 or self.nrows < 1:
            raise ConfigError(f"raster needs at least one cell, got {self.ncols}x{self.nrows}")
        if not self.cellsize > 0:
            raise ConfigError(f"cellsize must be positive, got {self.cellsize}")
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != self.ncols * self.nrows:
            raise TruncationError(self.ncols * self.nrows, values.size)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, array, xll=0.0, yll=0.0, cellsize=1.0, nodata=-9999.0) -> RasterGrid:
        """Build a grid from a 2-D array whose first row is the northern edge."""
        array = np.asarray(array, dtype=np.float64)
        nrows, ncols = array.shape
        return cls(ncols, nrows, float(xll), float(yll), float(cellsize), float(nodata), array.ravel())

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.nrows, self.ncols)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)"""
        return (
            self.xll,
            self.yll,
            self.xll + self.ncols * self.cellsize,
            self.yll + self.nrows * self.cellsize,
        )

    def same_frame(self, other: RasterGrid) -> bool:
        return (
            self.ncols == other.ncols
            and self.nrows == other.nrows
            and self.xll == other.xll
            and self.yll == other.yll
            and self.cellsize == other.cellsize
        )

    def contains(self, x, y):
        xmin, ymin, xmax, ymax = self.extent
        return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)

    def cell_index(self, x, y):
        """Row/column of the cell containing (x, y); vectorised, no bounds check.

        Points on the east or north edge belong to the last column/row.
        """
        col = np.floor((np.asarray(x) - self.xll) / self.cellsize).astype(np.int64)
        row_from_bottom = np.floor((np.asarray(y) - self.yll) / self.cellsize).astype(np.int64)
        col = np.minimum(col, self.ncols - 1)
        row_from_bottom = np.minimum(row_from_bottom, self.nrows - 1)
        return self.nrows - 1 - row_from_bottom, col

    def sample(self, x, y) -> np.ndarray:
        """Vectorised nearest-cell lookup. Raises BoundsError on the first outside point."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        inside = self.contains(x, y)
        if not np.all(inside):
            bad = np.flatnonzero(~np.ravel(inside))[0]
            raise BoundsError(float(np.ravel(x)[bad]), float(np.ravel(y)[bad]))
        row, col = self.cell_index(x, y)
        return self.values[row * self.ncols + col]

    def __eq__(self, other):
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return (
            self.same_frame(other)
            and (self.nodata == other.nodata or (math.isnan(self.nodata) and math.isnan(other.nodata)))
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


def value_at(grid: RasterGrid, x: float, y: float) -> float:
    """Value of the cell containing (x, y).

    Raises BoundsError outside the extent and NodataError on nodata cells.
    """
    value = float(grid.sample(x, y))
    if value == grid.nodata:
        raise NodataError(f"nodata at ({x}, {y})")
    return value


def _format_number(v: float) -> str:
    text = repr(float(v))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def load_raster(path) -> RasterGrid:
    with open(path) as fh:
        lines = fh.read().splitlines()
    header: dict[str, str] = {}
    pos = 0
    while pos < len(lines):
        parts = lines[pos].split()
        if not parts:
            pos += 1
            continue
        key = parts[0].lower()
        if key not in HEADER_KEYS and key not in ("xllcenter", "yllcenter"):
            break
        if len(parts) != 2:
            raise FormatError(f"header line {pos + 1} must be 'key value': {lines[pos]!r}")
        header[key] = parts[1]
        pos += 1
    for key in ("xllcenter", "yllcenter"):
        if key in header and key.replace("center", "corner") not in header:
            raise FormatError(f"{key} is not supported; use {key.replace('center', 'corner')}")
    for key in HEADER_KEYS:
        if key not in header:
            raise FormatError(f"missing header key '{key}'")
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        xll, yll, cellsize, nodata = (
            float(header[k]) for k in ("xllcorner", "yllcorner", "cellsize", "nodata_value")
        )
    except ValueError as exc:
        raise FormatError(f"bad header value: {exc}") from None
    tokens = " ".join(lines[pos:]).split()
    if len(tokens) != ncols * nrows:
        raise TruncationError(ncols * nrows, len(tokens))
    try:
        values = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"bad cell value: {exc}") from None
    return RasterGrid(ncols, nrows, xll, yll, cellsize, nodata, values)


def write_raster(grid: RasterGrid, path) -> None:
    rows = grid.array
    out = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {_format_number(grid.xll)}",
        f"yllcorner {_format_number(grid.yll)}",
        f"cellsize {_format_number(grid.cellsize)}",
        f"NODATA_value {_format_number(grid.nodata)}",
    ]
    out.extend(" ".join(_format_number(v) for v in row) for row in rows)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


@dataclass(frozen=True)
class GeoStack:
    """Terrain (DTM), building height (DHM) and land-use class (DLU) rasters on one frame."""

    dtm: RasterGrid
    dhm: RasterGrid
    dlu: RasterGrid
    clutter_count: int

    def __post_init__(self):
        for name in ("dhm", "dlu"):
            if not self.dtm.same_frame(getattr(self, name)):
                raise ConfigError(f"{name} raster frame differs from dtm")
        if self.clutter_count < 1:
            raise ConfigError("clutter_count must be >= 1")
        dhm = self.dhm.values[self.dhm.values != self.dhm.nodata]
        if np.any(dhm < 0):
            raise ConfigError("building heights must be non-negative")
        dlu = self.dlu.values[self.dlu.values != self.dlu.nodata]
        if np.any(dlu != np.floor(dlu)) or np.any((dlu < 0) | (dlu >= self.clutter_count)):
            raise ConfigError(f"land-use classes must be integers in [0, {self.clutter_count})")

    @property
    def cellsize(self) -> float:
        return self.dtm.cellsize

    def flat_layers(self):
        """(ground, building, clutter) as flat row-major arrays, nodata resolved like ``lookup``."""
        cached = self.__dict__.get("_flat")
        if cached is None:
            ground = np.ascontiguousarray(self.dtm.values, dtype=np.float64)
            building = np.where(self.dhm.values == self.dhm.nodata, 0.0, self.dhm.values)
            clutter = np.where(self.dlu.values == self.dlu.nodata, 0, self.dlu.values).astype(np.int64)
            cached = (ground, building, clutter)
            object.__setattr__(self, "_flat", cached)
        return cached

    def lookup(self, x, y):
        """(ground, building height, clutter class) arrays at the given points."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        inside = self.dtm.contains(x, y)
        if not np.all(inside):
            bad = np.flatnonzero(~np.ravel(inside))[0]
            raise BoundsError(float(np.ravel(x)[bad]), float(np.ravel(y)[bad]))
        row, col = self.dtm.cell_index(x, y)
        flat = row * self.dtm.ncols + col
        ground = self.dtm.values[flat]
        building = self.dhm.values[flat]
        building = np.where(building == self.dhm.nodata, 0.0, building)
        clutter = self.dlu.values[flat]
        clutter = np.where(clutter == self.dlu.nodata, 0, clutter).astype(np.int64)
        return ground, building, clutter

    def surface(self, x, y) -> float:
        """Ground plus building height: the total height z of a point."""
        ground, building, _ = self.lookup(x, y)
        return float(ground + building)


def save_geostack(geo: GeoStack, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in ("dtm", "dhm", "dlu"):
        path = directory / f"{name}.asc"
        write_raster(getattr(geo, name), path)
        paths.append(path)
    meta = directory / "geo.json"
    meta.write_text(json.dumps({"clutter_count": geo.clutter_count}) + "\n")
    paths.append(meta)
    return paths


def load_geostack(directory) -> GeoStack:
    directory = Path(directory)
    rasters = {name: load_raster(directory / f"{name}.asc") for name in ("dtm", "dhm", "dlu")}
    meta = directory / "geo.json"
    if os.path.exists(meta):
        clutter_count = int(json.loads(meta.read_text())["clutter_count"])
    else:
        dlu = rasters["dlu"]
        clutter_count = int(dlu.values[dlu.values != dlu.nodata].max()) + 1
    return GeoStack(clutter_count=clutter_count, **rasters)
