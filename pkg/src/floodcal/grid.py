"""Raster grids of flood depth and resolution matching.

Values live at cell centers: ``(origin_x, origin_y)`` is the center of cell
``(row 0, col 0)`` and row indices increase northward (+y).  The ASCII file
format writes rows north-to-south per the common raster convention, so
readers/writers flip row order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GeometryMismatch,
    LocationNotOnGrid,
    NodataNeighbor,
    TargetOutOfBounds,
)

_COORD_TOL = 1e-9  # fraction of a cell, absorbs file-format round trips


@dataclass(frozen=True)
class Grid:
    """Rectangular raster of flood depths (m) with square cells.

    Parameters
    ----------
    origin_x, origin_y : float
        Coordinates (m) of the center of cell (0, 0), the south-west cell.
    cell_size : float
        Cell edge length in meters, > 0.
    values : ndarray, shape (n_rows, n_cols)
        Depths in meters, non-negative wherever not masked.
    nodata_mask : ndarray of bool, shape (n_rows, n_cols)
        True marks cells without valid data.
    """

    origin_x: float
    origin_y: float
    cell_size: float
    values: np.ndarray
    nodata_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        object.__setattr__(self, "values", values)
        if self.nodata_mask is None:
            object.__setattr__(self, "nodata_mask", np.zeros(values.shape, dtype=bool))
        else:
            mask = np.asarray(self.nodata_mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValueError("nodata_mask shape must match values")
            object.__setattr__(self, "nodata_mask", mask)
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        valid = values[~self.nodata_mask]
        if valid.size and np.min(valid) < 0:
            raise ValueError("depths must be non-negative outside nodata cells")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_x + col * self.cell_size,
            self.origin_y + row * self.cell_size,
        )

    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the full cell extent."""
        half = 0.5 * self.cell_size
        return (
            self.origin_x - half,
            self.origin_y - half,
            self.origin_x + (self.n_cols - 1) * self.cell_size + half,
            self.origin_y + (self.n_rows - 1) * self.cell_size + half,
        )

    def same_geometry(self, other: "Grid") -> bool:
        tol = _COORD_TOL * self.cell_size
        return (
            self.values.shape == other.values.shape
            and abs(self.cell_size - other.cell_size) <= tol
            and abs(self.origin_x - other.origin_x) <= tol
            and abs(self.origin_y - other.origin_y) <= tol
        )


@dataclass(frozen=True)
class LocationSet:
    """Ordered set of distinct (x, y) coordinates in meters."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError("coords must have shape (n, 2)")
        if len(np.unique(coords, axis=0)) != len(coords):
            raise ValueError("duplicate coordinates in LocationSet")
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return len(self.coords)


def grid_locations(grid: Grid) -> LocationSet:
    """All cell centers of ``grid`` in row-major order (south row first)."""
    cols, rows = np.meshgrid(np.arange(grid.n_cols), np.arange(grid.n_rows))
    xs = grid.origin_x + cols.ravel() * grid.cell_size
    ys = grid.origin_y + rows.ravel() * grid.cell_size
    return LocationSet(np.column_stack([xs, ys]))


def _fractional_index(grid: Grid, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = (targets[:, 0] - grid.origin_x) / grid.cell_size
    gy = (targets[:, 1] - grid.origin_y) / grid.cell_size
    return gx, gy


def bilinear_interpolate(coarse: Grid, targets: LocationSet) -> np.ndarray:
    """Bilinear interpolation of ``coarse`` at each target location.

    Every target must lie inside the convex hull of the coarse cell centers
    (no extrapolation into the boundary half-cell band), and all four
    surrounding cell centers must carry data.

    Returns
    -------
    ndarray, shape (len(targets),)
        Interpolated depths; exact at cell centers.

    Raises
    ------
    TargetOutOfBounds
        If any target lies outside the cell-center hull.
    NodataNeighbor
        If any of the four neighbors of a target is nodata.
    """
    pts = targets.coords
    gx, gy = _fractional_index(coarse, pts)
    tol = _COORD_TOL
    out = (gx < -tol) | (gy < -tol) | (gx > coarse.n_cols - 1 + tol) | (gy > coarse.n_rows - 1 + tol)
    if np.any(out):
        idx = int(np.argmax(out))
        raise TargetOutOfBounds(
            f"target {tuple(pts[idx])} outside cell-center hull of grid "
            f"(check georeferencing)"
        )
    gx = np.clip(gx, 0.0, coarse.n_cols - 1)
    gy = np.clip(gy, 0.0, coarse.n_rows - 1)
    c0 = np.minimum(np.floor(gx).astype(int), coarse.n_cols - 2) if coarse.n_cols > 1 else np.zeros(len(pts), dtype=int)
    r0 = np.minimum(np.floor(gy).astype(int), coarse.n_rows - 2) if coarse.n_rows > 1 else np.zeros(len(pts), dtype=int)
    c1 = np.minimum(c0 + 1, coarse.n_cols - 1)
    r1 = np.minimum(r0 + 1, coarse.n_rows - 1)
    fx = gx - c0
    fy = gy - r0

    mask = coarse.nodata_mask
    bad = mask[r0, c0] | mask[r0, c1] | mask[r1, c0] | mask[r1, c1]
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise NodataNeighbor(f"nodata cell among the 4 neighbors of target {tuple(pts[idx])}")

    v = coarse.values
    return (
        (1 - fy) * ((1 - fx) * v[r0, c0] + fx * v[r0, c1])
        + fy * ((1 - fx) * v[r1, c0] + fx * v[r1, c1])
    )


def flatten(grid: Grid, locations: LocationSet) -> np.ndarray:
    """Depths of ``grid`` at locations that coincide with cell centers.

    Output order follows the location index, so repeated calls across runs
    produce identically ordered vectors.
    """
    pts = locations.coords
    gx, gy = _fractional_index(grid, pts)
    cols = np.rint(gx).astype(int)
    rows = np.rint(gy).astype(int)
    off_grid = (
        (np.abs(gx - cols) > _COORD_TOL)
        | (np.abs(gy - rows) > _COORD_TOL)
        | (cols < 0)
        | (cols >= grid.n_cols)
        | (rows < 0)
        | (rows >= grid.n_rows)
    )
    if np.any(off_grid):
        idx = int(np.argmax(off_grid))
        raise LocationNotOnGrid(f"location {tuple(pts[idx])} is not a cell center")
    if np.any(grid.nodata_mask[rows, cols]):
        idx = int(np.argmax(grid.nodata_mask[rows, cols]))
        raise NodataNeighbor(f"location {tuple(pts[idx])} is a nodata cell")
    return grid.values[rows, cols]


def check_same_geometry(a: Grid, b: Grid) -> None:
    if not a.same_geometry(b):
        raise GeometryMismatch(
            f"grid geometries differ: {a.values.shape}@{a.cell_size} vs "
            f"{b.values.shape}@{b.cell_size}"
        )


# --- ASCII raster file format --------------------------------------------

NODATA_VALUE = -9999.0


def write_ascii_grid(grid: Grid, path) -> None:
    """Write a grid in the plain-text cell-center raster format.

    Header keys: ncols, nrows, xllcenter, yllcenter, cellsize, nodata_value.
    Data rows run north to south.
    """
    vals = grid.values.copy()
    vals[grid.nodata_mask] = NODATA_VALUE
    with open(path, "w") as fh:
        fh.write(f"ncols {grid.n_cols}\n")
        fh.write(f"nrows {grid.n_rows}\n")
        fh.write(f"xllcenter {grid.origin_x:.17g}\n")
        fh.write(f"yllcenter {grid.origin_y:.17g}\n")
        fh.write(f"cellsize {grid.cell_size:.17g}\n")
        fh.write(f"nodata_value {NODATA_VALUE:.17g}\n")
        for row in vals[::-1]:
            fh.write(" ".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def read_ascii_grid(path) -> Grid:
    """Read a grid written by :func:`write_ascii_grid`."""
    header = {}
    data_lines = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) == 2 and parts[0].lower() in (
                "ncols",
                "nrows",
                "xllcenter",
                "yllcenter",
                "cellsize",
                "nodata_value",
            ):
                header[parts[0].lower()] = float(parts[1])
            else:
                data_lines.append(parts)
    n_cols = int(header["ncols"])
    n_rows = int(header["nrows"])
    flat = np.array([float(v) for parts in data_lines for v in parts])
    if flat.size != n_rows * n_cols:
        raise ValueError(f"expected {n_rows * n_cols} values, found {flat.size}")
    values = flat.reshape(n_rows, n_cols)[::-1].copy()
    nodata = header.get("nodata_value", NODATA_VALUE)
    mask = values == nodata
    values[mask] = 0.0
    return Grid(
        origin_x=header["xllcenter"],
        origin_y=header["yllcenter"],
        cell_size=header["cellsize"],
        values=values,
        nodata_mask=mask,
    )
