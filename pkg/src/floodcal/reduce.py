"""Principal-component reduction of concatenated model-run matrices.

The run matrix stacks expensive rows first, then cheap rows interpolated to
the same locations.  Columns are centered by their mean over all rows, the
centered matrix is decomposed by SVD, and enough scaled eigenvectors
(sqrt(eigenvalue) * eigenvector of the sample covariance) are retained to
explain the target variance fraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .design import Design
from .errors import DegenerateEnsemble, DimensionMismatch
from .grid import Grid, LocationSet, bilinear_interpolate, flatten

CENTERING_DIVISOR = "p-1"  # sample covariance convention used for eigenvalues


@dataclass(frozen=True)
class RunEnsemble:
    """Depth matrix for a nested design, expensive rows first.

    ``depths`` has one row per design row and one column per location.
    """

    depths: np.ndarray
    design: Design
    locations: LocationSet

    def __post_init__(self):
        depths = np.asarray(self.depths, dtype=float)
        if depths.shape[0] != len(self.design.points):
            raise ValueError("row count must equal total design points")
        if depths.shape[1] != len(self.locations):
            raise ValueError("column count must equal location count")
        if not np.all(self.design.fidelity[: self.design.n_expensive] == "expensive"):
            raise ValueError("expensive rows must come first")
        object.__setattr__(self, "depths", depths)


@dataclass(frozen=True)
class ReducedBasis:
    """Column means plus the retained scaled-eigenvector basis.

    ``components`` columns are sqrt(eigenvalue)-scaled eigenvectors, so
    ``components.T @ components`` is diagonal with the eigenvalues.
    """

    column_mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    variance_fraction: float
    total_variance: float
    target_fraction: float

    @property
    def n_components(self) -> int:
        return self.components.shape[1]

    @property
    def n_locations(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class ReducedRuns:
    """Score matrix of an ensemble, expensive rows first."""

    scores: np.ndarray
    n_expensive: int

    @property
    def expensive(self) -> np.ndarray:
        return self.scores[: self.n_expensive]

    @property
    def cheap(self) -> np.ndarray:
        return self.scores[self.n_expensive:]


def build_ensemble(
    expensive_grids: list[Grid],
    cheap_grids: list[Grid],
    design: Design,
    locations: LocationSet,
) -> RunEnsemble:
    """Assemble the run matrix on shared locations.

    Expensive grids are read off directly (locations must be their cell
    centers); cheap grids are matched by bilinear interpolation.
    """
    design.validate_nesting()
    if len(expensive_grids) != design.n_expensive:
        raise ValueError("expensive grid count does not match design")
    if len(cheap_grids) != design.n_cheap:
        raise ValueError("cheap grid count does not match design")
    rows = [flatten(g, locations) for g in expensive_grids]
    rows += [bilinear_interpolate(g, locations) for g in cheap_grids]
    return RunEnsemble(np.array(rows), design, locations)


def fit_basis(ensemble: RunEnsemble, target_fraction: float = 0.95) -> ReducedBasis:
    """Retain the fewest principal components explaining ``target_fraction``.

    The SVD is taken of the centered matrix directly for numerical
    stability; eigenvalues follow the divisor-(p-1) sample covariance.
    Eigenvector signs are fixed so each one's largest-magnitude entry is
    positive, making the result deterministic for a given input.

    Raises
    ------
    DegenerateEnsemble
        If all rows are identical (zero total variance).
    """
    depths = ensemble.depths
    p = depths.shape[0]
    if p < 2:
        raise ValueError("need at least two runs")
    if not 0 < target_fraction <= 1:
        raise ValueError("target_fraction must be in (0, 1]")
    mean = depths.mean(axis=0)
    centered = depths - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(1.0, float(np.abs(depths).max()))
    if svals[0] <= max(depths.shape) * np.finfo(float).eps * scale:
        raise DegenerateEnsemble("all runs identical: zero variance to reduce")

    eigenvalues = svals**2 / (p - 1)
    total = float(eigenvalues.sum())
    fractions = np.cumsum(eigenvalues) / total
    n_keep = int(np.searchsorted(fractions, target_fraction - 1e-12) + 1)
    n_keep = min(n_keep, len(eigenvalues))

    vectors = vt[:n_keep].T.copy()
    for j in range(n_keep):
        lead = np.argmax(np.abs(vectors[:, j]))
        if vectors[lead, j] < 0:
            vectors[:, j] = -vectors[:, j]
    components = vectors * np.sqrt(eigenvalues[:n_keep])
    return ReducedBasis(
        column_mean=mean,
        components=components,
        eigenvalues=eigenvalues[:n_keep].copy(),
        variance_fraction=float(fractions[n_keep - 1]),
        total_variance=total,
        target_fraction=float(target_fraction),
    )


def project(basis: ReducedBasis, rows: np.ndarray) -> np.ndarray:
    """Score rows against the basis: (rows - mean) K (K^T K)^{-1}."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != basis.n_locations:
        raise DimensionMismatch(
            f"rows have {rows.shape[1]} columns, basis expects {basis.n_locations}"
        )
    return (rows - basis.column_mean) @ basis.components / basis.eigenvalues


def reconstruct(basis: ReducedBasis, scores: np.ndarray) -> np.ndarray:
    """Map scores back to depth space: scores K^T + mean."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    if scores.shape[1] != basis.n_components:
        raise DimensionMismatch(
            f"scores have {scores.shape[1]} columns, basis has {basis.n_components}"
        )
    return scores @ basis.components.T + basis.column_mean


def reduce_runs(basis: ReducedBasis, ensemble: RunEnsemble) -> ReducedRuns:
    return ReducedRuns(project(basis, ensemble.depths), ensemble.design.n_expensive)


# --- archive --------------------------------------------------------------


def save_basis(basis: ReducedBasis, directory) -> None:
    """Write the basis as .npy arrays plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.save(directory / "column_mean.npy", basis.column_mean)
    np.save(directory / "components.npy", basis.components)
    np.save(directory / "eigenvalues.npy", basis.eigenvalues)
    manifest = {
        "n_components": basis.n_components,
        "target_fraction": basis.target_fraction,
        "variance_fraction": basis.variance_fraction,
        "total_variance": basis.total_variance,
        "centering_divisor": CENTERING_DIVISOR,
    }
    with open(directory / "basis.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_basis(directory) -> ReducedBasis:
    directory = Path(directory)
    with open(directory / "basis.json") as fh:
        manifest = json.load(fh)
    return ReducedBasis(
        column_mean=np.load(directory / "column_mean.npy"),
        components=np.load(directory / "components.npy"),
        eigenvalues=np.load(directory / "eigenvalues.npy"),
        variance_fraction=manifest["variance_fraction"],
        total_variance=manifest["total_variance"],
        target_fraction=manifest["target_fraction"],
    )
