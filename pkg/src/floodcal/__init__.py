"""Multiresolution Gaussian-process emulation and Bayesian calibration
of spatial flood models."""

__version__ = "0.1.0"

from .design import Design, ParameterSpace, augment_cheap, edge_filter, maximin_lhs
from .grid import Grid, LocationSet, bilinear_interpolate, flatten, grid_locations
from .reduce import ReducedBasis, RunEnsemble, build_ensemble, fit_basis, project, reconstruct
from .emulator import (
    EmulatorParams,
    HyperPriors,
    MultiResEmulator,
    PredictiveDistribution,
    SingleResEmulator,
    TrendPrior,
    fit_multires,
    fit_singleres,
    predict,
    predict_hr,
)
from .calibrate import (
    CalibrationPriors,
    McmcConfig,
    Observation,
    PosteriorChain,
    calibrated_projection,
    reduce_observation,
    run_mh,
    thin,
)
from .diagnostics import MetricReport, UspeReport, d_mr_hr, extent_metrics, rmse, summarize_d, uspe
from .synthmodel import SynthConfig, run_cheap, run_expensive, simulate_observation

__all__ = [
    "Design",
    "ParameterSpace",
    "augment_cheap",
    "edge_filter",
    "maximin_lhs",
    "Grid",
    "LocationSet",
    "bilinear_interpolate",
    "flatten",
    "grid_locations",
    "ReducedBasis",
    "RunEnsemble",
    "build_ensemble",
    "fit_basis",
    "project",
    "reconstruct",
    "EmulatorParams",
    "HyperPriors",
    "MultiResEmulator",
    "PredictiveDistribution",
    "SingleResEmulator",
    "TrendPrior",
    "fit_multires",
    "fit_singleres",
    "predict",
    "predict_hr",
    "CalibrationPriors",
    "McmcConfig",
    "Observation",
    "PosteriorChain",
    "calibrated_projection",
    "reduce_observation",
    "run_mh",
    "thin",
    "MetricReport",
    "UspeReport",
    "d_mr_hr",
    "extent_metrics",
    "rmse",
    "summarize_d",
    "uspe",
    "SynthConfig",
    "run_cheap",
    "run_expensive",
    "simulate_observation",
]
