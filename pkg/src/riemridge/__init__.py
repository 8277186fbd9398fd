"""Intrinsic ridge regression for manifold-valued time series.

Bezier-polynomial regression on Riemannian manifolds, a Mahalanobis prior
learned from fitted trajectories, and step-ahead forecasting of hurricane
tracks (on the sphere) and intensities (on the real line) from HURDAT2.
"""
__version__ = "0.1.0"

from .bezier import de_casteljau, initial_guess
from .fitting import FitResult, SolverSettings, Trajectory, fit
from .forecast import ForecastConfig, ForecastReport, forecast_trajectory, mae_intensity, mae_track, predict_step, tune
from .hurdat import IngestFilter, StormRecord, parse_hurdat2, read_hurdat2
from .manifolds import DomainError, Euclidean, PowerManifold, Sphere
from .ridge import Prior, build_prior, minimize_F

__all__ = [
    "DomainError", "Euclidean", "FitResult", "ForecastConfig", "ForecastReport", "IngestFilter",
    "PowerManifold", "Prior", "SolverSettings", "Sphere", "StormRecord", "Trajectory", "build_prior",
    "de_casteljau", "fit", "forecast_trajectory", "initial_guess", "mae_intensity", "mae_track",
    "minimize_F", "parse_hurdat2", "predict_step", "read_hurdat2", "tune",
]
