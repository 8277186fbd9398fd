"""Step-ahead forecasting with the ridge model, (lambda, alpha) tuning and error metrics."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .bezier import de_casteljau
from .fitting import SolverSettings, Trajectory
from .hurdat import unit_to_latlon
from .manifolds import Manifold
from .ridge import Prior, minimize_F

log = logging.getLogger(__name__)

EARTH_RADIUS_MI = 3958.8
EARTH_RADIUS_NMI = 3440.065

DEFAULT_LAMBDA_GRID = (0.0, 0.01, 0.1, 1.0, 10.0, 100.0)
# squared track residuals are in radians^2, several orders of magnitude below
# the Mahalanobis term, so the track grid sits lower
TRACK_LAMBDA_GRID = (0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
DEFAULT_ALPHA_GRID = (0.25, 0.5, 0.75, 1.0, 1.25)


@dataclass
class ForecastConfig:
    lam: float = 0.0
    alpha: float = 1.0
    n: int = 6
    i0: int = 2
    horizon_steps: int = 2
    # ("prior_mean", None): t_k = (k - 1) / (m_hat - 1), m_hat the prior's mean length
    # ("fixed", m_hat): same with an explicit m_hat
    # ("trajectory_length", None): m_hat = length of the forecast trajectory
    time_scale: Tuple[str, Optional[float]] = ("prior_mean", None)
    lambda_grid: Tuple[float, ...] = DEFAULT_LAMBDA_GRID
    alpha_grid: Tuple[float, ...] = DEFAULT_ALPHA_GRID
    start: str = "mu"

    def __post_init__(self):
        if self.i0 < 2:
            raise ValueError("i0 must be at least 2")
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be at least 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.time_scale[0] not in ("prior_mean", "fixed", "trajectory_length"):
            raise ValueError(f"unknown time scale {self.time_scale[0]!r}")
        self.lambda_grid = tuple(float(v) for v in self.lambda_grid)
        self.alpha_grid = tuple(float(v) for v in self.alpha_grid)
        if any(v < 0 for v in self.lambda_grid + self.alpha_grid):
            raise ValueError("grid values must be non-negative")

    def m_hat(self, prior: Prior, m_total: Optional[int] = None) -> float:
        kind, value = self.time_scale
        m = {"prior_mean": prior.mean_length, "fixed": value, "trajectory_length": m_total}[kind]
        if m is None or not m > 1:
            raise ValueError(f"time scale needs a reference length > 1, got {m}")
        return float(m)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["time_scale"] = list(self.time_scale)
        d["lambda_grid"] = list(self.lambda_grid)
        d["alpha_grid"] = list(self.alpha_grid)
        return d


@dataclass
class ForecastReport:
    ident: str
    origin_index: np.ndarray  # 1-based index of the last observed sample
    target_index: np.ndarray  # 1-based index of the verified sample
    target_hours: np.ndarray  # raw time of the target sample
    predictions: np.ndarray
    truth: np.ndarray
    errors: np.ndarray  # manifold distance between prediction and truth
    params: dict = field(default_factory=dict)
    failures: List[Tuple[int, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.errors)


def step_times(cfg: ForecastConfig, prior: Prior, m: int) -> np.ndarray:
    return np.arange(m, dtype=float) / (cfg.m_hat(prior, m) - 1.0)


def blend(M: Manifold, last, raw, alpha: float):
    """exp_last(alpha log_last raw): alpha = 1 keeps raw, alpha = 0 persists last."""
    if alpha == 1.0:
        return np.array(raw, dtype=float)
    if alpha == 0.0:
        return np.array(last, dtype=float)
    return M.exp(last, alpha * M.log(last, raw))


def raw_prediction(prior: Prior, lam: float, partial: Trajectory, t_next: float,
                   settings: SolverSettings = SolverSettings(), start="mu"):
    """Polynomial prediction p(t_next; b*) with b* the ridge minimizer on ``partial``."""
    res = minimize_F(prior, lam, partial, settings, start=start, with_r2=False)
    return de_casteljau(prior.base, res.control, t_next), res


def predict_step(prior: Prior, cfg: ForecastConfig, partial: Trajectory, t_next: float,
                 settings: SolverSettings = SolverSettings()):
    """Blended prediction of the sample at ``t_next`` from the samples in ``partial``."""
    if t_next <= partial.times[-1]:
        raise ValueError("t_next must lie after the last observed time")
    raw, _ = raw_prediction(prior, cfg.lam, partial, t_next, settings, cfg.start)
    return blend(prior.base, partial.samples[-1], raw, cfg.alpha)


def _raw_steps(prior: Prior, cfg: ForecastConfig, lam: float, truth: Trajectory,
               settings: SolverSettings):
    """Raw predictions for every forecast origin of ``truth``.

    Returns a list of (i, j, raw or None, message) with i the 1-based index
    of the predicted step (samples 1..i-1 observed) and j = i - 1 + horizon
    the verified sample.
    """
    m = len(truth)
    h = cfg.horizon_steps
    t = step_times(cfg, prior, m)
    out = []
    for i in range(cfg.i0, m - h + 2):
        j = i - 1 + h
        partial = Trajectory(t[: i - 1], truth.samples[: i - 1], truth.raw_times[: i - 1], truth.ident)
        try:
            raw, _ = raw_prediction(prior, lam, partial, t[j - 1], settings, cfg.start)
            out.append((i, j, raw, ""))
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            out.append((i, j, None, f"step {i}: {exc}"))
    return out


def _assemble(prior, cfg, truth, steps, alpha, lam) -> ForecastReport:
    M = prior.base
    rows, failures = [], []
    for i, j, raw, msg in steps:
        if raw is None:
            failures.append((i, msg))
            continue
        try:
            pred = blend(M, truth.samples[i - 2], raw, alpha)
        except ValueError as exc:
            failures.append((i, f"step {i}: blend failed: {exc}"))
            continue
        rows.append((i - 1, j, truth.raw_times[j - 1], pred, truth.samples[j - 1]))
    if rows:
        origin, target, hours, preds, tru = (np.array(v) for v in zip(*rows))
        errors = np.atleast_1d(M.dist(preds, tru))
    else:
        shape = (0,) + tuple(M.point_shape)
        origin = target = np.zeros(0, dtype=int)
        hours = errors = np.zeros(0)
        preds = tru = np.zeros(shape)
    params = cfg.to_dict()
    params.update(lam=lam, alpha=alpha)
    return ForecastReport(truth.ident, origin, target, hours, preds, tru, errors, params, failures)


def forecast_trajectory(prior: Prior, cfg: ForecastConfig, truth: Trajectory,
                        settings: SolverSettings = SolverSettings()) -> ForecastReport:
    """Forecast every step of ``truth`` from its own past.

    Prediction for step i sees samples 1..i-1 only; failures are recorded
    in the report and the remaining steps continue.
    """
    if len(truth) < cfg.i0:
        raise ValueError(f"trajectory {truth.ident} has {len(truth)} samples, need at least i0={cfg.i0}")
    steps = _raw_steps(prior, cfg, cfg.lam, truth, settings)
    return _assemble(prior, cfg, truth, steps, cfg.alpha, cfg.lam)


@dataclass
class TuneResult:
    lam: float
    alpha: float
    residual: float
    table: Dict[Tuple[float, float], float]
    failures: Dict[Tuple[float, float], List[str]]


class TuningError(RuntimeError):
    def __init__(self, failures):
        lines = [f"lambda={k[0]:g} alpha={k[1]:g}: {'; '.join(v[:3])}" for k, v in failures.items()]
        super().__init__("every grid cell failed:\n" + "\n".join(lines))
        self.failures = failures


def _raw_task(args):
    prior, cfg, lam, traj, settings = args
    return _raw_steps(prior, cfg, lam, traj, settings)


def tune(prior: Prior, cfg: ForecastConfig, validation: Sequence[Trajectory],
         settings: SolverSettings = SolverSettings(), workers: int = 1) -> TuneResult:
    """Grid search of (lambda, alpha) minimizing the validation residual.

    The residual of a cell is the sum over validation trajectories and
    forecast steps of squared distances between blended prediction and
    truth.  The minimizer depends only on lambda, so raw predictions are
    computed once per lambda and re-blended for each alpha.  Ties go to the
    smallest lambda, then the smallest alpha.
    """
    if not validation:
        raise ValueError("validation set is empty")
    lams = sorted(set(cfg.lambda_grid))
    alphas = sorted(set(cfg.alpha_grid))
    if not lams or not alphas:
        raise ValueError("tuning grids must be non-empty")
    usable = [y for y in validation if len(y) >= cfg.i0 + cfg.horizon_steps - 1]
    jobs = [(prior, cfg, lam, y, settings) for lam in lams for y in usable]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_raw_task, jobs))
    else:
        results = [_raw_task(j) for j in jobs]
    raw = {}
    for (_, _, lam, y, _), steps in zip(jobs, results):
        raw.setdefault(lam, []).append((y, steps))

    table, failures = {}, {}
    for lam in lams:
        for alpha in alphas:
            total, errs = 0.0, []
            for y, steps in raw.get(lam, []):
                rep = _assemble(prior, cfg, y, steps, alpha, lam)
                errs.extend(msg for _, msg in rep.failures)
                total += float(np.sum(rep.errors**2))
            if errs:
                failures[(lam, alpha)] = errs
                total = math.inf
            table[(lam, alpha)] = total
    best = None
    for lam in lams:
        for alpha in alphas:
            r = table[(lam, alpha)]
            if math.isfinite(r) and (best is None or r < best[2]):
                best = (lam, alpha, r)
    if best is None:
        raise TuningError(failures)
    return TuneResult(best[0], best[1], best[2], table, failures)


def forecast_many(prior: Prior, cfg: ForecastConfig, trajectories: Sequence[Trajectory],
                  settings: SolverSettings = SolverSettings(), workers: int = 1) -> List[ForecastReport]:
    usable = [y for y in trajectories if len(y) >= cfg.i0]
    jobs = [(prior, cfg, cfg.lam, y, settings) for y in usable]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_raw_task, jobs))
    else:
        results = [_raw_task(j) for j in jobs]
    return [_assemble(prior, cfg, y, steps, cfg.alpha, cfg.lam) for y, steps in zip(usable, results)]


# ---------------------------------------------------------------------------
# metrics


def _all_errors(reports: Sequence[ForecastReport]) -> np.ndarray:
    if not reports:
        raise ValueError("no forecast reports")
    errs = np.concatenate([r.errors for r in reports]) if reports else np.zeros(0)
    if errs.size == 0:
        raise ValueError("no forecast steps to average")
    return errs


def mae_track(reports: Sequence[ForecastReport], radius: float = EARTH_RADIUS_MI) -> float:
    """Mean great-circle error over all forecast steps, in units of ``radius``."""
    return float(np.mean(_all_errors(reports)) * radius)


def mae_intensity(reports: Sequence[ForecastReport]) -> float:
    """Mean absolute intensity error over all forecast steps (knots)."""
    return float(np.mean(_all_errors(reports)))


# ---------------------------------------------------------------------------
# exports

CSV_COLUMNS = [
    "storm_id", "timestamp", "origin_index", "target_index",
    "truth_lat", "truth_lon", "truth_wind_kt", "pred_lat", "pred_lon", "pred_wind_kt",
    "track_error_mi", "intensity_error_kt",
]


def _g(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else format(float(v), ".17g")


def forecast_rows(track: Optional[ForecastReport], intensity: Optional[ForecastReport],
                  start: Optional[datetime] = None) -> List[dict]:
    """Merge track and intensity reports of one storm by target index."""
    by_target: Dict[int, dict] = {}
    ident = (track or intensity).ident
    if track is not None:
        lat_t, lon_t = unit_to_latlon(track.truth)
        lat_p, lon_p = unit_to_latlon(track.predictions)
        for k, j in enumerate(track.target_index):
            by_target.setdefault(int(j), {}).update(
                hours=float(track.target_hours[k]), origin=int(track.origin_index[k]),
                truth_lat=lat_t[k], truth_lon=lon_t[k], pred_lat=lat_p[k], pred_lon=lon_p[k],
                track_error_mi=float(track.errors[k]) * EARTH_RADIUS_MI)
    if intensity is not None:
        for k, j in enumerate(intensity.target_index):
            by_target.setdefault(int(j), {}).update(
                hours=float(intensity.target_hours[k]), origin=int(intensity.origin_index[k]),
                truth_wind_kt=float(intensity.truth[k, 0]), pred_wind_kt=float(intensity.predictions[k, 0]),
                intensity_error_kt=float(intensity.errors[k]))
    rows = []
    for j in sorted(by_target):
        r = by_target[j]
        stamp = ""
        if start is not None:
            stamp = (start + timedelta(hours=r["hours"])).strftime("%Y-%m-%dT%H:%MZ")
        rows.append({
            "storm_id": ident, "timestamp": stamp, "origin_index": r["origin"], "target_index": j,
            **{k: r.get(k) for k in CSV_COLUMNS[4:]},
        })
    return rows


def write_forecast_csv(rows: Sequence[dict], fh: TextIO, config: Optional[dict] = None) -> None:
    if config is not None:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r["storm_id"], r["timestamp"], r["origin_index"], r["target_index"]]
                   + [_g(r.get(k)) for k in CSV_COLUMNS[4:]])


def forecast_geojson(rows: Sequence[dict], config: Optional[dict] = None) -> dict:
    """One truth and one forecast LineString per storm ([lon, lat] order)."""
    features = []
    storms: Dict[str, List[dict]] = {}
    for r in rows:
        if r.get("truth_lat") is not None:
            storms.setdefault(r["storm_id"], []).append(r)
    for sid, rs in storms.items():
        for kind, la, lo in (("truth", "truth_lat", "truth_lon"), ("forecast", "pred_lat", "pred_lon")):
            features.append({
                "type": "Feature",
                "properties": {"storm_id": sid, "kind": kind,
                               "timestamps": [r["timestamp"] for r in rs]},
                "geometry": {"type": "LineString",
                             "coordinates": [[round(float(r[lo]), 6), round(float(r[la]), 6)] for r in rs]},
            })
    out = {"type": "FeatureCollection", "features": features}
    if config is not None:
        out["properties"] = {"config": config}
    return out
