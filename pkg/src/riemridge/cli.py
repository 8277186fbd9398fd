"""Command-line interface: fit, prior, tune, forecast and eval.

Exit codes: 0 success, 1 input errors (unreadable or malformed data,
unknown storm, bad arguments), 2 solver failures, 3 domain errors.
"""
from __future__ import annotations

import argparse
import io
import logging
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .fitting import ConvergenceError, LineSearchError, SolverSettings, fit
from .forecast import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_LAMBDA_GRID,
    TRACK_LAMBDA_GRID,
    ForecastConfig,
    TuningError,
    forecast_geojson,
    forecast_many,
    forecast_rows,
    mae_intensity,
    mae_track,
    tune,
    write_forecast_csv,
)
from .hurdat import (
    HurdatParseError,
    IngestFilter,
    find_storm,
    read_hurdat2,
    select_cohorts,
    to_intensity_trajectory,
    to_track_trajectory,
    write_cohort_manifest,
)
from .manifolds import DomainError, Euclidean, Sphere
from .ridge import DEFAULT_LOADING_REL, PriorError, build_prior, dumps_json, load_prior, save_prior

log = logging.getLogger("riemridge")

DATA_ENV = "RIEMRIDGE_HURDAT2"
EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_DOMAIN = 0, 1, 2, 3
# the reference cohorts (31 storms in 2020, 21 in 2021) include short-lived systems
PRESET_MIN_SAMPLES = 2

TARGETS = {
    "track": (Sphere(), to_track_trajectory, TRACK_LAMBDA_GRID),
    "intensity": (Euclidean(1), to_intensity_trajectory, DEFAULT_LAMBDA_GRID),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


@dataclass
class ExperimentSpec:
    """Resolved configuration of one CLI run, embedded in every artifact."""

    command: str
    data: str
    experiment: Optional[str]
    targets: List[str]
    filter: dict
    solver: dict
    forecast: Dict[str, dict]
    loading_rel: float
    storm: Optional[str] = None
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


def _float_list(text: str) -> List[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    if any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("grid values must be non-negative")
    return vals


def _n_points(text: str) -> int:
    n = int(text)
    if not 2 <= n <= 16:
        raise argparse.ArgumentTypeError("n must lie in [2, 16]")
    return n


def _time_scale(text: str):
    if text in ("prior_mean", "trajectory_length"):
        return (text, None)
    if text.startswith("fixed:"):
        return ("fixed", float(text.split(":", 1)[1]))
    raise argparse.ArgumentTypeError("time scale must be prior_mean, trajectory_length or fixed:<m>")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", default=os.environ.get(DATA_ENV),
                        help=f"HURDAT2 file ('-' for stdin); default ${DATA_ENV}")
    common.add_argument("--strict", dest="strict", action="store_true", default=True,
                        help="abort on the first malformed line (default)")
    common.add_argument("--lenient", dest="strict", action="store_false",
                        help="skip malformed storms with a warning")
    common.add_argument("--n", type=_n_points, default=6, help="control points per curve")
    common.add_argument("--min-samples", type=int, default=None,
                        help=f"minimum usable observations per storm (default {PRESET_MIN_SAMPLES})")
    common.add_argument("--all-hours", action="store_true", help="keep non-synoptic records")
    common.add_argument("--max-iters", type=int, default=500)
    common.add_argument("--grad-tol", type=float, default=1e-6)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--experiment", choices=["exp1", "exp2"], default="exp1")
    model.add_argument("--loading-rel", type=float, default=DEFAULT_LOADING_REL,
                       help="diagonal loading relative to the mean covariance eigenvalue")
    model.add_argument("--i0", type=int, default=2)
    model.add_argument("--horizon-steps", type=int, default=2)
    model.add_argument("--time-scale", type=_time_scale, default=("prior_mean", None),
                       help="prior_mean | trajectory_length | fixed:<m>")
    model.add_argument("--workers", type=int, default=1)

    grids = argparse.ArgumentParser(add_help=False)
    grids.add_argument("--grid-lambda", type=_float_list, default=None,
                       help="comma-separated lambda grid (default depends on target)")
    grids.add_argument("--grid-alpha", type=_float_list, default=list(DEFAULT_ALPHA_GRID))

    p = _Parser(prog="riemridge", description="Intrinsic ridge regression for hurricane tracks and intensities.")
    p.add_argument("--version", action="version", version=f"riemridge {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fit", parents=[common], help="fit one storm with a Bezier curve")
    s.add_argument("--storm", required=True)
    s.add_argument("--target", choices=["track", "intensity"], default="track")

    s = sub.add_parser("prior", parents=[common, model], help="build the prior of an experiment")
    s.add_argument("--target", choices=["track", "intensity", "both"], default="both")

    s = sub.add_parser("cohorts", parents=[common], help="list the storms of each experiment role")

    s = sub.add_parser("tune", parents=[common, model, grids], help="grid search of (lambda, alpha)")
    s.add_argument("--target", choices=["track", "intensity", "both"], default="both")

    s = sub.add_parser("forecast", parents=[common, model], help="forecast one storm")
    s.add_argument("--storm", required=True)
    s.add_argument("--target", choices=["track", "intensity", "both"], default="both")
    s.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="ridge parameter (default: first grid value of the target)")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--prior", action="append", default=[],
                   help="prior file written by 'prior' (one per target); default: build from --experiment")
    s.add_argument("--format", choices=["csv", "geojson"], default="csv")

    s = sub.add_parser("eval", parents=[common, model, grids], help="tune on validation, forecast the test set")
    s.add_argument("--format", choices=["csv", "geojson"], action="append", default=None,
                   help="artifact formats (default both)")
    return p


# ---------------------------------------------------------------------------
# helpers


def _load(args):
    if not args.data:
        raise UsageError(f"no dataset: pass --data or set ${DATA_ENV}")
    problems: list = []
    if args.data == "-":
        from .hurdat import parse_hurdat2

        records = parse_hurdat2(sys.stdin, strict=args.strict, problems=problems)
    else:
        records = read_hurdat2(args.data, strict=args.strict, problems=problems)
    for msg in problems:
        log.warning("%s", msg)
    return records


def _filter(args) -> IngestFilter:
    ms = args.min_samples if args.min_samples is not None else PRESET_MIN_SAMPLES
    return IngestFilter(min_samples=ms, synoptic_only=not args.all_hours)


def _settings(args) -> SolverSettings:
    return SolverSettings(max_iters=args.max_iters, grad_tol=args.grad_tol)


def _targets(args) -> List[str]:
    return ["intensity", "track"] if args.target == "both" else [args.target]


def _forecast_config(args, target: str) -> ForecastConfig:
    grid = getattr(args, "grid_lambda", None) or list(TARGETS[target][2])
    lam = getattr(args, "lam", None)
    return ForecastConfig(
        lam=grid[0] if lam is None else lam,
        alpha=getattr(args, "alpha", 1.0),
        n=args.n,
        i0=args.i0,
        horizon_steps=args.horizon_steps,
        time_scale=args.time_scale,
        lambda_grid=tuple(grid),
        alpha_grid=tuple(getattr(args, "grid_alpha", DEFAULT_ALPHA_GRID)),
    )


def _spec(args, targets, filt, cfgs) -> ExperimentSpec:
    return ExperimentSpec(
        command=args.command,
        data=str(args.data),
        experiment=getattr(args, "experiment", None),
        targets=list(targets),
        filter={"basin": filt.basin, "min_samples": filt.min_samples, "synoptic_only": filt.synoptic_only},
        solver=asdict(_settings(args)),
        forecast={t: c.to_dict() for t, c in cfgs.items()},
        loading_rel=getattr(args, "loading_rel", DEFAULT_LOADING_REL),
        storm=getattr(args, "storm", None),
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def _cohort(records, args, filt):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cohorts = select_cohorts(records, filt)
    c = cohorts[args.experiment]
    log.info("%s cohorts: prior %d, validation %d, test %d", args.experiment,
             len(c.prior), len(c.validation), len(c.test))
    return c


def _trajectories(storms, target, filt):
    conv = TARGETS[target][1]
    return [conv(s, filt) for s in storms]


def _build(records, args, filt, target):
    c = _cohort(records, args, filt)
    M = TARGETS[target][0]
    prior = build_prior(M, _trajectories(c.prior, target, filt), args.n, args.loading_rel, _settings(args))
    return c, prior


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    records = _load(args)
    storm = find_storm(records, args.storm)
    filt = _filter(args)
    M, conv, _ = TARGETS[args.target]
    y = conv(storm, filt)
    res = fit(M, y, args.n, _settings(args))
    spec = _spec(args, [args.target], filt, {})
    artifact = {
        "config": spec.to_dict(),
        "storm": storm.id,
        "target": args.target,
        "samples": len(y),
        "control_points": res.control,
        "r_squared": res.r_squared,
        "h_min": res.h_min,
        "g_min": res.g_min,
        "iterations": res.iterations,
        "grad_norm": res.grad_norm,
        "converged": res.converged,
    }
    path = _out_dir(args) / f"fit_{storm.id}_{args.target}.json"
    _write(path, dumps_json(artifact) + "\n")
    flag = "" if res.converged else " (not converged)"
    print(f"{storm.id} {args.target}: R^2 = {res.r_squared:.3f}, {res.iterations} iterations{flag}")
    return EXIT_OK


def cmd_cohorts(args) -> int:
    records = _load(args)
    filt = _filter(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cohorts = select_cohorts(records, filt)
    buf = io.StringIO()
    write_cohort_manifest(cohorts, buf)
    _write(_out_dir(args) / "cohorts.json", buf.getvalue())
    for name, c in cohorts.items():
        print(f"{name}: prior {len(c.prior)}, validation {len(c.validation)}, test {len(c.test)}")
    return EXIT_OK


def cmd_prior(args) -> int:
    records = _load(args)
    filt = _filter(args)
    out = _out_dir(args)
    for target in _targets(args):
        _, prior = _build(records, args, filt, target)
        spec = _spec(args, [target], filt, {})
        path = out / f"prior_{args.experiment}_{target}.json"
        save_prior(prior, path, extra=spec.to_dict())
        log.info("wrote %s", path)
        print(f"{args.experiment} {target}: {prior.sample_count} members, loading {prior.loading:.3g}, "
              f"mean length {prior.mean_length:.1f}")
    return EXIT_OK


def _tune_artifact(spec, res) -> dict:
    return {
        "config": spec.to_dict(),
        "lambda": res.lam,
        "alpha": res.alpha,
        "residual": res.residual,
        "table": [{"lambda": l, "alpha": a, "residual": v} for (l, a), v in sorted(res.table.items())],
        "failures": [{"lambda": l, "alpha": a, "messages": m} for (l, a), m in sorted(res.failures.items())],
    }


def cmd_tune(args) -> int:
    records = _load(args)
    filt = _filter(args)
    out = _out_dir(args)
    for target in _targets(args):
        c, prior = _build(records, args, filt, target)
        cfg = _forecast_config(args, target)
        res = tune(prior, cfg, _trajectories(c.validation, target, filt), _settings(args), args.workers)
        spec = _spec(args, [target], filt, {target: cfg})
        _write(out / f"tune_{args.experiment}_{target}.json", dumps_json(_tune_artifact(spec, res)) + "\n")
        print(f"{args.experiment} {target}: lambda* = {res.lam:g}, alpha* = {res.alpha:g}, "
              f"residual = {res.residual:.6g}")
    return EXIT_OK


def _priors_from_files(paths):
    priors = {}
    for p in paths:
        prior = load_prior(p)
        target = "track" if isinstance(prior.base, Sphere) else "intensity"
        priors[target] = prior
    return priors


def cmd_forecast(args) -> int:
    records = _load(args)
    storm = find_storm(records, args.storm)
    filt = _filter(args)
    loaded = _priors_from_files(args.prior)
    reports, cfgs = {}, {}
    for target in _targets(args):
        prior = loaded.get(target)
        if prior is None:
            _, prior = _build(records, args, filt, target)
        cfg = _forecast_config(args, target)
        cfgs[target] = cfg
        y = TARGETS[target][1](storm, filt)
        reports[target] = forecast_many(prior, cfg, [y], _settings(args))[0]
        for i, msg in reports[target].failures:
            log.warning("%s %s: %s", storm.id, target, msg)
    spec = _spec(args, list(reports), filt, cfgs)
    start = filt.observations(storm)[0].time
    rows = forecast_rows(reports.get("track"), reports.get("intensity"), start)
    out = _out_dir(args)
    if args.format == "csv":
        buf = io.StringIO()
        write_forecast_csv(rows, buf, spec.to_dict())
        _write(out / f"forecast_{storm.id}.csv", buf.getvalue())
    else:
        _write(out / f"forecast_{storm.id}.geojson", dumps_json(forecast_geojson(rows, spec.to_dict())) + "\n")
    parts = []
    if "intensity" in reports and len(reports["intensity"]):
        parts.append(f"intensity MAE {mae_intensity([reports['intensity']]):.1f} kt")
    if "track" in reports and len(reports["track"]):
        parts.append(f"track MAE {mae_track([reports['track']]):.1f} mi")
    print(f"{storm.id}: {len(rows)} forecasts" + (", " + ", ".join(parts) if parts else ""))
    return EXIT_OK


@dataclass
class EvalResult:
    experiment: str
    mae: Dict[str, float]
    tuned: Dict[str, tuple]
    reports: Dict[str, list]
    storms: list
    filt: IngestFilter
    spec: ExperimentSpec
    tune_results: Dict[str, object] = field(default_factory=dict)
    seconds: float = 0.0


def run_eval(args, records=None) -> EvalResult:
    """Tune on the validation cohort, then forecast every test storm with the tuned pair."""
    t0 = time.perf_counter()
    records = _load(args) if records is None else records
    filt = _filter(args)
    targets = ["intensity", "track"]
    settings = _settings(args)
    mae, tuned, reports, cfgs, tres = {}, {}, {}, {}, {}
    for target in targets:
        c, prior = _build(records, args, filt, target)
        cfg = _forecast_config(args, target)
        res = tune(prior, cfg, _trajectories(c.validation, target, filt), settings, args.workers)
        cfg.lam, cfg.alpha = res.lam, res.alpha
        cfgs[target], tuned[target], tres[target] = cfg, (res.lam, res.alpha), res
        reps = forecast_many(prior, cfg, _trajectories(c.test, target, filt), settings, args.workers)
        reports[target] = reps
        mae[target] = mae_track(reps) if target == "track" else mae_intensity(reps)
        log.info("%s %s: lambda*=%g alpha*=%g MAE=%.3f", args.experiment, target, res.lam, res.alpha, mae[target])
    spec = _spec(args, targets, filt, cfgs)
    return EvalResult(args.experiment, mae, tuned, reports, c.test, filt, spec, tres, time.perf_counter() - t0)


def summary_table(results: Sequence[EvalResult]) -> str:
    lines = ["Experiment/Method | Intensities (kt) | Tracks (mi)"]
    for r in results:
        lines.append(f"{r.experiment.capitalize()}/Proposed | {r.mae['intensity']:.1f} | {r.mae['track']:.1f}")
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    res = run_eval(args)
    out = _out_dir(args) / f"eval_{res.experiment}"
    out.mkdir(parents=True, exist_ok=True)
    formats = args.format or ["csv", "geojson"]
    rows = []
    by_id = {r.ident: r for r in res.reports["intensity"]}
    for tr in res.reports["track"]:
        storm = next(s for s in res.storms if s.id == tr.ident)
        rows.extend(forecast_rows(tr, by_id.get(tr.ident), res.filt.observations(storm)[0].time))
    config = res.spec.to_dict()
    if "csv" in formats:
        buf = io.StringIO()
        write_forecast_csv(rows, buf, config)
        _write(out / "forecasts.csv", buf.getvalue())
    if "geojson" in formats:
        _write(out / "forecasts.geojson", dumps_json(forecast_geojson(rows, config)) + "\n")
    summary = {
        "config": config,
        "experiment": res.experiment,
        "intensity_mae_kt": res.mae["intensity"],
        "track_mae_mi": res.mae["track"],
        "tuned": {t: {"lambda": l, "alpha": a} for t, (l, a) in res.tuned.items()},
        "forecast_steps": {t: int(sum(len(r) for r in reps)) for t, reps in res.reports.items()},
        "failed_steps": {t: int(sum(len(r.failures) for r in reps)) for t, reps in res.reports.items()},
        "storms": [s.id for s in res.storms],
    }
    _write(out / "summary.json", dumps_json(summary) + "\n")
    for t, tr in res.tune_results.items():
        _write(out / f"tune_{t}.json", dumps_json(_tune_artifact(res.spec, tr)) + "\n")
    table = summary_table([res])
    _write(out / "summary.txt", table)
    sys.stdout.write(table)
    log.info("%s finished in %.1f s", res.experiment, res.seconds)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "prior": cmd_prior,
    "cohorts": cmd_cohorts,
    "tune": cmd_tune,
    "forecast": cmd_forecast,
    "eval": cmd_eval,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "i0", 2) < 2:
        parser.error("--i0 must be at least 2")
    if getattr(args, "horizon_steps", 1) < 1:
        parser.error("--horizon-steps must be at least 1")
    if args.min_samples is not None and args.min_samples < 2:
        parser.error("--min-samples must be at least 2")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"riemridge: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"riemridge: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConvergenceError, LineSearchError, TuningError, PriorError) as exc:
        print(f"riemridge: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HurdatParseError as exc:
        print(f"riemridge: parse error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyError as exc:
        print(f"riemridge: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"riemridge: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"riemridge: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
