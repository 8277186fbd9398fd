"""HURDAT2 best-track parsing, serialization and conversion to manifold trajectories."""
from __future__ import annotations

import csv
import io
import json
import logging
import re
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, List, Optional, Sequence, TextIO, Union

import numpy as np

from .fitting import Trajectory

log = logging.getLogger(__name__)

MISSING_WIND = -99
MISSING_PRESSURE = -999
CATEGORY5_KT = 137
SYNOPTIC_HOURS = {"0000", "0600", "1200", "1800"}

_HEADER_ID = re.compile(r"^[A-Z]{2}\d{6}$")
_LAT = re.compile(r"^(\d{1,2}(?:\.\d+)?)([NS])$")
_LON = re.compile(r"^(\d{1,3}(?:\.\d+)?)([EW])$")


class HurdatParseError(ValueError):
    def __init__(self, line_no: int, text: str, reason: str):
        super().__init__(f"line {line_no}: {reason}: {text!r}")
        self.line_no = line_no
        self.text = text
        self.reason = reason


@dataclass(frozen=True)
class Observation:
    time: datetime
    record_id: str
    status: str
    lat: float
    lon: float
    wind: int
    pressure: Optional[int]
    extra: tuple = ()  # wind radii and radius of maximum wind, as published

    @property
    def synoptic(self) -> bool:
        return self.time.strftime("%H%M") in SYNOPTIC_HOURS

    @property
    def category5(self) -> bool:
        return self.wind >= CATEGORY5_KT


@dataclass
class StormRecord:
    id: str
    name: str
    observations: List[Observation] = field(default_factory=list)

    @property
    def basin(self) -> str:
        return self.id[:2]

    @property
    def number(self) -> int:
        return int(self.id[2:4])

    @property
    def year(self) -> int:
        return int(self.id[4:])

    @property
    def start(self) -> datetime:
        return self.observations[0].time


def parse_lat(text: str) -> float:
    m = _LAT.match(text)
    if not m:
        raise ValueError(f"malformed latitude {text!r}")
    v = float(m.group(1))
    if v > 90:
        raise ValueError(f"latitude out of range {text!r}")
    return -v if m.group(2) == "S" else v


def parse_lon(text: str) -> float:
    m = _LON.match(text)
    if not m:
        raise ValueError(f"malformed longitude {text!r}")
    v = float(m.group(1))
    if v > 180:
        raise ValueError(f"longitude out of range {text!r}")
    return -v if m.group(2) == "W" else v


def _split(line: str) -> List[str]:
    parts = [p.strip() for p in line.rstrip("\r\n").split(",")]
    if parts and parts[-1] == "":
        parts.pop()
    return parts


def _parse_observation(parts: List[str]) -> Observation:
    if len(parts) < 8:
        raise ValueError(f"expected at least 8 fields, got {len(parts)}")
    date, hhmm, rec, status, lat, lon, wind, pres = parts[:8]
    if not (len(date) == 8 and date.isdigit() and len(hhmm) == 4 and hhmm.isdigit()):
        raise ValueError("malformed date/time")
    time = datetime.strptime(date + hhmm, "%Y%m%d%H%M").replace(tzinfo=timezone.utc)
    if len(rec) > 1:
        raise ValueError(f"record identifier {rec!r} longer than one character")
    if len(status) != 2:
        raise ValueError(f"malformed status {status!r}")
    w = int(wind)
    if w < 0 and w != MISSING_WIND:
        raise ValueError(f"negative wind {w}")
    p = int(pres)
    extra = tuple(int(x) for x in parts[8:])
    return Observation(
        time=time,
        record_id=rec,
        status=status,
        lat=parse_lat(lat),
        lon=parse_lon(lon),
        wind=w,
        pressure=None if p == MISSING_PRESSURE else p,
        extra=extra,
    )


def parse_hurdat2(stream: Union[TextIO, str, Iterable[str]], strict: bool = True,
                  problems: Optional[list] = None) -> List[StormRecord]:
    """Parse HURDAT2 text into storm records.

    ``stream`` is a file object, an iterable of lines or the text itself.
    In strict mode the first problem raises :class:`HurdatParseError`; in
    lenient mode the offending storm is skipped, a warning is issued and
    the error is appended to ``problems`` if given.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = list(stream)
    records: List[StormRecord] = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        try:
            parts = _split(line)
            if len(parts) != 3 or not _HEADER_ID.match(parts[0]) or not parts[2].isdigit():
                raise HurdatParseError(i + 1, line.rstrip("\n"), "expected a storm header")
            storm = StormRecord(parts[0], parts[1])
            count = int(parts[2])
            for k in range(count):
                j = i + 1 + k
                if j >= len(lines):
                    raise HurdatParseError(j, lines[-1].rstrip("\n"),
                                           f"count mismatch: header declares {count}, file ends after {k}")
                dparts = _split(lines[j])
                if len(dparts) == 3 and _HEADER_ID.match(dparts[0]):
                    raise HurdatParseError(j + 1, lines[j].rstrip("\n"),
                                           f"count mismatch: header declares {count}, found {k}")
                try:
                    storm.observations.append(_parse_observation(dparts))
                except ValueError as exc:
                    raise HurdatParseError(j + 1, lines[j].rstrip("\n"), str(exc)) from None
            records.append(storm)
            i += 1 + count
        except HurdatParseError as exc:
            if strict:
                raise
            warnings.warn(f"skipping storm: {exc}", stacklevel=2)
            if problems is not None:
                problems.append(exc)
            # resynchronize at the next header line
            i += 1
            while i < len(lines):
                p = _split(lines[i])
                if len(p) == 3 and _HEADER_ID.match(p[0]):
                    break
                i += 1
    return records


def read_hurdat2(path, strict: bool = True, problems: Optional[list] = None) -> List[StormRecord]:
    with open(path) as fh:
        return parse_hurdat2(fh, strict=strict, problems=problems)


def _fmt_lat(v: float) -> str:
    return f"{abs(v):.1f}{'S' if v < 0 else 'N'}"


def _fmt_lon(v: float) -> str:
    return f"{abs(v):.1f}{'W' if v < 0 else 'E'}"


def serialize_hurdat2(records: Sequence[StormRecord]) -> str:
    """Write records in the published fixed-width comma layout."""
    out = []
    for s in records:
        out.append(f"{s.id},{s.name:>19},{len(s.observations):>7},")
        for o in s.observations:
            pres = MISSING_PRESSURE if o.pressure is None else o.pressure
            fields = [
                o.time.strftime("%Y%m%d"),
                " " + o.time.strftime("%H%M"),
                f" {o.record_id:>1}",
                f" {o.status:>2}",
                f" {_fmt_lat(o.lat):>5}",
                f" {_fmt_lon(o.lon):>6}",
                f" {o.wind:>3}",
                f" {pres:>4}",
            ] + [f" {x:>4}" for x in o.extra]
            out.append(",".join(fields) + ",")
    return "\n".join(out) + ("\n" if out else "")


def find_storm(records: Sequence[StormRecord], storm_id: str) -> StormRecord:
    for s in records:
        if s.id == storm_id.upper():
            return s
    raise KeyError(f"storm not found: {storm_id}")


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class IngestFilter:
    years: Optional[frozenset] = None
    basin: str = "AL"
    min_samples: int = 13
    synoptic_only: bool = True

    def __post_init__(self):
        if self.min_samples < 2:
            raise ValueError("min_samples must be at least 2")
        if self.years is not None:
            object.__setattr__(self, "years", frozenset(int(y) for y in self.years))

    def observations(self, storm: StormRecord) -> List[Observation]:
        obs = [o for o in storm.observations if o.wind != MISSING_WIND]
        if self.synoptic_only:
            obs = [o for o in obs if o.synoptic]
        return obs

    def accepts(self, storm: StormRecord) -> bool:
        if storm.basin != self.basin:
            return False
        if self.years is not None and storm.year not in self.years:
            return False
        return len(self.observations(storm)) >= self.min_samples

    def apply(self, records: Sequence[StormRecord]) -> List[StormRecord]:
        return [s for s in records if self.accepts(s)]


def latlon_to_unit(lat, lon) -> np.ndarray:
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)


def unit_to_latlon(p):
    p = np.asarray(p, dtype=float)
    lat = np.degrees(np.arctan2(p[..., 2], np.hypot(p[..., 0], p[..., 1])))
    lon = np.degrees(np.arctan2(p[..., 1], p[..., 0]))
    return lat, lon


def _usable(storm: StormRecord, filt: IngestFilter) -> List[Observation]:
    obs = filt.observations(storm)
    if len(obs) < filt.min_samples:
        raise ValueError(f"{storm.id}: {len(obs)} usable observations, need {filt.min_samples}")
    return obs


def _hours(obs: Sequence[Observation]) -> np.ndarray:
    t0 = obs[0].time
    return np.array([(o.time - t0).total_seconds() / 3600.0 for o in obs])


def to_track_trajectory(storm: StormRecord, filt: IngestFilter = IngestFilter()) -> Trajectory:
    """Track as a trajectory on S^2; raw times are hours since the first sample."""
    obs = _usable(storm, filt)
    pts = latlon_to_unit([o.lat for o in obs], [o.lon for o in obs])
    return Trajectory.from_raw(_hours(obs), pts, ident=storm.id)


def to_intensity_trajectory(storm: StormRecord, filt: IngestFilter = IngestFilter()) -> Trajectory:
    """Maximum sustained wind (kt) as a trajectory in R."""
    obs = _usable(storm, filt)
    winds = np.array([[float(o.wind)] for o in obs])
    return Trajectory.from_raw(_hours(obs), winds, ident=storm.id)


# ---------------------------------------------------------------------------
# cohorts

EXP1_PRIOR_SIZE = 31
EXP1_VALIDATION_SIZE = 21
EXP1_TEST_SIZE = 21
EXP2_PRIOR_SIZE = 16
EXP2_TAIL_SIZE = 5


@dataclass
class Cohort:
    prior: List[StormRecord]
    validation: List[StormRecord]
    test: List[StormRecord]

    def manifest(self) -> dict:
        return {role: [s.id for s in getattr(self, role)] for role in ("prior", "validation", "test")}


def _season(records, year, filt):
    storms = [s for s in records if s.year == year and filt.accepts(s)]
    return sorted(storms, key=lambda s: (s.start, s.number))


def select_cohorts(records: Sequence[StormRecord], filt: IngestFilter = IngestFilter(),
                   prior_year: int = 2020, test_year: int = 2021) -> dict:
    """Experiment cohorts.

    exp1: prior = every storm of ``prior_year``, validation = its last 21,
    test = every storm of ``test_year``.  exp2: prior = first 16 storms of
    ``test_year``, validation = test = its last 5.  Order is by first
    observation time.  Cardinalities that differ from 31/21 are warned
    about, not fatal.
    """
    a = _season(records, prior_year, filt)
    b = _season(records, test_year, filt)
    if len(a) != EXP1_PRIOR_SIZE or len(b) != EXP1_TEST_SIZE:
        msg = (f"cohort sizes differ from the reference experiment: {prior_year}: {len(a)} "
               f"(expected {EXP1_PRIOR_SIZE}), {test_year}: {len(b)} (expected {EXP1_TEST_SIZE})")
        log.warning(msg)
        warnings.warn(msg, stacklevel=2)
    return {
        "exp1": Cohort(prior=a, validation=a[-EXP1_VALIDATION_SIZE:], test=b),
        "exp2": Cohort(prior=b[:EXP2_PRIOR_SIZE], validation=b[-EXP2_TAIL_SIZE:], test=b[-EXP2_TAIL_SIZE:]),
    }


def write_records_csv(records: Sequence[StormRecord], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["storm_id", "name", "time", "record_id", "status", "lat", "lon", "wind_kt", "pressure_mb"])
    for s in records:
        for o in s.observations:
            w.writerow([s.id, s.name, o.time.strftime("%Y-%m-%dT%H:%MZ"), o.record_id, o.status,
                        f"{o.lat:.1f}", f"{o.lon:.1f}", o.wind, "" if o.pressure is None else o.pressure])


def write_cohort_manifest(cohorts: dict, fh: TextIO) -> None:
    json.dump({name: c.manifest() for name, c in cohorts.items()}, fh, indent=2)
    fh.write("\n")
