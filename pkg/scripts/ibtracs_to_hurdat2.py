#!/usr/bin/env python3
"""Rebuild a HURDAT2-layout Atlantic file from the IBTrACS extract shipped in huracanpy.

The sandbox this project was built in cannot reach nhc.noaa.gov, but the
``huracanpy`` wheel bundles IBTrACS WMO-agency and USA-agency 6-hourly
records; for the North Atlantic the WMO agency is the NHC best track.
This script writes those rows in the published HURDAT2 text layout:

* storm ids ``ALnnYYYY`` numbered by formation time within each season,
* names ``UNNAMED`` (the extract carries no names),
* status codes from the USA-agency columns,
* wind radii and radius of maximum wind set to the -999 sentinel.

Usage::

    pip download --no-deps huracanpy==1.5.0 -d /tmp/wheels
    python scripts/ibtracs_to_hurdat2.py /tmp/wheels/huracanpy-1.5.0-py3-none-any.whl \\
        data/hurdat2-atl-1980-2024-ibtracs.txt
"""
import argparse
import io
import sys
import zipfile

import pandas as pd

CSV_DIR = "huracanpy/_data/_ibtracs_files/"


def load(wheel):
    z = zipfile.ZipFile(wheel)

    def read(name):
        return pd.read_csv(io.BytesIO(z.read(CSV_DIR + name)), keep_default_na=False, na_values=[""])

    wmo = read("wmo.csv")
    usa = read("jtwc.csv")
    wmo = wmo[wmo.basin == "NA"].reset_index(drop=True)
    usa = usa[usa.basin == "NA"].reset_index(drop=True)
    if not ((wmo.track_id == usa.track_id).all() and (wmo.time == usa.time).all()):
        sys.exit("WMO and USA rows are not aligned")
    wmo["status"] = usa["status"].fillna("XX")
    return wmo


def fmt_lat(v):
    return f"{abs(v):.1f}{'N' if v >= 0 else 'S'}"


def fmt_lon(v):
    v = (v + 180.0) % 360.0 - 180.0
    return f"{abs(v):.1f}{'E' if v >= 0 else 'W'}"


def convert(df):
    df = df.copy()
    df["time"] = pd.to_datetime(df.time)
    starts = df.groupby("track_id").time.min().rename("start").reset_index()
    seasons = df.groupby("track_id").season.first().reset_index()
    starts = starts.merge(seasons, on="track_id").sort_values(["season", "start", "track_id"])
    out = []
    for season, grp in starts.groupby("season", sort=True):
        for number, sid in enumerate(grp.track_id, start=1):
            rows = df[df.track_id == sid].sort_values("time")
            out.append(f"AL{number:02d}{season},{'UNNAMED':>19},{len(rows):>7},")
            for r in rows.itertuples():
                pres = -999 if pd.isna(r.slp) else int(round(r.slp))
                wind = -99 if pd.isna(r.wind) else int(round(r.wind))
                fields = [
                    r.time.strftime("%Y%m%d"),
                    f" {r.time.strftime('%H%M')}",
                    "  ",
                    f" {r.status:>2}",
                    f" {fmt_lat(r.lat):>5}",
                    f" {fmt_lon(r.lon):>6}",
                    f" {wind:>3}",
                    f" {pres:>4}",
                ] + [" -999"] * 13
                out.append(",".join(fields) + ",")
    return "\n".join(out) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("wheel")
    ap.add_argument("output")
    args = ap.parse_args()
    text = convert(load(args.wheel))
    with open(args.output, "w") as fh:
        fh.write(text)


if __name__ == "__main__":
    main()
