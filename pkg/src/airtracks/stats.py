"""Reporting outputs: type distributions, banded flight hours, histograms.

Flight hours count every processed 1 Hz point whose above-ground altitude
falls inside the band (edges inclusive) as 1/3600 of an hour. Points with
no terrain under them are excluded from banded statistics and reported
separately so they cannot silently bias the low band. The per-hour type
distribution is a presence fraction: the share of processed hours in
which at least one aircraft of the class was observed, computed
independently per class, so row percentages need not sum to 100%.

Everything here is a pure fold over files in sorted order, which makes
outputs byte-reproducible and partial aggregates mergeable.
"""

from __future__ import annotations

import csv
import io
import zipfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from airtracks.errors import InputError
from airtracks.ingest import ORGANIZED_FILE_RE
from airtracks.registry import AircraftClass, KNOWN_CLASSES

CLASS_ORDER = tuple(c.value for c in KNOWN_CLASSES) + (AircraftClass.UNKNOWN.value,)

SECONDS_PER_HOUR = 3600


@dataclass(frozen=True)
class BinningConfig:
    """Histogram bins; band edges are inclusive on both sides."""

    agl_band_ft: tuple[float, float] = (50.0, 5000.0)
    alt_bin_ft: float = 250.0
    speed_range_kt: tuple[float, float] = (0.0, 600.0)
    speed_bin_kt: float = 10.0

    def alt_edges(self) -> np.ndarray:
        lo, hi = self.agl_band_ft
        first = int(np.floor(lo / self.alt_bin_ft + 1.0)) * self.alt_bin_ft
        edges = [lo]
        edge = first
        while edge < hi:
            edges.append(edge)
            edge += self.alt_bin_ft
        edges.append(hi)
        return np.asarray(edges, dtype=float)

    def speed_edges(self) -> np.ndarray:
        lo, hi = self.speed_range_kt
        return np.arange(lo, hi + self.speed_bin_kt, self.speed_bin_kt, dtype=float)


@dataclass
class ProcessedAggregate:
    """Streaming aggregate over processed per-aircraft files."""

    binning: BinningConfig
    inband_points: dict[tuple[int, str], int] = field(default_factory=dict)
    no_agl_points: dict[int, int] = field(default_factory=dict)
    alt_hist: dict[str, np.ndarray] = field(default_factory=dict)
    speed_hist: dict[str, np.ndarray] = field(default_factory=dict)

    def merge(self, other: "ProcessedAggregate") -> None:
        for k, v in other.inband_points.items():
            self.inband_points[k] = self.inband_points.get(k, 0) + v
        for k, v in other.no_agl_points.items():
            self.no_agl_points[k] = self.no_agl_points.get(k, 0) + v
        for hists, theirs in ((self.alt_hist, other.alt_hist), (self.speed_hist, other.speed_hist)):
            for k, v in theirs.items():
                hists[k] = hists.get(k, 0) + v

    def years(self) -> list[int]:
        ys = {y for y, _ in self.inband_points} | set(self.no_agl_points)
        return sorted(ys)


def _read_processed_columns(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """(altAGL_ft, speed_kt) arrays; missing AGL becomes NaN."""
    agl: list[float] = []
    speed: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return np.empty(0), np.empty(0)
        idx = {name: i for i, name in enumerate(header)}
        if "altAGL_ft" not in idx or "speed_kt" not in idx:
            raise InputError(f"{path}: not a processed track file")
        ia, is_ = idx["altAGL_ft"], idx["speed_kt"]
        for row in reader:
            agl.append(float(row[ia]) if row[ia] else float("nan"))
            speed.append(float(row[is_]))
    return np.asarray(agl), np.asarray(speed)


def iter_processed_files(processed_root: Path | str) -> Iterator[tuple[int, str, Path]]:
    """Yield (year, class_dir, path) in deterministic sorted order."""
    root = Path(processed_root)
    if not root.is_dir():
        return
    for year_dir in sorted(p for p in root.iterdir() if p.is_dir() and p.name.isdigit()):
        year = int(year_dir.name)
        for path in sorted(year_dir.rglob("*.csv")):
            rel = path.relative_to(year_dir)
            if len(rel.parts) != 4:
                continue
            yield year, rel.parts[0], path


def aggregate_processed(
    processed_root: Path | str, binning: BinningConfig | None = None
) -> ProcessedAggregate:
    binning = binning or BinningConfig()
    agg = ProcessedAggregate(binning)
    alt_edges = binning.alt_edges()
    speed_edges = binning.speed_edges()
    lo, hi = binning.agl_band_ft
    for year, class_dir, path in iter_processed_files(processed_root):
        agl, speed = _read_processed_columns(path)
        missing = np.isnan(agl)
        inband = ~missing & (agl >= lo) & (agl <= hi)
        n_in = int(inband.sum())
        key = (year, class_dir)
        agg.inband_points[key] = agg.inband_points.get(key, 0) + n_in
        agg.no_agl_points[year] = agg.no_agl_points.get(year, 0) + int(missing.sum())
        if n_in:
            a_counts, _ = np.histogram(agl[inband], bins=alt_edges)
            s_counts, _ = np.histogram(np.clip(speed[inband], speed_edges[0], speed_edges[-1]),
                                       bins=speed_edges)
            zero_a = np.zeros(alt_edges.size - 1, dtype=np.int64)
            zero_s = np.zeros(speed_edges.size - 1, dtype=np.int64)
            agg.alt_hist[class_dir] = agg.alt_hist.get(class_dir, zero_a) + a_counts
            agg.speed_hist[class_dir] = agg.speed_hist.get(class_dir, zero_s) + s_counts
    return agg


def flight_hours(
    processed_root: Path | str,
    band_ft: tuple[float, float] = (50.0, 5000.0),
) -> dict[int, dict[str, float]]:
    """Hours per (year, class) from in-band 1 Hz points; 1 point = 1/3600 h."""
    agg = aggregate_processed(processed_root, BinningConfig(agl_band_ft=band_ft))
    return flight_hours_from_aggregate(agg)


def flight_hours_from_aggregate(agg: ProcessedAggregate) -> dict[int, dict[str, float]]:
    out: dict[int, dict[str, float]] = {}
    for (year, class_dir), n in sorted(agg.inband_points.items()):
        row = out.setdefault(year, {})
        row[class_dir] = row.get(class_dir, 0.0) + n / SECONDS_PER_HOUR
    return out


def _iter_hour_files(root: Path, year: int) -> Iterator[tuple[str, str, object]]:
    """Yield (class_dir, member_name, source) for organized data.

    Works over loose organized trees and over packed leaf archives; only
    file names are needed for presence statistics, so archive members are
    listed without extraction.
    """
    base = Path(root) / str(year)
    if not base.is_dir():
        return
    for zip_path in sorted(base.rglob("*.zip")):
        rel = zip_path.relative_to(base)
        with zipfile.ZipFile(zip_path) as zf:
            for name in sorted(zf.namelist()):
                yield rel.parts[0], name, (zip_path, name)
    for csv_path in sorted(base.rglob("*.csv")):
        rel = csv_path.relative_to(base)
        yield rel.parts[0], csv_path.name, csv_path


def type_distribution(
    organized_or_archive_root: Path | str,
    year: int,
    mode: str = "presence",
) -> dict[str, float]:
    """Per-class share of processed hours for one year.

    ``presence`` (default): fraction of hours with at least one aircraft
    of the class. ``observation-share``: per-hour share of organized
    observations belonging to the class, averaged over hours; this mode
    must read row counts and is correspondingly slower.
    """
    if mode not in ("presence", "observation-share"):
        raise ValueError(f"unknown distribution mode {mode!r}")
    root = Path(organized_or_archive_root)
    universe: set[str] = set()
    hours_by_class: dict[str, set[str]] = defaultdict(set)
    rows_by_hour_class: dict[tuple[str, str], int] = defaultdict(int)

    for class_dir, name, source in _iter_hour_files(root, year):
        m = ORGANIZED_FILE_RE.match(name)
        if not m:
            continue
        hour = f"{m.group(1)}_{m.group(2)}"
        universe.add(hour)
        hours_by_class[class_dir].add(hour)
        if mode == "observation-share":
            rows_by_hour_class[(hour, class_dir)] += _count_rows(source)

    if not universe:
        return {cls: 0.0 for cls in CLASS_ORDER}
    if mode == "presence":
        return {
            cls: len(hours_by_class.get(cls, ())) / len(universe) for cls in CLASS_ORDER
        }
    totals_by_hour: dict[str, int] = defaultdict(int)
    for (hour, _cls), n in rows_by_hour_class.items():
        totals_by_hour[hour] += n
    out = {}
    for cls in CLASS_ORDER:
        shares = [
            rows_by_hour_class.get((hour, cls), 0) / totals_by_hour[hour]
            for hour in sorted(universe)
            if totals_by_hour[hour]
        ]
        out[cls] = sum(shares) / len(shares) if shares else 0.0
    return out


def _count_rows(source) -> int:
    if isinstance(source, tuple):
        zip_path, name = source
        with zipfile.ZipFile(zip_path) as zf:
            text = zf.read(name).decode("utf-8")
    else:
        text = Path(source).read_text()
    return max(0, text.count("\n") - 1)


def histograms_from_aggregate(
    agg: ProcessedAggregate,
) -> dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]:
    """(variable, class) -> (bin edges, mass in flight hours)."""
    out: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
    for cls, counts in sorted(agg.alt_hist.items()):
        out[("altitudeAGL_ft", cls)] = (agg.binning.alt_edges(), counts / SECONDS_PER_HOUR)
    for cls, counts in sorted(agg.speed_hist.items()):
        out[("speed_kt", cls)] = (agg.binning.speed_edges(), counts / SECONDS_PER_HOUR)
    return out


def histograms(
    processed_root: Path | str, binning: BinningConfig | None = None
) -> dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]:
    return histograms_from_aggregate(aggregate_processed(processed_root, binning))


def _fmt_hours(h: float) -> str:
    return f"{h:.6f}"


def write_flight_hours_csv(path: Path | str, agg: ProcessedAggregate) -> None:
    """Year rows, one column per class plus a total, mirroring the banded
    flight-hours table layout."""
    hours = flight_hours_from_aggregate(agg)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", *CLASS_ORDER, "total"])
        for year in sorted(hours):
            row = hours[year]
            cols = [row.get(cls, 0.0) for cls in CLASS_ORDER]
            w.writerow([year, *(_fmt_hours(c) for c in cols), _fmt_hours(sum(cols))])


def write_type_distribution_csv(
    path: Path | str, rows: dict[int, dict[str, float]]
) -> None:
    """Fractions in [0, 1]; computed independently per class so a row
    need not sum to 1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", *CLASS_ORDER])
        for year in sorted(rows):
            w.writerow([year, *(f"{rows[year].get(cls, 0.0):.6f}" for cls in CLASS_ORDER)])


def write_histograms_csv(
    path: Path | str,
    hists: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]],
    variable: str,
) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "bin_lo", "bin_hi", "hours"])
        for (var, cls), (edges, mass) in sorted(hists.items()):
            if var != variable:
                continue
            for i in range(mass.size):
                w.writerow([cls, repr(float(edges[i])), repr(float(edges[i + 1])), _fmt_hours(mass[i])])


def write_excluded_csv(path: Path | str, agg: ProcessedAggregate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "points_without_agl"])
        for year in sorted(agg.no_agl_points):
            w.writerow([year, agg.no_agl_points[year]])


def write_gnuplot_scripts(out_dir: Path | str) -> list[Path]:
    """Small plot scripts referencing the emitted tables."""
    out_dir = Path(out_dir)
    scripts = []
    for variable, src in (("altitude", "altitude_hist.csv"), ("speed", "speed_hist.csv")):
        text = "\n".join(
            [
                "set datafile separator ','",
                f"set title '{variable} distribution by aircraft type'",
                "set xlabel 'bin lower edge'",
                "set ylabel 'flight hours'",
                "set key autotitle columnheader",
                f"plot '{src}' using 2:4 with steps",
                "",
            ]
        )
        p = out_dir / f"plot_{variable}.gp"
        p.write_text(text)
        scripts.append(p)
    return scripts


def write_stats_outputs(
    processed_root: Path | str,
    organized_or_archive_root: Path | str | None,
    out_dir: Path | str,
    binning: BinningConfig | None = None,
    years: Sequence[int] | None = None,
    emit_plots: bool = False,
) -> ProcessedAggregate:
    """Run the full reporting fold and write every output table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agg = aggregate_processed(processed_root, binning)
    write_flight_hours_csv(out / "flight_hours.csv", agg)
    hists = histograms_from_aggregate(agg)
    write_histograms_csv(out / "altitude_hist.csv", hists, "altitudeAGL_ft")
    write_histograms_csv(out / "speed_hist.csv", hists, "speed_kt")
    write_excluded_csv(out / "excluded_points.csv", agg)
    if organized_or_archive_root is not None:
        dist_years = years if years is not None else agg.years()
        rows = {y: type_distribution(organized_or_archive_root, y) for y in dist_years}
        write_type_distribution_csv(out / "type_distribution.csv", rows)
    if emit_plots:
        write_gnuplot_scripts(out)
    return agg
