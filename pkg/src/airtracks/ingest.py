"""Hourly raw observation files: parsing, filtering, and organization.

Raw feeds arrive as one delimited-text file per UTC hour inside a
day-stamped directory (for example ``2020-06-22/states_2020-06-22-05.csv.gz``).
Each row is one timestamped observation of one aircraft in metric units.
Organization filters out incomplete positions and out-of-area points,
converts to U.S. aviation units, and writes one file per aircraft per
hour into the registry-keyed hierarchy.

Hour-file accounting is conservative: every parsed row ends up in exactly
one of quality-dropped, geo-dropped, or organized. Duplicate observations
(same aircraft and timestamp) collapse into the quality-dropped bucket.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import re
import time as _time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from airtracks.errors import InputError, PipelineError
from airtracks.geometry import GeoPolygon
from airtracks.registry import (
    HourStamp,
    RegistryLookup,
    format_icao24,
    parse_icao24,
    partition_icao_ranges,
)
from airtracks.units import meters_to_feet, mps_to_fpm, mps_to_knots

# Default raw schema: field name -> column header. Extra columns are
# ignored; headers are matched case-insensitively.
DEFAULT_HOUR_SCHEMA: dict[str, str] = {
    "time": "time",
    "icao24": "icao24",
    "lat": "lat",
    "lon": "lon",
    "velocity": "velocity",
    "heading": "heading",
    "vertrate": "vertrate",
    "baroaltitude": "baroaltitude",
    "geoaltitude": "geoaltitude",
    "onground": "onground",
    "lastposupdate": "lastposupdate",
}
_OPTIONAL_FIELDS = {"lastposupdate"}

ORGANIZED_COLUMNS = (
    "time",
    "lat",
    "lon",
    "altBaro_ft",
    "altGeo_ft",
    "speed_kt",
    "track_deg",
    "vertRate_ftmin",
    "onGround",
)

ORGANIZED_FILE_RE = re.compile(r"^(\d{4}-\d{2}-\d{2})_(\d{2})_([0-9A-F]{6})\.csv$")

_HOUR_FILE_RE = re.compile(r"(\d{4}-\d{2}-\d{2})[-_](\d{2})(?:\D|$)")


@dataclass(slots=True)
class StateVector:
    """One timestamped observation of one aircraft.

    Until convert_units runs, speeds are m/s and altitudes meters; after,
    knots / feet / feet-per-minute.
    """

    time: int
    icao24: int
    lat: float | None
    lon: float | None
    ground_speed: float | None
    track: float | None
    vert_rate: float | None
    baro_alt: float | None
    geo_alt: float | None
    on_ground: bool
    last_pos_update: float | None = None


@dataclass
class HourFileStats:
    """Per-hour accounting; raw == quality_dropped + geo_dropped + organized."""

    hour_stamp: HourStamp
    raw_count: int
    quality_dropped: int
    geo_dropped: int
    organized_count: int
    malformed: int = 0
    elapsed: float = 0.0

    def check(self) -> None:
        if self.raw_count != self.quality_dropped + self.geo_dropped + self.organized_count:
            raise PipelineError(
                f"hour {self.hour_stamp.label}: count conservation violated "
                f"({self.raw_count} != {self.quality_dropped} + "
                f"{self.geo_dropped} + {self.organized_count})"
            )


def hour_stamp_from_name(name: str) -> HourStamp | None:
    m = _HOUR_FILE_RE.search(name)
    if not m:
        return None
    try:
        return HourStamp.parse(f"{m.group(1)}_{m.group(2)}")
    except ValueError:
        return None


def _read_text(source: Path | str | bytes) -> str:
    if isinstance(source, bytes):
        data = source
    else:
        try:
            data = Path(source).read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read hour file {source}: {exc}") from exc
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except OSError as exc:
            raise InputError(f"corrupt gzip hour file: {exc}") from exc
    return data.decode("utf-8", errors="replace")


def _opt_float(cell: str) -> float | None:
    token = cell.strip()
    if not token or token.upper() in ("NULL", "NAN", "NONE"):
        return None
    return float(token)


def parse_hour_file(
    source: Path | str | bytes,
    schema: Mapping[str, str] | None = None,
) -> tuple[list[StateVector], int]:
    """Parse one raw hourly file into observations in raw metric units.

    Returns (records, malformed) where malformed counts rows that could
    not be decoded (bad column count, bad timestamp or address, junk in a
    numeric field). Absent values parse to None and are handled by the
    quality filter, not here.
    """
    colmap = dict(DEFAULT_HOUR_SCHEMA)
    if schema:
        colmap.update(schema)
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return [], 0
    index = {name.strip().lower(): i for i, name in enumerate(header)}
    missing = [
        col
        for field, col in colmap.items()
        if field not in _OPTIONAL_FIELDS and col.lower() not in index
    ]
    if missing:
        raise InputError(f"hour file lacks required columns: {', '.join(sorted(missing))}")

    def cell(row: list[str], field: str) -> str:
        i = index.get(colmap[field].lower())
        return row[i] if i is not None and i < len(row) else ""

    records: list[StateVector] = []
    malformed = 0
    ncols = len(header)
    for row in reader:
        if not row:
            continue
        if len(row) != ncols:
            malformed += 1
            continue
        try:
            t = int(float(cell(row, "time")))
            if t <= 0:
                raise ValueError("non-positive time")
            addr = parse_icao24(cell(row, "icao24"))
            lat = _opt_float(cell(row, "lat"))
            lon = _opt_float(cell(row, "lon"))
            vel = _opt_float(cell(row, "velocity"))
            hdg = _opt_float(cell(row, "heading"))
            vr = _opt_float(cell(row, "vertrate"))
            baro = _opt_float(cell(row, "baroaltitude"))
            geo = _opt_float(cell(row, "geoaltitude"))
            lpu = _opt_float(cell(row, "lastposupdate")) if "lastposupdate" in colmap else None
        except ValueError:
            malformed += 1
            continue
        on_ground = cell(row, "onground").strip().lower() in ("true", "t", "1")
        records.append(
            StateVector(t, addr, lat, lon, vel, hdg, vr, baro, geo, on_ground, lpu)
        )
    return records, malformed


def quality_filter(records: Iterable[StateVector]) -> tuple[list[StateVector], int]:
    """Drop observations with incomplete or missing position reports.

    A report is complete when latitude and longitude are present and in
    range and at least one altitude is present.
    """
    kept: list[StateVector] = []
    dropped = 0
    for r in records:
        if (
            r.lat is not None
            and r.lon is not None
            and -90.0 <= r.lat <= 90.0
            and -180.0 <= r.lon <= 180.0
            and (r.baro_alt is not None or r.geo_alt is not None)
        ):
            kept.append(r)
        else:
            dropped += 1
    return kept, dropped


def dedupe_records(records: Sequence[StateVector]) -> tuple[list[StateVector], int]:
    """Collapse rows sharing (aircraft, time), keeping the freshest.

    Receivers repeat stale vectors; the row with the most recent position
    update wins, first occurrence on ties. Input order is preserved.
    """
    best: dict[tuple[int, int], int] = {}
    for i, r in enumerate(records):
        key = (r.icao24, r.time)
        j = best.get(key)
        if j is None:
            best[key] = i
        else:
            old = records[j].last_pos_update or float("-inf")
            new = r.last_pos_update or float("-inf")
            if new > old:
                best[key] = i
    keep = sorted(best.values())
    return [records[i] for i in keep], len(records) - len(keep)


def convert_units(record: StateVector) -> StateVector:
    """Metric raw units to U.S. aviation units (kt, ft, ft/min)."""
    return replace(
        record,
        ground_speed=None if record.ground_speed is None else mps_to_knots(record.ground_speed),
        vert_rate=None if record.vert_rate is None else mps_to_fpm(record.vert_rate),
        baro_alt=None if record.baro_alt is None else meters_to_feet(record.baro_alt),
        geo_alt=None if record.geo_alt is None else meters_to_feet(record.geo_alt),
    )


def geo_filter(
    records: Sequence[StateVector], polygon: GeoPolygon
) -> tuple[list[StateVector], int]:
    """Keep observations inside the filter polygon (boundary inclusive)."""
    if not records:
        return [], 0
    lats = np.array([r.lat for r in records], dtype=float)
    lons = np.array([r.lon for r in records], dtype=float)
    mask = polygon.contains_many(lats, lons)
    kept = [r for r, ok in zip(records, mask) if ok]
    return kept, len(records) - len(kept)


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_organized(
    records: Sequence[StateVector],
    lookup: RegistryLookup,
    root: Path | str,
    hour_stamp: HourStamp,
) -> tuple[int, list[Path]]:
    """Write one file per aircraft for this hour into the hierarchy.

    Files land at <root>/<year>/<class>/<seat>/<range>/<date>_<hour>_<ICAO>.csv
    with rows sorted by time. Ranges for unregistered aircraft are
    partitioned at runtime from the addresses observed this hour. On a
    write failure every file written so far for this hour is removed.
    """
    root = Path(root)
    by_aircraft: dict[int, list[StateVector]] = {}
    for r in records:
        by_aircraft.setdefault(r.icao24, []).append(r)

    unknown_addrs = sorted(
        a for a in by_aircraft if lookup.classify(a)[1] is None
    )
    unknown_ranges = partition_icao_ranges(unknown_addrs, lookup.max_per_dir)

    written: list[Path] = []
    organized = 0
    try:
        for addr in sorted(by_aircraft):
            rows = sorted(by_aircraft[addr], key=lambda r: r.time)
            rel = lookup.hierarchy_path(addr, hour_stamp, unknown_ranges)
            out_dir = root.joinpath(*rel.parts)
            out_dir.mkdir(parents=True, exist_ok=True)
            out_path = out_dir / f"{hour_stamp.label}_{format_icao24(addr)}.csv"
            with open(out_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(ORGANIZED_COLUMNS)
                for r in rows:
                    w.writerow(
                        [
                            r.time,
                            _fmt(r.lat),
                            _fmt(r.lon),
                            _fmt(r.baro_alt),
                            _fmt(r.geo_alt),
                            _fmt(r.ground_speed),
                            _fmt(r.track),
                            _fmt(r.vert_rate),
                            "true" if r.on_ground else "false",
                        ]
                    )
            written.append(out_path)
            organized += len(rows)
    except OSError as exc:
        for p in written:
            try:
                p.unlink()
            except OSError:
                pass
        raise InputError(f"cannot write organized output under {root}: {exc}") from exc
    return organized, written


def organize_hour(
    source: Path | str | bytes,
    hour_stamp: HourStamp,
    lookup: RegistryLookup,
    polygon: GeoPolygon,
    organized_root: Path | str,
    schema: Mapping[str, str] | None = None,
) -> HourFileStats:
    """Full per-hour pipeline: parse, filter, convert, organize."""
    t0 = _time.perf_counter()
    records, malformed = parse_hour_file(source, schema)
    raw = len(records)
    kept, q_dropped = quality_filter(records)
    kept, collapsed = dedupe_records(kept)
    q_dropped += collapsed
    kept = [convert_units(r) for r in kept]
    kept, g_dropped = geo_filter(kept, polygon)
    organized, _ = write_organized(kept, lookup, organized_root, hour_stamp)
    stats = HourFileStats(
        hour_stamp=hour_stamp,
        raw_count=raw,
        quality_dropped=q_dropped,
        geo_dropped=g_dropped,
        organized_count=organized,
        malformed=malformed,
        elapsed=_time.perf_counter() - t0,
    )
    stats.check()
    return stats


@dataclass
class FetchResult:
    files: list[Path]
    skipped_existing: list[Path]
    missing_hours: list[int]
    discarded: list[str]


def fetch_day(
    date_stamp,
    endpoint_template: str,
    dest_dir: Path | str,
    *,
    hours: Sequence[int] = tuple(range(24)),
    retries: int = 2,
    timeout: float = 30.0,
    checksum_template: str | None = None,
    session=None,
) -> FetchResult:
    """Download one day's hourly files, tolerating missing remote hours.

    The endpoint template expands ``{date}`` and ``{hour:02d}``. Existing
    local files whose size matches the remote content length are not
    re-downloaded. When a checksum template is given, files whose SHA-256
    digest disagrees with the published value are discarded.
    """
    import requests

    if session is None:
        session = requests.Session()
    date_text = date_stamp.isoformat() if hasattr(date_stamp, "isoformat") else str(date_stamp)
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)

    result = FetchResult([], [], [], [])
    for hour in hours:
        url = endpoint_template.format(date=date_text, hour=hour)
        local = dest / url.rsplit("/", 1)[-1]
        body = _fetch_url(session, url, retries, timeout, local if local.exists() else None)
        if body is None:
            result.missing_hours.append(hour)
            continue
        if body == b"":
            result.skipped_existing.append(local)
            result.files.append(local)
            continue
        if checksum_template:
            expected = _fetch_checksum(
                session, checksum_template.format(date=date_text, hour=hour), timeout
            )
            if expected and hashlib.sha256(body).hexdigest() != expected:
                result.discarded.append(url)
                continue
        tmp = local.with_suffix(local.suffix + ".part")
        tmp.write_bytes(body)
        tmp.replace(local)
        result.files.append(local)
    return result


def _fetch_url(session, url: str, retries: int, timeout: float, existing: Path | None):
    """GET with retry. Returns None for a missing hour, b"" when the
    existing local copy already matches the remote size."""
    import requests

    last_exc: Exception | None = None
    for _ in range(retries + 1):
        try:
            if existing is not None:
                head = session.head(url, timeout=timeout)
                if head.status_code == 200:
                    length = head.headers.get("Content-Length")
                    if length is not None and int(length) == existing.stat().st_size:
                        return b""
            resp = session.get(url, timeout=timeout)
            if resp.status_code == 404:
                return None
            resp.raise_for_status()
            return resp.content
        except requests.RequestException as exc:
            last_exc = exc
    raise InputError(f"endpoint unreachable after {retries + 1} attempts: {url}: {last_exc}")


def _fetch_checksum(session, url: str, timeout: float) -> str | None:
    resp = session.get(url, timeout=timeout)
    if resp.status_code != 200:
        return None
    return resp.text.strip().split()[0].lower()
