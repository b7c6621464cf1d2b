"""Track cleaning: segmentation, outlier rejection, smoothing, 1 Hz resampling.

One aircraft's organized hourly files are concatenated into a single
time-sorted series per year, split into gap-free segments, cleaned, and
resampled onto integer seconds. The fixed stage order is:

    dedupe positions -> split on time gaps -> altitude outliers (scaled
    MAD) -> Gaussian smoothing -> gradient rates -> per-type speed
    ceiling -> 1 Hz interpolation -> above-ground altitude -> airspace

Segments that fall under the minimum point count at any stage are
discarded. All per-segment math is pure; the terrain cache is the only
shared structure.
"""

from __future__ import annotations

import csv
import io
import math
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from airtracks.errors import ArchiveError, ConfigError, InputError
from airtracks.geometry import GeoPolygon
from airtracks.ingest import ORGANIZED_FILE_RE
from airtracks.registry import AircraftClass, format_icao24, parse_icao24
from airtracks.terrain import ElevationService

# Scaled median absolute deviation: this factor makes the MAD consistent
# with the standard deviation of a normal distribution.
MAD_SCALE = 1.4826

PROCESSED_COLUMNS = (
    "time",
    "lat",
    "lon",
    "altMSL_ft",
    "altAGL_ft",
    "speed_kt",
    "course_deg",
    "vertRate_ftmin",
    "accel_ktps",
    "airspace",
    "segmentId",
)

AIRSPACE_CLASSES = ("B", "C", "D")


def default_speed_ceilings() -> dict[AircraftClass, float]:
    """Per-type speed ceilings in knots used for rate outlier rejection."""
    ceilings = {cls: 250.0 for cls in AircraftClass}
    ceilings[AircraftClass.FIXED_WING_SINGLE_ENGINE] = 400.0
    ceilings[AircraftClass.FIXED_WING_MULTI_ENGINE] = 600.0
    ceilings[AircraftClass.UNKNOWN] = 600.0
    return ceilings


@dataclass
class OutlierParams:
    """Tunable thresholds for the cleaning pipeline."""

    mad_threshold: float = 1.5
    smooth_window_s: float = 30.0
    smooth_sigma_s: float | None = None  # defaults to window / 5
    max_gap_s: float = 60.0
    min_points: int = 10
    zero_mad_floor_ft: float = 25.0
    smooth_altitude: bool = True
    smooth_speed: bool = True
    speed_ceiling_kt: dict[AircraftClass, float] = field(default_factory=default_speed_ceilings)

    @property
    def sigma(self) -> float:
        return self.smooth_sigma_s if self.smooth_sigma_s is not None else self.smooth_window_s / 5.0

    def ceiling_for(self, cls: AircraftClass) -> float:
        return self.speed_ceiling_kt.get(cls, 250.0)


@dataclass
class SegmentData:
    """Parallel channel arrays for one run of observations."""

    time: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    alt: np.ndarray
    speed: np.ndarray
    course: np.ndarray
    vert_rate: np.ndarray | None = None
    accel: np.ndarray | None = None

    def __len__(self) -> int:
        return self.time.size

    def take(self, mask: np.ndarray) -> "SegmentData":
        return SegmentData(
            self.time[mask],
            self.lat[mask],
            self.lon[mask],
            self.alt[mask],
            self.speed[mask],
            self.course[mask],
            None if self.vert_rate is None else self.vert_rate[mask],
            None if self.accel is None else self.accel[mask],
        )

    def slice(self, start: int, stop: int) -> "SegmentData":
        return SegmentData(
            self.time[start:stop],
            self.lat[start:stop],
            self.lon[start:stop],
            self.alt[start:stop],
            self.speed[start:stop],
            self.course[start:stop],
        )


@dataclass
class TrackSegment:
    """A cleaned, 1 Hz resampled run of points for one aircraft."""

    icao24: int
    aircraft_class: AircraftClass
    segment_id: int
    time: np.ndarray  # int64 seconds, consecutive
    lat: np.ndarray
    lon: np.ndarray
    alt_msl: np.ndarray
    speed: np.ndarray
    course: np.ndarray
    vert_rate: np.ndarray
    accel: np.ndarray
    alt_agl: np.ndarray | None = None  # NaN where terrain is missing
    agl_low_confidence: np.ndarray | None = None
    airspace: list[str] | None = None

    def __len__(self) -> int:
        return self.time.size


def dedupe_positions(seg: SegmentData) -> SegmentData:
    """Collapse consecutive identical (lat, lon, alt) rows to the earliest."""
    n = len(seg)
    if n <= 1:
        return seg
    same = (
        (seg.lat[1:] == seg.lat[:-1])
        & (seg.lon[1:] == seg.lon[:-1])
        & (seg.alt[1:] == seg.alt[:-1])
    )
    keep = np.ones(n, dtype=bool)
    keep[1:] = ~same
    return seg.take(keep)


def split_segments(
    seg: SegmentData, max_gap_s: float, min_points: int
) -> tuple[list[SegmentData], int]:
    """Split where the update gap exceeds max_gap_s; drop short pieces.

    Returns (segments, dropped_short_count).
    """
    n = len(seg)
    if n == 0:
        return [], 0
    gaps = np.flatnonzero(np.diff(seg.time) > max_gap_s)
    bounds = [0, *(int(g) + 1 for g in gaps), n]
    out: list[SegmentData] = []
    dropped = 0
    for a, b in zip(bounds, bounds[1:]):
        if b - a >= min_points:
            out.append(seg.slice(a, b))
        else:
            dropped += 1
    return out, dropped


def mad_outliers(
    series: Sequence[float] | np.ndarray,
    threshold: float = 1.5,
    zero_mad_floor: float = 25.0,
) -> np.ndarray:
    """Flag values whose deviation from the median exceeds the scaled MAD.

    A point is an outlier when |x - median| > threshold * 1.4826 * MAD.
    When the MAD itself is zero (more than half the samples identical)
    the comparison degenerates, so an absolute floor is used instead to
    avoid flagging quantization jitter. Series shorter than 3 get an
    all-false mask.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 3:
        return np.zeros(x.size, dtype=bool)
    med = np.median(x)
    dev = np.abs(x - med)
    mad = np.median(dev)
    if mad == 0.0:
        return dev > zero_mad_floor
    return dev > threshold * MAD_SCALE * mad


def gaussian_smooth(
    series: np.ndarray,
    times: np.ndarray,
    window_s: float = 30.0,
    sigma_s: float | None = None,
) -> np.ndarray:
    """Gaussian-weighted moving average over a fixed time window.

    Each output sample is the convex combination of input samples within
    window_s / 2 seconds, weighted by exp(-dt^2 / (2 sigma^2)).
    """
    x = np.asarray(series, dtype=float)
    t = np.asarray(times, dtype=float)
    if x.size != t.size:
        raise ValueError("series and times must have equal length")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if x.size <= 1:
        return x.copy()
    sigma = sigma_s if sigma_s is not None else window_s / 5.0
    half = window_s / 2.0
    lo = np.searchsorted(t, t - half, side="left")
    hi = np.searchsorted(t, t + half, side="right")
    out = np.empty_like(x)
    for i in range(x.size):
        sl = slice(lo[i], hi[i])
        w = np.exp(-((t[sl] - t[i]) ** 2) / (2.0 * sigma * sigma))
        out[i] = np.dot(w, x[sl]) / np.sum(w)
    return out


def numerical_gradient(series: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Central differences in the interior, one-sided at the ends.

    Interior: g_i = (x_{i+1} - x_{i-1}) / (t_{i+1} - t_{i-1}).
    """
    x = np.asarray(series, dtype=float)
    t = np.asarray(times, dtype=float)
    if x.size < 2:
        raise ValueError("gradient needs at least 2 samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    g = np.empty_like(x)
    g[0] = (x[1] - x[0]) / (t[1] - t[0])
    g[-1] = (x[-1] - x[-2]) / (t[-1] - t[-2])
    if x.size > 2:
        g[1:-1] = (x[2:] - x[:-2]) / (t[2:] - t[:-2])
    return g


def rate_outlier_filter(
    seg: SegmentData, ceiling_kt: float, min_points: int
) -> tuple[SegmentData | None, int]:
    """Remove points whose speed exceeds the per-type ceiling.

    Returns (segment, removed); the segment is None when removal leaves
    fewer than min_points.
    """
    keep = seg.speed <= ceiling_kt
    removed = int((~keep).sum())
    if removed:
        seg = seg.take(keep)
    if len(seg) < min_points:
        return None, removed
    return seg, removed


def interpolate_1hz(seg: SegmentData, min_points: int = 10) -> SegmentData | None:
    """Resample onto consecutive integer seconds spanning the segment.

    Position, altitude, speed, and rates interpolate linearly; course
    interpolates along the shortest angular arc. Segments spanning fewer
    than min_points whole seconds are discarded (None).
    """
    t = seg.time.astype(float)
    t0 = math.ceil(t[0])
    t1 = math.floor(t[-1])
    n = t1 - t0 + 1
    if n < min_points:
        return None
    tt = np.arange(t0, t1 + 1, dtype=np.int64)
    ttf = tt.astype(float)

    course_rad = np.unwrap(np.deg2rad(seg.course))
    course = np.rad2deg(np.interp(ttf, t, course_rad)) % 360.0

    return SegmentData(
        time=tt,
        lat=np.interp(ttf, t, seg.lat),
        lon=np.interp(ttf, t, seg.lon),
        alt=np.interp(ttf, t, seg.alt),
        speed=np.interp(ttf, t, seg.speed),
        course=course,
        vert_rate=None if seg.vert_rate is None else np.interp(ttf, t, seg.vert_rate),
        accel=None if seg.accel is None else np.interp(ttf, t, seg.accel),
    )


def attach_agl(segment: TrackSegment, elevation: ElevationService) -> int:
    """Compute above-ground altitude for every point in place.

    Ocean points use 0 ft terrain. Points with no covering tile keep a
    NaN AGL and are excluded from banded statistics downstream. Points
    that come out below the terrain are retained but flagged, since
    terrain and altitude error overlap near the ground. Returns the
    number of points without terrain.
    """
    elev_ft, _sources = elevation.query_many(segment.lat, segment.lon)
    agl = segment.alt_msl - elev_ft
    segment.alt_agl = agl
    with np.errstate(invalid="ignore"):
        segment.agl_low_confidence = np.nan_to_num(agl, nan=0.0) < 0.0
    return int(np.isnan(agl).sum())


@dataclass(frozen=True)
class AirspaceVolume:
    """A controlled-airspace volume: polygon footprint plus altitude band."""

    designator: str
    polygon: GeoPolygon
    floor_ft_msl: float
    ceiling_ft_msl: float

    def __post_init__(self) -> None:
        if self.designator not in AIRSPACE_CLASSES:
            raise ConfigError(f"unsupported airspace class {self.designator!r}")


def load_airspace_volumes(path: Path | str) -> list[AirspaceVolume]:
    """Read airspace volumes from a GeoJSON file with floor/ceiling props."""
    import json

    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read airspace file {path}: {exc}") from exc
    volumes: list[AirspaceVolume] = []
    for feat in doc.get("features", []):
        props = feat.get("properties", {})
        rings = feat.get("geometry", {}).get("coordinates", [])
        if not rings:
            continue
        arr = np.asarray(rings[0], dtype=float)
        poly = GeoPolygon(np.column_stack([arr[:, 1], arr[:, 0]]))
        volumes.append(
            AirspaceVolume(
                designator=str(props.get("class", "D")),
                polygon=poly,
                floor_ft_msl=float(props.get("floor_ft_msl", 0.0)),
                ceiling_ft_msl=float(props.get("ceiling_ft_msl", 0.0)),
            )
        )
    return volumes


def classify_airspace(
    lat: float, lon: float, alt_msl: float, volumes: Sequence[AirspaceVolume]
) -> str:
    return classify_airspace_many(
        np.array([lat]), np.array([lon]), np.array([alt_msl]), volumes
    )[0]


def classify_airspace_many(
    lats: np.ndarray,
    lons: np.ndarray,
    alts: np.ndarray,
    volumes: Sequence[AirspaceVolume],
) -> list[str]:
    """Innermost containing volume per point, Other when none applies.

    Volumes are painted largest footprint first so the smallest
    (innermost) containing volume wins.
    """
    out = np.full(lats.shape, "Other", dtype=object)
    for vol in sorted(volumes, key=lambda v: -v.polygon.area()):
        hit = (
            vol.polygon.contains_many(lats, lons)
            & (alts >= vol.floor_ft_msl)
            & (alts <= vol.ceiling_ft_msl)
        )
        out[hit] = vol.designator
    return list(out)


@dataclass
class TrackCounters:
    raw_points: int = 0
    position_dupes: int = 0
    short_segments_dropped: int = 0
    alt_outliers_removed: int = 0
    speed_outliers_removed: int = 0
    segments: int = 0
    points: int = 0
    points_no_agl: int = 0

    def merge(self, other: "TrackCounters") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def process_track(
    series: SegmentData,
    icao24: int,
    aircraft_class: AircraftClass,
    params: OutlierParams,
    elevation: ElevationService | None = None,
    airspace: Sequence[AirspaceVolume] = (),
) -> tuple[list[TrackSegment], TrackCounters]:
    """Run the full cleaning pipeline over one aircraft's observations."""
    counters = TrackCounters(raw_points=len(series))
    deduped = dedupe_positions(series)
    counters.position_dupes = len(series) - len(deduped)
    raw_segments, dropped = split_segments(deduped, params.max_gap_s, params.min_points)
    counters.short_segments_dropped += dropped

    ceiling = params.ceiling_for(aircraft_class)
    out: list[TrackSegment] = []
    for seg in raw_segments:
        mask = mad_outliers(seg.alt, params.mad_threshold, params.zero_mad_floor_ft)
        if mask.any():
            counters.alt_outliers_removed += int(mask.sum())
            seg = seg.take(~mask)
            if len(seg) < params.min_points:
                counters.short_segments_dropped += 1
                continue

        t = seg.time.astype(float)
        alt = (
            gaussian_smooth(seg.alt, t, params.smooth_window_s, params.sigma)
            if params.smooth_altitude
            else seg.alt
        )
        speed = (
            gaussian_smooth(seg.speed, t, params.smooth_window_s, params.sigma)
            if params.smooth_speed
            else seg.speed
        )
        seg = replace(seg, alt=alt, speed=speed)
        # Dynamic rates from the cleaned channels: climb rate from the
        # altitude gradient (ft/min), acceleration from the speed
        # gradient (kt/s).
        seg.vert_rate = numerical_gradient(seg.alt, t) * 60.0
        seg.accel = numerical_gradient(seg.speed, t)

        seg, removed = rate_outlier_filter(seg, ceiling, params.min_points)
        counters.speed_outliers_removed += removed
        if seg is None:
            counters.short_segments_dropped += 1
            continue

        resampled = interpolate_1hz(seg, params.min_points)
        if resampled is None:
            counters.short_segments_dropped += 1
            continue

        track = TrackSegment(
            icao24=icao24,
            aircraft_class=aircraft_class,
            segment_id=len(out),
            time=resampled.time,
            lat=resampled.lat,
            lon=resampled.lon,
            alt_msl=resampled.alt,
            speed=resampled.speed,
            course=resampled.course,
            vert_rate=resampled.vert_rate,
            accel=resampled.accel,
        )
        if elevation is not None:
            counters.points_no_agl += attach_agl(track, elevation)
        else:
            track.alt_agl = np.full(len(track), np.nan)
            track.agl_low_confidence = np.zeros(len(track), dtype=bool)
            counters.points_no_agl += len(track)
        track.airspace = classify_airspace_many(track.lat, track.lon, track.alt_msl, airspace)
        out.append(track)
        counters.segments += 1
        counters.points += len(track)
    return out, counters


def read_organized_rows(text: str) -> SegmentData:
    """Parse one organized hourly file into channel arrays.

    Altitude prefers the GNSS-derived value and falls back to the
    barometric one. Rows lacking speed or course are dropped here; the
    organizing stage only guarantees position and altitude.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return _empty_segment()
    idx = {name: i for i, name in enumerate(header)}
    required = ("time", "lat", "lon", "altBaro_ft", "altGeo_ft", "speed_kt", "track_deg")
    if any(col not in idx for col in required):
        raise InputError("organized file missing required columns")
    rows: list[tuple[float, float, float, float, float, float]] = []
    for row in reader:
        if len(row) != len(header):
            continue
        geo = row[idx["altGeo_ft"]]
        baro = row[idx["altBaro_ft"]]
        alt = geo or baro
        speed = row[idx["speed_kt"]]
        course = row[idx["track_deg"]]
        if not alt or not speed or not course:
            continue
        rows.append(
            (
                float(row[idx["time"]]),
                float(row[idx["lat"]]),
                float(row[idx["lon"]]),
                float(alt),
                float(speed),
                float(course),
            )
        )
    if not rows:
        return _empty_segment()
    arr = np.asarray(rows, dtype=float)
    return SegmentData(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5])


def _empty_segment() -> SegmentData:
    z = np.empty(0, dtype=float)
    return SegmentData(z, z.copy(), z.copy(), z.copy(), z.copy(), z.copy())


def _merge_sorted(parts: list[SegmentData]) -> SegmentData:
    """Concatenate per-hour arrays, sort by time, drop duplicate stamps."""
    time = np.concatenate([p.time for p in parts])
    order = np.argsort(time, kind="stable")
    merged = SegmentData(
        time[order],
        np.concatenate([p.lat for p in parts])[order],
        np.concatenate([p.lon for p in parts])[order],
        np.concatenate([p.alt for p in parts])[order],
        np.concatenate([p.speed for p in parts])[order],
        np.concatenate([p.course for p in parts])[order],
    )
    if len(merged) > 1:
        keep = np.ones(len(merged), dtype=bool)
        keep[1:] = np.diff(merged.time) > 0
        merged = merged.take(keep)
    return merged


def _fmt(value: float) -> str:
    return "" if np.isnan(value) else repr(float(value))


def write_processed_csv(path: Path, segments: Sequence[TrackSegment]) -> int:
    """Write one aircraft's segments; returns the number of rows."""
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROCESSED_COLUMNS)
        for seg in segments:
            agl = seg.alt_agl if seg.alt_agl is not None else np.full(len(seg), np.nan)
            airspace = seg.airspace or ["Other"] * len(seg)
            for i in range(len(seg)):
                w.writerow(
                    [
                        int(seg.time[i]),
                        repr(float(seg.lat[i])),
                        repr(float(seg.lon[i])),
                        repr(float(seg.alt_msl[i])),
                        _fmt(agl[i]),
                        repr(float(seg.speed[i])),
                        repr(float(seg.course[i])),
                        repr(float(seg.vert_rate[i])),
                        repr(float(seg.accel[i])),
                        airspace[i],
                        seg.segment_id,
                    ]
                )
                rows += 1
    return rows


@dataclass
class ProcessCounts:
    aircraft: int = 0
    files_written: int = 0
    members_skipped: int = 0
    counters: TrackCounters = field(default_factory=TrackCounters)

    def as_dict(self) -> dict[str, int]:
        d = {"aircraft": self.aircraft, "files_written": self.files_written,
             "members_skipped": self.members_skipped}
        d.update(self.counters.as_dict())
        return d


def process_archive(
    archive_path: Path | str,
    archive_root: Path | str,
    processed_root: Path | str,
    params: OutlierParams,
    elevation: ElevationService | None = None,
    airspace: Sequence[AirspaceVolume] = (),
) -> ProcessCounts:
    """Process one leaf archive into per-aircraft annual track files.

    The archive's position under the archive root supplies the year and
    type tiers; outputs mirror the same tiers under the processed root,
    one file per aircraft. Unreadable or foreign members are skipped and
    counted.
    """
    archive_path = Path(archive_path)
    rel = archive_path.relative_to(archive_root)
    tiers = rel.parts
    if len(tiers) != 4:
        raise ArchiveError(f"archive not at hierarchy depth 4: {rel}")
    year_dir, class_dir, seat_dir = tiers[0], tiers[1], tiers[2]
    range_dir = archive_path.name[: -len(".zip")]
    try:
        aircraft_class = AircraftClass(class_dir)
    except ValueError:
        aircraft_class = AircraftClass.UNKNOWN

    counts = ProcessCounts()
    by_aircraft: dict[int, list[SegmentData]] = {}
    try:
        zf = zipfile.ZipFile(archive_path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise ArchiveError(f"cannot open archive {archive_path}: {exc}") from exc
    with zf:
        for name in sorted(zf.namelist()):
            m = ORGANIZED_FILE_RE.match(name)
            if not m:
                counts.members_skipped += 1
                continue
            try:
                text = zf.read(name).decode("utf-8")
                part = read_organized_rows(text)
            except (zipfile.BadZipFile, InputError, UnicodeDecodeError, ValueError):
                counts.members_skipped += 1
                continue
            if len(part):
                by_aircraft.setdefault(parse_icao24(m.group(3)), []).append(part)

    out_dir = Path(processed_root) / year_dir / class_dir / seat_dir / range_dir
    for addr in sorted(by_aircraft):
        series = _merge_sorted(by_aircraft[addr])
        segments, counters = process_track(
            series, addr, aircraft_class, params, elevation, airspace
        )
        counts.aircraft += 1
        counts.counters.merge(counters)
        if segments:
            write_processed_csv(out_dir / f"{format_icao24(addr)}.csv", segments)
            counts.files_written += 1
    return counts
