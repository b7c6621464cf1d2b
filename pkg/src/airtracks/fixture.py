"""Deterministic synthetic corpus for desk-scale end-to-end runs.

Builds a self-contained input tree (two raw hours, fifty aircraft, a
synthetic elevation tile, land/filter/airspace polygons, and two national
registries) plus a ready-to-run pipeline config. Everything is generated
from a fixed seed with fixed-precision formatting, so repeated builds are
byte-identical and the end-to-end counts are reproducible.

The fleet deliberately exercises every cleaning path: a coverage gap, an
altitude spike, a speed spike, missing positions, duplicated rows, an
out-of-area excursion, an over-ocean orbit, a below-terrain low flyer,
on-ground rows, and a handful of aircraft absent from every registry.
"""

from __future__ import annotations

import datetime as dt
import gzip
import math
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from airtracks import config as config_mod
from airtracks.config import PipelineConfig

DEFAULT_SEED = 20200316

DAY = dt.date(2020, 3, 16)
HOURS = (5, 6)
_EPOCH = dt.datetime(2020, 3, 16, tzinfo=dt.timezone.utc)

# Study area: one 1x1 degree elevation tile; land west of the coast line,
# ocean east of it. The filter polygon sits inside the tile with a margin
# on the east so excursions get geo-dropped.
TILE_SW = (34, -119)
COAST_LON = -118.35
FILTER_RING = [
    (34.05, -118.98),
    (34.05, -118.05),
    (34.95, -118.05),
    (34.95, -118.98),
]
LAND_RING = [
    (34.0, -119.0),
    (34.0, COAST_LON),
    (35.0, COAST_LON),
    (35.0, -119.0),
]

RAW_HEADER = (
    "time,icao24,lat,lon,velocity,heading,vertrate,callsign,"
    "onground,baroaltitude,geoaltitude,lastposupdate"
)


@dataclass
class _Aircraft:
    addr: int
    kind: str  # rotor | fwse | fwme | unknown
    center_lat: float
    center_lon: float
    radius_deg: float
    omega_deg_s: float
    phase_deg: float
    speed_mps: float
    alt_base_m: float
    alt_amp_m: float
    alt_period_s: float
    cadence_s: float
    hours: tuple[int, ...]
    window: tuple[float, float]  # active offsets within each hour
    quirk: str = ""


def _hour_unix(hour: int) -> int:
    return int((_EPOCH + dt.timedelta(hours=hour)).timestamp())


def terrain_elevation_m(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Smooth synthetic terrain surface used for the tile and for oracles."""
    la = (np.asarray(lat, dtype=float) - TILE_SW[0]) * 1200.0
    lo = (np.asarray(lon, dtype=float) - TILE_SW[1]) * 1200.0
    return np.floor(200.0 + 150.0 * np.sin(la / 200.0) * np.cos(lo / 200.0))


def _write_terrain(terrain_dir: Path) -> None:
    terrain_dir.mkdir(parents=True, exist_ok=True)
    rows = cols = 1201
    r = np.arange(rows)
    c = np.arange(cols)
    # Node (row, col) sits at lat = sw+1 - row/1200, lon = sw + col/1200.
    lat = TILE_SW[0] + 1.0 - r / 1200.0
    lon = TILE_SW[1] + c / 1200.0
    grid = terrain_elevation_m(lat[:, None], lon[None, :]).astype(">i2")
    (terrain_dir / "N34W119.hgt").write_bytes(grid.tobytes())


def _write_geojson_ring(path: Path, ring, properties=None) -> None:
    import json

    coords = [[lon, lat] for lat, lon in ring] + [[ring[0][1], ring[0][0]]]
    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": properties or {},
                "geometry": {"type": "Polygon", "coordinates": [coords]},
            }
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _write_airspace(path: Path) -> None:
    import json

    def octagon(clat, clon, radius):
        ring = []
        for k in range(8):
            a = math.radians(45.0 * k)
            ring.append([clon + radius * math.cos(a), clat + radius * math.sin(a)])
        ring.append(ring[0])
        return ring

    doc = {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"class": "B", "floor_ft_msl": 0, "ceiling_ft_msl": 8000},
                "geometry": {"type": "Polygon", "coordinates": [octagon(34.4, -118.7, 0.12)]},
            },
            {
                "type": "Feature",
                "properties": {"class": "D", "floor_ft_msl": 0, "ceiling_ft_msl": 3000},
                "geometry": {"type": "Polygon", "coordinates": [octagon(34.4, -118.7, 0.04)]},
            },
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


ROTOR_BAND_LO = 0xA00C12
ROTOR_BAND_HI = 0xA00D1F  # inclusive last registered address


def _write_registries(registry_dir: Path) -> None:
    registry_dir.mkdir(parents=True, exist_ok=True)
    us = ["mode_s_code_hex,type_aircraft,no_seats,expiration_date,n_number"]
    for addr in range(ROTOR_BAND_LO, ROTOR_BAND_HI + 1):
        us.append(f"{addr:06X},Rotorcraft,5,2022-12-31,N{addr % 9000 + 1000}R")
    for i in range(40):
        us.append(f"{0xA10000 + i * 7:06X},Fixed Wing Single-Engine,4,2021-06-30,N{i + 100}S")
    for i in range(30):
        us.append(f"{0xA20000 + i * 11:06X},Fixed Wing Multi-Engine,12,2023-01-31,N{i + 500}M")
    for i in range(5):
        us.append(f"{0xA30000 + i:06X},Glider,2,2021-12-31,N{i + 900}G")
    # Unknown seat count and an expired registration, both still classified.
    us.append(f"{0xA40001:06X},Rotorcraft,,2022-12-31,N77XR")
    us.append(f"{0xA50001:06X},Fixed Wing Single-Engine,4,2019-05-01,N88XE")
    (registry_dir / "us_2020.csv").write_text("\n".join(us) + "\n")

    ca = ["mode_s_hex,aircraft_type,seats,expiry_date,mark"]
    for i in range(10):
        ca.append(f"{0xC00100 + i:06X},Helicopter,15,2022-06-30,C-G{i:03d}")
    # Same airframe also present in the US registry with a later expiry,
    # so the US entry wins duplicate resolution.
    ca.append(f"{ROTOR_BAND_LO:06X},Helicopter,5,2021-01-01,C-FDUP")
    (registry_dir / "ca_2020.csv").write_text("\n".join(ca) + "\n")


def _build_fleet(rng: random.Random) -> list[_Aircraft]:
    fleet: list[_Aircraft] = []

    def base_kwargs(kind: str) -> dict:
        speed_kt = {
            "rotor": rng.uniform(60, 130),
            "fwse": rng.uniform(90, 180),
            "fwme": rng.uniform(150, 400),
            "unknown": rng.uniform(80, 250),
        }[kind]
        alt_base = {
            "rotor": rng.uniform(450, 1100),
            "fwse": rng.uniform(600, 1800),
            "fwme": rng.uniform(1000, 2700),
            "unknown": rng.uniform(500, 1500),
        }[kind]
        start = rng.uniform(0, 600)
        return dict(
            center_lat=rng.uniform(34.2, 34.8),
            center_lon=rng.uniform(-118.9, -118.45),
            radius_deg=rng.uniform(0.03, 0.1),
            omega_deg_s=rng.choice([-1, 1]) * rng.uniform(0.15, 0.45),
            phase_deg=rng.uniform(0, 360),
            speed_mps=speed_kt * 1852.0 / 3600.0,
            alt_base_m=alt_base,
            alt_amp_m=rng.uniform(50, 180),
            alt_period_s=rng.uniform(600, 1800),
            cadence_s=rng.uniform(5.0, 9.0),
            hours=HOURS,
            window=(start, min(3600.0, start + rng.uniform(1800, 3300))),
        )

    rotor_addrs = [ROTOR_BAND_LO + k * 9 for k in range(30)]
    for i, addr in enumerate(rotor_addrs):
        fleet.append(_Aircraft(addr=addr, kind="rotor", **base_kwargs("rotor")))
    for i in range(8):
        fleet.append(_Aircraft(addr=0xA10000 + i * 7, kind="fwse", **base_kwargs("fwse")))
    for i in range(5):
        fleet.append(_Aircraft(addr=0xA20000 + i * 11, kind="fwme", **base_kwargs("fwme")))
    for i in range(7):
        fleet.append(_Aircraft(addr=0xB00001 + i * 0x101, kind="unknown", **base_kwargs("unknown")))

    # Quirks, assigned to specific rotorcraft and the presence-variation
    # aircraft. Index 0 is the exemplar airframe with a clean continuous
    # track across both hours.
    fleet[0].quirk = "continuous"
    fleet[0].window = (0.0, 3600.0)
    fleet[0].cadence_s = 6.0
    fleet[1].quirk = "gap"
    fleet[2].quirk = "alt_spike"
    fleet[3].quirk = "speed_spike"
    fleet[4].quirk = "missing_pos"
    fleet[5].quirk = "dupes"
    fleet[6].quirk = "east_excursion"
    fleet[6].center_lat = 34.5
    fleet[6].center_lon = -118.08
    fleet[6].radius_deg = 0.1
    fleet[7].quirk = "ocean"
    fleet[7].center_lat = 34.5
    fleet[7].center_lon = -118.2
    fleet[7].radius_deg = 0.08
    fleet[8].quirk = "low_flyer"
    fleet[8].center_lat = 34.6
    fleet[8].center_lon = -118.6
    fleet[8].radius_deg = 0.05
    fleet[8].alt_base_m = 150.0
    fleet[8].alt_amp_m = 20.0
    fleet[9].quirk = "on_ground"
    # Presence variation across the two hours.
    fleet[36].hours = (5,)
    fleet[37].hours = (5,)
    fleet[42].hours = (6,)
    fleet[49].hours = (5,)
    return fleet


def _emit_rows(ac: _Aircraft, hour: int) -> list[str]:
    t0 = _hour_unix(hour)
    rows: list[str] = []
    lo, hi = ac.window
    t = lo
    k = 0
    while t < hi:
        unix = t0 + t
        elapsed = (hour - HOURS[0]) * 3600.0 + t
        in_gap = ac.quirk == "gap" and 1500.0 <= t < 1800.0
        if not in_gap:
            rows.extend(_one_row(ac, unix, elapsed, k))
            if ac.quirk == "dupes" and k % 15 == 7:
                rows.extend(_one_row(ac, unix, elapsed, k, stale=True))
        t += ac.cadence_s
        k += 1
    return rows


def _one_row(ac: _Aircraft, unix: float, elapsed: float, k: int, stale: bool = False) -> list[str]:
    theta = math.radians(ac.phase_deg + ac.omega_deg_s * elapsed)
    lat = ac.center_lat + ac.radius_deg * math.sin(theta)
    lon = ac.center_lon + ac.radius_deg * math.cos(theta)
    sign = 1.0 if ac.omega_deg_s >= 0 else -1.0
    course = (math.degrees(math.atan2(-math.sin(theta) * sign, math.cos(theta) * sign))) % 360.0
    alt_m = ac.alt_base_m + ac.alt_amp_m * math.sin(2 * math.pi * elapsed / ac.alt_period_s)
    vert_mps = (
        ac.alt_amp_m * (2 * math.pi / ac.alt_period_s) * math.cos(2 * math.pi * elapsed / ac.alt_period_s)
    )
    speed = ac.speed_mps * (1.0 + 0.05 * math.sin(elapsed / 300.0))
    on_ground = False

    if ac.quirk == "alt_spike" and k in (40, 41, 42, 43, 44):
        alt_m += 3000.0
    if ac.quirk == "speed_spike" and k in (60, 61, 62):
        speed = 140.0  # ~272 kt, above the rotorcraft ceiling
    if ac.quirk == "on_ground" and k < 10:
        on_ground = True
        speed = 5.0
        alt_m = 250.0

    lat_s = f"{lat:.6f}"
    lon_s = f"{lon:.6f}"
    if ac.quirk == "missing_pos" and k % 20 == 10:
        lat_s = ""
        lon_s = ""
    geo_s = f"{alt_m:.1f}"
    baro_s = f"{alt_m - 30.0:.1f}"
    if ac.quirk == "baro_only":
        geo_s = ""
    lpu = unix - (5.0 if stale else 1.0)
    return [
        f"{int(unix)},{ac.addr:06X},{lat_s},{lon_s},{speed:.2f},{course:.1f},"
        f"{vert_mps:.2f},FIX{ac.addr % 1000:03d},{'true' if on_ground else 'false'},"
        f"{baro_s},{geo_s},{lpu:.1f}"
    ]


_MALFORMED_ROWS = [
    "not,enough,columns",
    "1584334800,ZZZZZZ,34.5,-118.5,50.0,90.0,0.0,BAD,false,1000.0,1030.0,1584334799.0",
    "bogus,A00C12,34.5,-118.5,50.0,90.0,0.0,BAD,false,1000.0,1030.0,1584334799.0",
]


def build_fixture(root: Path | str, seed: int = DEFAULT_SEED) -> Path:
    """Generate the corpus under ``root`` and return the config file path."""
    root = Path(root)
    rng = random.Random(seed)

    _write_terrain(root / "terrain")
    _write_geojson_ring(root / "land.geojson", LAND_RING, {"kind": "land"})
    _write_geojson_ring(root / "polygon.geojson", FILTER_RING, {"kind": "filter"})
    _write_airspace(root / "airspace.geojson")
    _write_registries(root / "registry")

    fleet = _build_fleet(rng)
    # One aircraft reports only barometric altitude.
    fleet[11].quirk = "baro_only"

    day_dir = root / "raw" / DAY.isoformat()
    day_dir.mkdir(parents=True, exist_ok=True)
    for hour in HOURS:
        rows: list[str] = [RAW_HEADER]
        for ac in fleet:
            if hour in ac.hours:
                rows.extend(_emit_rows(ac, hour))
        for i, junk in enumerate(_MALFORMED_ROWS):
            rows.insert(1 + i * max(1, len(rows) // 4), junk)
        payload = ("\n".join(rows) + "\n").encode()
        out = day_dir / f"states_{DAY.isoformat()}-{hour:02d}.csv.gz"
        with open(out, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)

    cfg = PipelineConfig(
        raw_root=str(root / "raw"),
        organized_root=str(root / "organized"),
        archive_root=str(root / "archives"),
        processed_root=str(root / "processed"),
        stats_root=str(root / "stats"),
        terrain_root=str(root / "terrain"),
        registry_root=str(root / "registry"),
        polygon_file=str(root / "polygon.geojson"),
        land_file=str(root / "land.geojson"),
        airspace_file=str(root / "airspace.geojson"),
        years=(2020,),
        workers=2,
    )
    cfg_path = root / "fixture.cfg"
    cfg_path.write_text(config_mod.dumps(cfg))
    return cfg_path
