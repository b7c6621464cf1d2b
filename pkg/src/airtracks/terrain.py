"""Digital elevation model tiles and above-ground elevation queries.

Two raster sources are supported. The fine source is a 3 arc-second
product shipped as 1201x1201 node-registered big-endian shorts, one file
per 1x1 degree cell named by its SW corner (N34W119.hgt). The coarse
fallback is a 30 arc-second product shipped as sixteen large little-endian
cell-registered tiles with published extents. Queries over the ocean
short-circuit to 0 ft MSL without touching any raster.
"""

from __future__ import annotations

import enum
import math
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from airtracks.errors import CorruptTileError, MissingTerrainError
from airtracks.geometry import LandMask
from airtracks.units import FOOT_M

SRTM3_DIM = 1201
SRTM3_VOID = -32768

GLOBE_VOID = -500

# Published 30 arc-second tile layout: name -> (sw_lat, sw_lon, rows, cols).
GLOBE_TILES: dict[str, tuple[int, int, int, int]] = {
    "a": (50, -180, 4800, 10800),
    "b": (50, -90, 4800, 10800),
    "c": (50, 0, 4800, 10800),
    "d": (50, 90, 4800, 10800),
    "e": (0, -180, 6000, 10800),
    "f": (0, -90, 6000, 10800),
    "g": (0, 0, 6000, 10800),
    "h": (0, 90, 6000, 10800),
    "i": (-50, -180, 6000, 10800),
    "j": (-50, -90, 6000, 10800),
    "k": (-50, 0, 6000, 10800),
    "l": (-50, 90, 6000, 10800),
    "m": (-90, -180, 4800, 10800),
    "n": (-90, -90, 4800, 10800),
    "o": (-90, 0, 4800, 10800),
    "p": (-90, 90, 4800, 10800),
}

_SRTM_NAME_RE = re.compile(r"^([NS])(\d{2})([EW])(\d{3})\.hgt$", re.IGNORECASE)


class TerrainSource(enum.Enum):
    SRTM3 = "SRTM3"
    GLOBE = "GLOBE"
    OCEAN = "OCEAN"


@dataclass(frozen=True)
class ElevationQueryResult:
    elevation_ft: float
    source: TerrainSource


@dataclass
class DemTile:
    """One decoded elevation raster with geo-registration metadata.

    Node-registered tiles place sample (0, 0) exactly on the NW corner;
    cell-registered tiles place it half a cell inside. Rows run north to
    south in both cases. Samples are meters MSL.
    """

    source: TerrainSource
    sw_lat: float
    sw_lon: float
    resolution_arcsec: float
    rows: int
    cols: int
    samples: np.ndarray
    void_value: int
    cell_registered: bool

    @property
    def _res_deg(self) -> float:
        return self.resolution_arcsec / 3600.0

    @property
    def north(self) -> float:
        if self.cell_registered:
            return self.sw_lat + self.rows * self._res_deg
        return self.sw_lat + (self.rows - 1) * self._res_deg

    @property
    def east(self) -> float:
        if self.cell_registered:
            return self.sw_lon + self.cols * self._res_deg
        return self.sw_lon + (self.cols - 1) * self._res_deg

    def contains(self, lat: float, lon: float) -> bool:
        return self.sw_lat <= lat <= self.north and self.sw_lon <= lon <= self.east

    def locate(self, lat: float, lon: float) -> tuple[float, float]:
        """Fractional (row, col) of a position in the node lattice.

        Coordinates that land on a node within a tiny tolerance are
        snapped so node queries reproduce the stored sample exactly.
        """
        res = self._res_deg
        if self.cell_registered:
            fr = (self.north - lat) / res - 0.5
            fc = (lon - self.sw_lon) / res - 0.5
        else:
            fr = (self.north - lat) / res
            fc = (lon - self.sw_lon) / res
        return _snap(fr, self.rows), _snap(fc, self.cols)


def _snap(f: float, n: int) -> float:
    r = round(f)
    if abs(f - r) < 1e-7:
        f = float(r)
    return min(max(f, 0.0), float(n - 1))


def load_srtm3(data: bytes, sw_lat: float, sw_lon: float) -> DemTile:
    expected = SRTM3_DIM * SRTM3_DIM * 2
    if len(data) != expected:
        raise CorruptTileError(
            f"3 arc-second tile must be {expected} bytes, got {len(data)}"
        )
    grid = np.frombuffer(data, dtype=">i2").reshape(SRTM3_DIM, SRTM3_DIM)
    return DemTile(
        source=TerrainSource.SRTM3,
        sw_lat=sw_lat,
        sw_lon=sw_lon,
        resolution_arcsec=3.0,
        rows=SRTM3_DIM,
        cols=SRTM3_DIM,
        samples=grid,
        void_value=SRTM3_VOID,
        cell_registered=False,
    )


def load_globe(data: bytes, sw_lat: float, sw_lon: float, rows: int, cols: int) -> DemTile:
    expected = rows * cols * 2
    if len(data) != expected:
        raise CorruptTileError(
            f"30 arc-second tile must be {expected} bytes, got {len(data)}"
        )
    # Row 0 is the northernmost row, matching the published convention.
    grid = np.frombuffer(data, dtype="<i2").reshape(rows, cols)
    return DemTile(
        source=TerrainSource.GLOBE,
        sw_lat=sw_lat,
        sw_lon=sw_lon,
        resolution_arcsec=30.0,
        rows=rows,
        cols=cols,
        samples=grid,
        void_value=GLOBE_VOID,
        cell_registered=True,
    )


def load_dem_tile(
    data: bytes,
    source: TerrainSource,
    sw_corner: tuple[float, float],
    rows: int | None = None,
    cols: int | None = None,
) -> DemTile:
    sw_lat, sw_lon = sw_corner
    if source is TerrainSource.SRTM3:
        return load_srtm3(data, sw_lat, sw_lon)
    if source is TerrainSource.GLOBE:
        if rows is None or cols is None:
            raise ValueError("rows and cols required for 30 arc-second tiles")
        return load_globe(data, sw_lat, sw_lon, rows, cols)
    raise ValueError(f"not a raster source: {source}")


def bilinear_elevation_m(tile: DemTile, lat: float, lon: float) -> float:
    vals, ok = bilinear_elevation_m_many(tile, np.array([lat]), np.array([lon]))
    if not ok[0]:
        raise MissingTerrainError(f"all corner samples void at ({lat}, {lon})")
    return float(vals[0])


def bilinear_elevation_m_many(
    tile: DemTile, lats: np.ndarray, lons: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear interpolation of the 4 surrounding nodes, vectorized.

    Void corner samples are replaced by the mean of the non-void corners
    of the same cell; a cell with all four corners void yields an invalid
    result (second return value False).
    """
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    res = tile._res_deg
    if tile.cell_registered:
        fr = (tile.north - lats) / res - 0.5
        fc = (lons - tile.sw_lon) / res - 0.5
    else:
        fr = (tile.north - lats) / res
        fc = (lons - tile.sw_lon) / res
    fr = _snap_many(fr, tile.rows)
    fc = _snap_many(fc, tile.cols)

    r0 = np.minimum(np.floor(fr).astype(int), tile.rows - 2)
    c0 = np.minimum(np.floor(fc).astype(int), tile.cols - 2)
    r0 = np.maximum(r0, 0)
    c0 = np.maximum(c0, 0)
    dr = fr - r0
    dc = fc - c0

    g = tile.samples
    corners = np.stack(
        [
            g[r0, c0],
            g[r0, c0 + 1],
            g[r0 + 1, c0],
            g[r0 + 1, c0 + 1],
        ]
    ).astype(float)
    void = corners == float(tile.void_value)
    n_ok = (~void).sum(axis=0)
    ok = n_ok > 0
    sums = np.where(void, 0.0, corners).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_ok = np.where(ok, sums / np.maximum(n_ok, 1), np.nan)
    corners = np.where(void, mean_ok, corners)

    top = corners[0] * (1.0 - dc) + corners[1] * dc
    bot = corners[2] * (1.0 - dc) + corners[3] * dc
    vals = top * (1.0 - dr) + bot * dr
    return np.where(ok, vals, np.nan), ok


def _snap_many(f: np.ndarray, n: int) -> np.ndarray:
    r = np.round(f)
    f = np.where(np.abs(f - r) < 1e-7, r, f)
    return np.clip(f, 0.0, float(n - 1))


def srtm3_file_name(sw_lat: int, sw_lon: int) -> str:
    ns = "N" if sw_lat >= 0 else "S"
    ew = "E" if sw_lon >= 0 else "W"
    return f"{ns}{abs(sw_lat):02d}{ew}{abs(sw_lon):03d}.hgt"


def parse_srtm3_file_name(name: str) -> tuple[int, int] | None:
    m = _SRTM_NAME_RE.match(name)
    if not m:
        return None
    lat = int(m.group(2)) * (1 if m.group(1).upper() == "N" else -1)
    lon = int(m.group(4)) * (1 if m.group(3).upper() == "E" else -1)
    return lat, lon


def globe_tile_name_for(lat: float, lon: float) -> str | None:
    for name, (sw_lat, sw_lon, rows, cols) in GLOBE_TILES.items():
        north = sw_lat + rows / 120.0
        east = sw_lon + cols / 120.0
        if sw_lat <= lat <= north and sw_lon <= lon <= east:
            return name
    return None


class TerrainCache:
    """Lazy thread-safe tile store with single-flight loading.

    Decoded tiles are immutable and shared across workers; at most one
    thread loads any given tile while the others wait on it. Missing
    files are cached as misses so repeat queries stay cheap.
    """

    def __init__(self, root: Path | str | None = None):
        self.root = Path(root) if root is not None else None
        self._tiles: dict[tuple, DemTile | None] = {}
        self._explicit: list[DemTile] = []
        self._lock = threading.Lock()
        self._pending: dict[tuple, threading.Event] = {}
        self.load_count = 0

    def add_tile(self, tile: DemTile) -> None:
        """Register a pre-built tile (used by tests and synthetic runs)."""
        with self._lock:
            self._explicit.append(tile)

    def _explicit_tile_for(self, lat: float, lon: float, source: TerrainSource) -> DemTile | None:
        with self._lock:
            for tile in self._explicit:
                if tile.source is source and tile.contains(lat, lon):
                    return tile
        return None

    def tile_for(self, lat: float, lon: float) -> DemTile | None:
        """Covering tile, preferring the finer 3 arc-second source."""
        tile = self._explicit_tile_for(lat, lon, TerrainSource.SRTM3)
        if tile is not None:
            return tile
        key = (TerrainSource.SRTM3.value, float(math.floor(lat)), float(math.floor(lon)))
        tile = self._get_or_load(key, lambda: self._load_srtm(key[1], key[2]))
        if tile is not None:
            return tile
        tile = self._explicit_tile_for(lat, lon, TerrainSource.GLOBE)
        if tile is not None:
            return tile
        name = globe_tile_name_for(lat, lon)
        if name is None:
            return None
        gkey = (TerrainSource.GLOBE.value, name, "")
        return self._get_or_load(gkey, lambda: self._load_globe(name))

    def _get_or_load(self, key: tuple, loader) -> DemTile | None:
        while True:
            with self._lock:
                if key in self._tiles:
                    return self._tiles[key]
                event = self._pending.get(key)
                if event is None:
                    event = threading.Event()
                    self._pending[key] = event
                    mine = True
                else:
                    mine = False
            if not mine:
                event.wait()
                continue
            try:
                tile = loader()
                if tile is not None:
                    self.load_count += 1
            except Exception:
                with self._lock:
                    del self._pending[key]
                    event.set()
                raise
            with self._lock:
                self._tiles[key] = tile
                del self._pending[key]
                event.set()
            return tile

    def _load_srtm(self, sw_lat: float, sw_lon: float) -> DemTile | None:
        if self.root is None:
            return None
        path = self.root / srtm3_file_name(int(sw_lat), int(sw_lon))
        if not path.is_file():
            return None
        return load_srtm3(path.read_bytes(), sw_lat, sw_lon)

    def _load_globe(self, name: str) -> DemTile | None:
        if self.root is None:
            return None
        sw_lat, sw_lon, rows, cols = GLOBE_TILES[name]
        for candidate in (f"{name}10g", f"{name}10g.bin"):
            path = self.root / candidate
            if path.is_file():
                return load_globe(path.read_bytes(), sw_lat, sw_lon, rows, cols)
        return None


def elevation_at(lat: float, lon: float, tiles: TerrainCache) -> ElevationQueryResult:
    """Interpolated elevation in feet for a point assumed to be over land."""
    tile = tiles.tile_for(lat, lon)
    if tile is None:
        raise MissingTerrainError(f"no elevation tile covers ({lat}, {lon})")
    meters = bilinear_elevation_m(tile, lat, lon)
    return ElevationQueryResult(meters / FOOT_M, tile.source)


class ElevationService:
    """Terrain queries with the ocean short-circuit applied first."""

    def __init__(self, tiles: TerrainCache, land: LandMask | None = None):
        self.tiles = tiles
        self.land = land

    def query(self, lat: float, lon: float) -> ElevationQueryResult:
        if self.land is not None and self.land.over_ocean(lat, lon):
            return ElevationQueryResult(0.0, TerrainSource.OCEAN)
        return elevation_at(lat, lon, self.tiles)

    def query_many(self, lats: np.ndarray, lons: np.ndarray) -> tuple[np.ndarray, list[TerrainSource | None]]:
        """Vectorized queries: (elevation_ft with NaN for missing terrain,
        per-point source; None marks missing terrain)."""
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        n = lats.size
        elev = np.full(n, np.nan)
        sources: list[TerrainSource | None] = [None] * n
        if n == 0:
            return elev, sources

        if self.land is not None:
            ocean = self.land.over_ocean_many(lats, lons)
        else:
            ocean = np.zeros(n, dtype=bool)
        elev[ocean] = 0.0
        for i in np.flatnonzero(ocean):
            sources[i] = TerrainSource.OCEAN

        todo = np.flatnonzero(~ocean)
        if todo.size == 0:
            return elev, sources
        # Group by 1-degree cell so each tile is resolved once.
        cells = np.stack([np.floor(lats[todo]), np.floor(lons[todo])], axis=1)
        for cell in np.unique(cells, axis=0):
            sel = todo[(cells[:, 0] == cell[0]) & (cells[:, 1] == cell[1])]
            tile = self.tiles.tile_for(float(lats[sel[0]]), float(lons[sel[0]]))
            if tile is None:
                continue
            vals, ok = bilinear_elevation_m_many(tile, lats[sel], lons[sel])
            elev[sel] = np.where(ok, vals / FOOT_M, np.nan)
            for j, idx in enumerate(sel):
                if ok[j]:
                    sources[idx] = tile.source
        return elev, sources
