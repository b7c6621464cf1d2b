"""Planar lat/lon geometry: hulls, buffered filter polygons, containment.

Polygon math runs in the plate-carree plane (x = longitude, y = latitude)
with longitude unwrapping near the antimeridian. Buffering displaces hull
vertices outward along great-circle bearings, an accepted approximation
of a true geodesic buffer. Containment treats the boundary as inside.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from airtracks.errors import (
    DegenerateGeometryError,
    InputError,
    UnsupportedGeometryError,
)
from airtracks.units import EARTH_RADIUS_NM


class GeoPoint(NamedTuple):
    lat: float
    lon: float


def _unwrap_lons(lons: np.ndarray) -> np.ndarray:
    """Shift negative longitudes by 360 when a ring spans the antimeridian."""
    if lons.size and lons.max() - lons.min() > 180.0:
        lons = np.where(lons < 0.0, lons + 360.0, lons)
    return lons


class GeoPolygon:
    """A simple closed ring of (lat, lon) vertices, stored open and CCW."""

    def __init__(self, vertices: Sequence[Sequence[float]] | np.ndarray):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array of lat, lon")
        if v.shape[0] >= 2 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        if v.shape[0] < 3:
            raise DegenerateGeometryError("polygon needs at least 3 distinct vertices")
        lons = _unwrap_lons(v[:, 1].copy())
        v = np.column_stack([v[:, 0], lons])
        if _signed_area(v) < 0.0:
            v = v[::-1].copy()
        self.vertices = v

    @property
    def lats(self) -> np.ndarray:
        return self.vertices[:, 0]

    @property
    def lons(self) -> np.ndarray:
        return self.vertices[:, 1]

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, GeoPolygon) and np.array_equal(self.vertices, other.vertices)

    def __repr__(self) -> str:
        return f"GeoPolygon({len(self)} vertices)"

    def closed_ring(self) -> np.ndarray:
        return np.vstack([self.vertices, self.vertices[:1]])

    def area(self) -> float:
        """Unsigned shoelace area in squared degrees."""
        return abs(_signed_area(self.vertices))

    def bounds(self) -> tuple[float, float, float, float]:
        return (
            float(self.lats.min()),
            float(self.lons.min()),
            float(self.lats.max()),
            float(self.lons.max()),
        )

    def is_convex(self) -> bool:
        x, y = self.lons, self.lats
        n = len(self)
        sign = 0
        for i in range(n):
            ax, ay = x[i], y[i]
            bx, by = x[(i + 1) % n], y[(i + 1) % n]
            cx, cy = x[(i + 2) % n], y[(i + 2) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross != 0.0:
                if sign == 0:
                    sign = 1 if cross > 0 else -1
                elif (cross > 0) != (sign > 0):
                    return False
        return True

    def contains(self, lat: float, lon: float) -> bool:
        return bool(self.contains_many(np.array([lat]), np.array([lon]))[0])

    def contains_many(self, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
        """Boundary-inclusive even-odd containment test, vectorized."""
        y = np.asarray(lats, dtype=float)
        x = np.asarray(lons, dtype=float)
        # Map query longitudes into the polygon's unwrapped window.
        center = 0.5 * (self.lons.min() + self.lons.max())
        x = x + 360.0 * np.round((center - x) / 360.0)

        px = self.lons
        py = self.lats
        n = len(self)
        inside = np.zeros(y.shape, dtype=bool)
        on_edge = np.zeros(y.shape, dtype=bool)
        for i in range(n):
            x1, y1 = px[i], py[i]
            x2, y2 = px[(i + 1) % n], py[(i + 1) % n]
            # Edge crossing for the even-odd rule: half-open in y so a
            # vertex is counted once.
            crosses = (y1 > y) != (y2 > y)
            if np.any(crosses):
                xint = (x2 - x1) * (y - y1) / (y2 - y1) + x1
                inside ^= crosses & (x < xint)
            # Point-on-segment test; boundary counts as inside.
            ex, ey = x2 - x1, y2 - y1
            cross = ex * (y - y1) - ey * (x - x1)
            dot = (x - x1) * ex + (y - y1) * ey
            seg_len2 = ex * ex + ey * ey
            on_edge |= (np.abs(cross) <= 1e-12) & (dot >= 0.0) & (dot <= seg_len2)
        return inside | on_edge


def _signed_area(v: np.ndarray) -> float:
    x = v[:, 1]
    y = v[:, 0]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def convex_hull(points: Iterable[Sequence[float]]) -> GeoPolygon:
    """Minimal convex polygon containing the points (monotone chain).

    Collinear boundary points are dropped so the hull is the minimal
    vertex set. Raises DegenerateGeometryError for fewer than three
    non-collinear points.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (n, 2) lat, lon pairs")
    lons = _unwrap_lons(pts[:, 1].copy())
    # Work in (x=lon, y=lat); dedupe and sort lexicographically.
    xy = np.unique(np.column_stack([lons, pts[:, 0]]), axis=0)
    if xy.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 distinct points")

    def half(chain_pts):
        out: list[np.ndarray] = []
        for p in chain_pts:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                cross = (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])
                if cross <= 0.0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(xy)
    upper = half(xy[::-1])
    hull_xy = lower[:-1] + upper[:-1]
    if len(hull_xy) < 3:
        raise DegenerateGeometryError("points are collinear")
    hull = np.array(hull_xy)
    return GeoPolygon(np.column_stack([hull[:, 1], hull[:, 0]]))


def great_circle_nm(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Haversine distance in nautical miles."""
    p1, l1, p2, l2 = map(math.radians, (lat1, lon1, lat2, lon2))
    a = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin((l2 - l1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_NM * math.asin(min(1.0, math.sqrt(a)))


def destination(lat: float, lon: float, bearing_deg: float, distance_nm: float) -> GeoPoint:
    """Great-circle forward step on a spherical Earth."""
    delta = distance_nm / EARTH_RADIUS_NM
    theta = math.radians(bearing_deg)
    p1 = math.radians(lat)
    l1 = math.radians(lon)
    p2 = math.asin(
        math.sin(p1) * math.cos(delta) + math.cos(p1) * math.sin(delta) * math.cos(theta)
    )
    l2 = l1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(p1),
        math.cos(delta) - math.sin(p1) * math.sin(p2),
    )
    lon2 = math.degrees(l2)
    if lon2 > 180.0:
        lon2 -= 360.0
    elif lon2 < -180.0:
        lon2 += 360.0
    return GeoPoint(math.degrees(p2), lon2)


def buffer_polygon(poly: GeoPolygon, distance_nm: float) -> GeoPolygon:
    """Expand a convex polygon by displacing each vertex outward.

    Each vertex moves along the great-circle bearing of the outward
    bisector of its incident edges by ``distance_nm``. Zero distance
    returns the polygon unchanged.
    """
    if distance_nm < 0:
        raise ValueError("buffer distance must be non-negative")
    if not poly.is_convex():
        raise UnsupportedGeometryError("buffering requires a convex polygon")
    if distance_nm == 0.0:
        return GeoPolygon(poly.vertices.copy())

    v = poly.vertices
    n = len(poly)
    out = np.empty_like(v)
    for i in range(n):
        prev_v = v[(i - 1) % n]
        cur = v[i]
        next_v = v[(i + 1) % n]
        # Outward normals of the two incident edges in (x=lon, y=lat);
        # for a CCW ring the exterior is to the right of travel.
        n1 = _edge_outward_normal(prev_v, cur)
        n2 = _edge_outward_normal(cur, next_v)
        m = n1 + n2
        norm = math.hypot(m[0], m[1])
        if norm == 0.0:
            m = n2
            norm = math.hypot(m[0], m[1])
        m = m / norm
        bearing = math.degrees(math.atan2(m[0], m[1]))
        p = destination(cur[0], cur[1], bearing, distance_nm)
        out[i] = (p.lat, p.lon)
    return GeoPolygon(out)


def _edge_outward_normal(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dx = b[1] - a[1]
    dy = b[0] - a[0]
    norm = math.hypot(dx, dy)
    return np.array([dy / norm, -dx / norm])


def point_in_polygon(p: GeoPoint | Sequence[float], poly: GeoPolygon) -> bool:
    lat, lon = p
    return poly.contains(lat, lon)


class LandMask:
    """A set of land polygons (with optional holes) for the ocean test.

    A point is over the ocean iff it lies inside no land polygon.
    """

    def __init__(self, polygons: Sequence[tuple[GeoPolygon, Sequence[GeoPolygon]]]):
        self._polys = [(ext, list(holes)) for ext, holes in polygons]
        self._bounds = [ext.bounds() for ext, _ in self._polys]

    def __len__(self) -> int:
        return len(self._polys)

    @classmethod
    def from_geojson(cls, path: Path | str) -> "LandMask":
        return cls(read_geojson_polygons(path))

    def over_land_many(self, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        land = np.zeros(lats.shape, dtype=bool)
        for (ext, holes), (lat0, lon0, lat1, lon1) in zip(self._polys, self._bounds):
            pending = ~land
            box = pending & (lats >= lat0) & (lats <= lat1) & (lons >= lon0) & (lons <= lon1)
            if not np.any(box):
                continue
            inside = ext.contains_many(lats[box], lons[box])
            for hole in holes:
                inside &= ~hole.contains_many(lats[box], lons[box])
            land[box] |= inside
        return land

    def over_ocean_many(self, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
        return ~self.over_land_many(lats, lons)

    def over_ocean(self, lat: float, lon: float) -> bool:
        return bool(self.over_ocean_many(np.array([lat]), np.array([lon]))[0])


def is_over_ocean(p: GeoPoint | Sequence[float], land: LandMask) -> bool:
    lat, lon = p
    return land.over_ocean(lat, lon)


def read_geojson_polygons(path: Path | str) -> list[tuple[GeoPolygon, list[GeoPolygon]]]:
    """Load polygons (exterior plus holes) from a GeoJSON file.

    Accepts Polygon, MultiPolygon, Feature, and FeatureCollection.
    GeoJSON coordinates are (lon, lat) order.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read polygon file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"polygon file {path} is not valid JSON: {exc}") from exc
    out: list[tuple[GeoPolygon, list[GeoPolygon]]] = []
    for rings in _iter_geojson_rings(doc):
        ext = _ring_to_polygon(rings[0])
        holes = [_ring_to_polygon(r) for r in rings[1:]]
        out.append((ext, holes))
    if not out:
        raise InputError(f"no polygons found in {path}")
    return out


def load_filter_polygon(path: Path | str) -> GeoPolygon:
    """Load the single filter polygon used by the geospatial filter."""
    polys = read_geojson_polygons(path)
    return polys[0][0]


def _iter_geojson_rings(obj: dict) -> Iterable[list[list[Sequence[float]]]]:
    t = obj.get("type")
    if t == "FeatureCollection":
        for feat in obj.get("features", []):
            yield from _iter_geojson_rings(feat)
    elif t == "Feature":
        geom = obj.get("geometry") or {}
        yield from _iter_geojson_rings(geom)
    elif t == "Polygon":
        yield obj["coordinates"]
    elif t == "MultiPolygon":
        yield from obj["coordinates"]


def _ring_to_polygon(ring: Sequence[Sequence[float]]) -> GeoPolygon:
    arr = np.asarray(ring, dtype=float)
    return GeoPolygon(np.column_stack([arr[:, 1], arr[:, 0]]))


def polygon_to_geojson(poly: GeoPolygon, properties: dict | None = None) -> dict:
    ring = [[float(lon), float(lat)] for lat, lon in poly.closed_ring()]
    return {
        "type": "Feature",
        "properties": properties or {},
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


def write_geojson_polygon(path: Path | str, poly: GeoPolygon, properties: dict | None = None) -> None:
    doc = {"type": "FeatureCollection", "features": [polygon_to_geojson(poly, properties)]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def build_filter_polygon(
    land_polygons: Sequence[tuple[GeoPolygon, Sequence[GeoPolygon]]],
    buffer_nm: float = 60.0,
) -> GeoPolygon:
    """Convex hull of all land exterior vertices, expanded by a buffer."""
    points: list[tuple[float, float]] = []
    for ext, _ in land_polygons:
        points.extend((float(la), float(lo)) for la, lo in ext.vertices)
    return buffer_polygon(convex_hull(points), buffer_nm)
