import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airtracks.errors import DegenerateGeometryError, UnsupportedGeometryError
from airtracks.geometry import (
    GeoPolygon,
    LandMask,
    buffer_polygon,
    build_filter_polygon,
    convex_hull,
    destination,
    great_circle_nm,
    is_over_ocean,
    load_filter_polygon,
    point_in_polygon,
    read_geojson_polygons,
    write_geojson_polygon,
)
from oracles import min_edge_distance_deg, ray_cast_contains

UNIT_SQUARE = GeoPolygon([(0, 0), (0, 1), (1, 1), (1, 0)])


def random_convex_polygon(rng, n_points=12, clat=35.0, clon=-100.0, extent=2.0):
    pts = [
        (clat + rng.uniform(-extent, extent), clon + rng.uniform(-extent, extent))
        for _ in range(n_points)
    ]
    return convex_hull(pts)


class TestConvexHull:
    def test_triangle_unchanged(self):
        h = convex_hull([(0, 0), (0, 1), (1, 0)])
        assert len(h) == 3

    def test_square_plus_center(self):
        h = convex_hull([(0, 0), (0, 1), (1, 1), (1, 0), (0.5, 0.5)])
        assert len(h) == 4
        assert [0.5, 0.5] not in h.vertices.tolist()

    def test_collinear_raises(self):
        with pytest.raises(DegenerateGeometryError):
            convex_hull([(0, 0), (1, 1), (2, 2), (3, 3)])

    def test_too_few_raises(self):
        with pytest.raises(DegenerateGeometryError):
            convex_hull([(0, 0), (1, 1)])

    def test_random_points_contained(self):
        rng = random.Random(11)
        pts = [(rng.uniform(0, 10), rng.uniform(0, 10)) for _ in range(1000)]
        hull = convex_hull(pts)
        ring = [tuple(v) for v in hull.vertices]
        for lat, lon in pts:
            near_edge = min_edge_distance_deg(lat, lon, ring) < 1e-9
            assert near_edge or ray_cast_contains(lat, lon, ring)

    def test_idempotent(self):
        rng = random.Random(3)
        for _ in range(25):
            hull = random_convex_polygon(rng, rng.randint(4, 30))
            again = convex_hull([tuple(v) for v in hull.vertices])
            assert again == hull


class TestPointInPolygon:
    def test_center_inside(self):
        assert point_in_polygon((0.5, 0.5), UNIT_SQUARE)

    def test_outside(self):
        assert not point_in_polygon((2.0, 2.0), UNIT_SQUARE)

    def test_boundary_counts_as_inside(self):
        assert point_in_polygon((0.0, 0.5), UNIT_SQUARE)
        assert point_in_polygon((1.0, 1.0), UNIT_SQUARE)

    def test_matches_ray_casting_oracle(self):
        rng = random.Random(23)
        for _ in range(5):
            poly = random_convex_polygon(rng)
            ring = [tuple(v) for v in poly.vertices]
            lats = np.array([rng.uniform(32, 38) for _ in range(1000)])
            lons = np.array([rng.uniform(-103, -97) for _ in range(1000)])
            got = poly.contains_many(lats, lons)
            for i in range(lats.size):
                if min_edge_distance_deg(lats[i], lons[i], ring) < 1e-9:
                    continue
                assert got[i] == ray_cast_contains(lats[i], lons[i], ring)

    def test_nonconvex_ring(self):
        # L-shaped polygon; the notch must be outside.
        poly = GeoPolygon([(0, 0), (0, 2), (2, 2), (2, 1), (1, 1), (1, 0)])
        assert poly.contains(0.5, 1.5)
        assert not poly.contains(1.5, 0.5)

    def test_antimeridian_unwrap(self):
        poly = GeoPolygon([(10, 170), (10, -170), (20, -170), (20, 170)])
        assert poly.contains(15, 179.5)
        assert poly.contains(15, -179.5)
        assert poly.contains(15, 180.0)
        assert not poly.contains(15, 150.0)


class TestBuffer:
    def test_zero_distance_identity(self):
        assert buffer_polygon(UNIT_SQUARE, 0.0) == UNIT_SQUARE

    def test_contains_original_vertices(self):
        poly = GeoPolygon([(34, -119), (34, -118), (35, -118), (35, -119)])
        buffered = buffer_polygon(poly, 60.0)
        for lat, lon in poly.vertices:
            assert buffered.contains(lat, lon)

    def test_contains_point_30nm_outside_east_edge(self):
        poly = GeoPolygon([(34, -119), (34, -118), (35, -118), (35, -119)])
        buffered = buffer_polygon(poly, 60.0)
        p = destination(34.5, -118.0, 90.0, 30.0)
        assert great_circle_nm(34.5, -118.0, p.lat, p.lon) == pytest.approx(30.0, abs=1e-6)
        assert buffered.contains(p.lat, p.lon)

    def test_nonconvex_rejected(self):
        poly = GeoPolygon([(0, 0), (0, 2), (2, 2), (2, 1), (1, 1), (1, 0)])
        with pytest.raises(UnsupportedGeometryError):
            buffer_polygon(poly, 10.0)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            buffer_polygon(UNIT_SQUARE, -1.0)

    @given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.0, max_value=120.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_containment(self, seed, dist_nm):
        rng = random.Random(seed)
        poly = random_convex_polygon(rng, rng.randint(4, 10))
        # A point inside as a convex combination of the vertices.
        weights = [rng.random() + 0.01 for _ in range(len(poly))]
        total = sum(weights)
        lat = sum(w * v[0] for w, v in zip(weights, poly.vertices)) / total
        lon = sum(w * v[1] for w, v in zip(weights, poly.vertices)) / total
        assert poly.contains(lat, lon)
        assert buffer_polygon(poly, dist_nm).contains(lat, lon)


class TestOcean:
    def make_mask(self):
        land = GeoPolygon([(0, 0), (0, 10), (10, 10), (10, 0)])
        lake = GeoPolygon([(4, 4), (4, 6), (6, 6), (6, 4)])
        return LandMask([(land, [lake])])

    def test_on_land(self):
        assert not is_over_ocean((2, 2), self.make_mask())

    def test_mid_ocean(self):
        assert is_over_ocean((-40, -40), self.make_mask())

    def test_hole_is_water(self):
        assert is_over_ocean((5, 5), self.make_mask())

    def test_coastline_against_oracle(self):
        mask = self.make_mask()
        land_ring = [(0, 0), (0, 10), (10, 10), (10, 0)]
        lake_ring = [(4, 4), (4, 6), (6, 6), (6, 4)]
        rng = random.Random(5)
        pts = [(rng.uniform(-2, 12), rng.uniform(-2, 12)) for _ in range(100)]
        for lat, lon in pts:
            if (
                min_edge_distance_deg(lat, lon, land_ring) < 1e-9
                or min_edge_distance_deg(lat, lon, lake_ring) < 1e-9
            ):
                continue
            expect_land = ray_cast_contains(lat, lon, land_ring) and not ray_cast_contains(
                lat, lon, lake_ring
            )
            assert mask.over_ocean(lat, lon) == (not expect_land)


class TestGeoJson:
    def test_polygon_round_trip(self, tmp_path):
        path = tmp_path / "poly.geojson"
        write_geojson_polygon(path, UNIT_SQUARE)
        loaded = load_filter_polygon(path)
        assert loaded == UNIT_SQUARE

    def test_multipolygon_with_hole(self, tmp_path):
        doc = {
            "type": "MultiPolygon",
            "coordinates": [
                [
                    [[0, 0], [10, 0], [10, 10], [0, 10], [0, 0]],
                    [[4, 4], [6, 4], [6, 6], [4, 6], [4, 4]],
                ],
                [[[20, 20], [22, 20], [22, 22], [20, 22], [20, 20]]],
            ],
        }
        import json

        path = tmp_path / "multi.geojson"
        path.write_text(json.dumps(doc))
        polys = read_geojson_polygons(path)
        assert len(polys) == 2
        assert len(polys[0][1]) == 1  # one hole

    def test_build_filter_polygon(self):
        land = GeoPolygon([(34, -119), (34, -118), (35, -118), (35, -119)])
        filt = build_filter_polygon([(land, [])], buffer_nm=60.0)
        for lat, lon in land.vertices:
            assert filt.contains(lat, lon)


class TestGreatCircle:
    def test_destination_round_trip(self):
        p = destination(34.0, -118.0, 37.0, 123.0)
        assert great_circle_nm(34.0, -118.0, p.lat, p.lon) == pytest.approx(123.0, abs=1e-6)

    def test_one_degree_latitude_is_sixty_nm(self):
        assert great_circle_nm(34.0, -118.0, 35.0, -118.0) == pytest.approx(60.04, abs=0.1)
