import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from urban_centrality.geo import (
    cell_centroid,
    cell_centroids,
    cell_containing,
    chord_for_km,
    geodesic_distance,
    haversine_km,
    local_offsets_m,
    offset_point,
    unit_vectors,
)
from urban_centrality.schemas.geo import GeoPoint, GridCell

latitudes = st.floats(min_value=-80.0, max_value=80.0, allow_nan=False)
longitudes = st.floats(min_value=-179.0, max_value=179.0, allow_nan=False)
points = st.builds(GeoPoint, lat=latitudes, lon=longitudes)


def test_distance_to_itself_is_zero():
    p = GeoPoint(lat=37.0, lon=127.0)
    assert geodesic_distance(p, p) == 0.0


def test_one_hundredth_degree_of_latitude():
    d = geodesic_distance(GeoPoint(lat=37.0, lon=127.0), GeoPoint(lat=37.01, lon=127.0))
    assert d == pytest.approx(1.11195, abs=1e-4)


def test_one_hundredth_degree_of_longitude():
    d = geodesic_distance(GeoPoint(lat=37.0, lon=127.0), GeoPoint(lat=37.0, lon=127.01))
    assert d == pytest.approx(0.88812, abs=1e-4)


@given(points, points)
def test_distance_is_symmetric(a, b):
    assert geodesic_distance(a, b) == geodesic_distance(b, a)


@given(points, points, points)
def test_triangle_inequality(a, b, c):
    assert geodesic_distance(a, c) <= geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-6


def test_haversine_broadcasts():
    lats = np.array([37.0, 37.01, 37.02])
    d = haversine_km(lats[:, None], 127.0, lats[None, :], 127.0)
    assert d.shape == (3, 3)
    assert np.allclose(np.diag(d), 0.0)
    assert d[0, 2] == pytest.approx(2 * d[0, 1], rel=1e-9)


@given(points, st.floats(min_value=0.001, max_value=50.0))
def test_chord_matches_unit_vector_distance(p, km):
    q = offset_point(p, km * 1000.0, 0.0) if abs(p.lat) < 79 else offset_point(p, -km * 1000.0, 0.0)
    xyz = unit_vectors(np.array([p.lat, q.lat]), np.array([p.lon, q.lon]))
    chord = float(np.linalg.norm(xyz[0] - xyz[1]))
    assert chord == pytest.approx(chord_for_km(geodesic_distance(p, q)), rel=1e-6)


def test_cell_centroid_of_100m_cell_is_50m_north_east():
    origin = GeoPoint(lat=0.0, lon=0.0)
    centroid = cell_centroid(GridCell(origin=origin, size_m=100))
    north, east = local_offsets_m(origin, np.array([centroid.lat]), np.array([centroid.lon]))
    assert north[0] == pytest.approx(50.0, abs=1e-6)
    assert east[0] == pytest.approx(50.0, abs=1e-6)


def test_cell_centroid_of_50m_cell_at_equator():
    origin = GeoPoint(lat=0.0, lon=0.0)
    centroid = cell_centroid(GridCell(origin=origin, size_m=50))
    north, east = local_offsets_m(origin, np.array([centroid.lat]), np.array([centroid.lon]))
    assert north[0] == pytest.approx(25.0, abs=1e-6)
    assert east[0] == pytest.approx(25.0, abs=1e-6)


def test_cell_centroid_is_half_diagonal_from_origin():
    origin = GeoPoint(lat=37.5, lon=127.0)
    centroid = cell_centroid(GridCell(origin=origin, size_m=50))
    assert geodesic_distance(origin, centroid) == pytest.approx(0.0354, abs=1e-3)


def test_vectorized_centroids_match_scalar():
    cells = [
        GridCell(origin=GeoPoint(lat=37.5 + 0.001 * i, lon=127.0 - 0.002 * i), size_m=size)
        for i, size in enumerate([50, 100, 50, 100])
    ]
    lats, lons = cell_centroids(cells)
    for cell, lat, lon in zip(cells, lats, lons):
        expected = cell_centroid(cell)
        assert lat == pytest.approx(expected.lat, abs=1e-12)
        assert lon == pytest.approx(expected.lon, abs=1e-12)


@given(
    st.floats(min_value=0.0, max_value=5000.0),
    st.floats(min_value=0.0, max_value=5000.0),
    st.sampled_from([50, 100]),
)
def test_cell_containing_holds_the_point(north_m, east_m, size_m):
    anchor = GeoPoint(lat=37.4, lon=126.9)
    p = offset_point(anchor, north_m, east_m)
    cell = cell_containing(p, size_m, anchor)
    cell_north, cell_east = local_offsets_m(anchor, np.array([cell.origin.lat]), np.array([cell.origin.lon]))
    p_north, p_east = local_offsets_m(anchor, np.array([p.lat]), np.array([p.lon]))
    assert cell.size_m == size_m
    assert cell_north[0] - 1e-6 <= p_north[0] < cell_north[0] + size_m + 1e-6
    assert cell_east[0] - 1e-6 <= p_east[0] < cell_east[0] + size_m + 1e-6


def test_offsets_invert_offset_point():
    anchor = GeoPoint(lat=37.5, lon=127.0)
    p = offset_point(anchor, 1234.0, -567.0)
    north, east = local_offsets_m(anchor, np.array([p.lat]), np.array([p.lon]))
    assert north[0] == pytest.approx(1234.0, abs=1e-6)
    assert east[0] == pytest.approx(-567.0, abs=1e-6)
    assert math.isclose(geodesic_distance(anchor, p), math.hypot(1.234, 0.567), rel_tol=1e-4)
