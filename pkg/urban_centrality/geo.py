"""
Geodesic primitives shared by every spatial computation.

Distances use the haversine formula on a sphere of mean Earth radius
6371.0088 km. Bulk neighbour searches work on unit vectors: the chord
between two unit vectors is monotone in their arc distance, so a KD-tree
radius query with `chord_for_km(r)` returns exactly the points within
`r` km.
"""

import math
from collections.abc import Iterable

import numpy as np

from urban_centrality.schemas.geo import GeoPoint, GridCell

EARTH_RADIUS_KM = 6371.0088
EARTH_RADIUS_M = EARTH_RADIUS_KM * 1000.0


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """
    Vectorized haversine distance in kilometres between coordinate arrays
    (degrees). Inputs broadcast against each other.
    """
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    # abs() keeps the result bitwise symmetric in its arguments
    half_dphi = np.abs(np.radians(np.subtract(lat2, lat1))) / 2.0
    half_dlambda = np.abs(np.radians(np.subtract(lon2, lon1))) / 2.0
    a = np.sin(half_dphi) ** 2 + (np.cos(phi1) * np.cos(phi2)) * np.sin(half_dlambda) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def geodesic_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in kilometres."""
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon))


def coordinates(points: Iterable[GeoPoint]) -> tuple[np.ndarray, np.ndarray]:
    """Split points into latitude and longitude arrays."""
    pairs = np.array([(p.lat, p.lon) for p in points], dtype=np.float64).reshape(-1, 2)
    return pairs[:, 0].copy(), pairs[:, 1].copy()


def unit_vectors(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Cartesian unit vectors, shape (N, 3), for KD-tree queries."""
    phi = np.radians(lats)
    lam = np.radians(lons)
    cos_phi = np.cos(phi)
    return np.column_stack([cos_phi * np.cos(lam), cos_phi * np.sin(lam), np.sin(phi)])


def chord_for_km(km: float) -> float:
    """Unit-sphere chord length subtending an arc of `km` kilometres."""
    return 2.0 * math.sin(min(km / (2.0 * EARTH_RADIUS_KM), math.pi / 2))


def offset_point(p: GeoPoint, north_m: float, east_m: float) -> GeoPoint:
    """
    Shift a point on the local tangent plane. The east scale uses the
    latitude of `p`.
    """
    lat = p.lat + math.degrees(north_m / EARTH_RADIUS_M)
    lon = p.lon + math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(p.lat))))
    return GeoPoint(lat=lat, lon=lon)


def local_offsets_m(anchor: GeoPoint, lats: np.ndarray, lons: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of `offset_point`: (north, east) metres of each point from `anchor`."""
    north = np.radians(np.asarray(lats) - anchor.lat) * EARTH_RADIUS_M
    east = np.radians(np.asarray(lons) - anchor.lon) * EARTH_RADIUS_M * math.cos(math.radians(anchor.lat))
    return north, east


def cell_centroid(cell: GridCell) -> GeoPoint:
    """Geometric centre of a grid cell."""
    half = cell.size_m / 2.0
    return offset_point(cell.origin, half, half)


def cell_centroids(cells: Iterable[GridCell]) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized `cell_centroid`: latitude and longitude arrays of cell centres."""
    table = np.array([(c.origin.lat, c.origin.lon, c.size_m) for c in cells], dtype=np.float64).reshape(-1, 3)
    half = table[:, 2] / 2.0
    lats = table[:, 0] + np.degrees(half / EARTH_RADIUS_M)
    lons = table[:, 1] + np.degrees(half / (EARTH_RADIUS_M * np.cos(np.radians(table[:, 0]))))
    return lats, lons


def grid_cell(anchor: GeoPoint, row: int, col: int, size_m: int) -> GridCell:
    """Cell `row` steps north and `col` steps east of the grid anchored at `anchor`."""
    return GridCell(origin=offset_point(anchor, row * size_m, col * size_m), size_m=size_m)


def cell_containing(p: GeoPoint, size_m: int, anchor: GeoPoint) -> GridCell:
    """Cell of the grid anchored at `anchor` that contains `p`."""
    north, east = local_offsets_m(anchor, np.array([p.lat]), np.array([p.lon]))
    row = int(math.floor(north[0] / size_m))
    col = int(math.floor(east[0] / size_m))
    return grid_cell(anchor, row, col, size_m)
