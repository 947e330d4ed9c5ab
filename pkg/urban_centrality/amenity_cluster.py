"""
Amenity cluster detection.

Every shop gets an effective shop count A_i = sum_j exp(-gamma * d_ij), the
sum running over all shops including i itself. Local maxima of A within
`peak_radius_m` become cluster centers, and each shop joins its nearest
center if that center lies within `cutoff_m`.

Bulk distance work is done in fixed-size row chunks. Chunk boundaries do
not depend on the number of worker threads, so results are bitwise
identical for any `threads` value.
"""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import structlog
from scipy.spatial import KDTree

from urban_centrality.errors import ComputationError, InputError
from urban_centrality.geo import chord_for_km, coordinates, haversine_km, unit_vectors
from urban_centrality.schemas.geo import GeoPoint
from urban_centrality.schemas.shops import (
    AmenityCluster,
    ClusterAssignment,
    ClusterParams,
    DecayParams,
    Shop,
)

log = structlog.get_logger(__name__)

CHUNK_SIZE = 512

# Neighbours beyond this many e-folding lengths are dropped in approximate
# mode; each dropped term is below exp(-10).
TRUNCATION_EFOLDS = 10.0

# Relative tolerance under which two densities count as tied.
DENSITY_RTOL = 1e-12

# Distance tolerance (km) under which two peaks are equidistant from a shop.
EQUIDISTANT_KM = 1e-9

# Nearest peak candidates examined per shop when resolving ties.
PEAK_CANDIDATES = 4


class _ShopIndex:
    """Coordinates, unit vectors and a KD-tree over a fixed list of shops."""

    def __init__(self, shops: Sequence[Shop]):
        self.ids = [shop.id for shop in shops]
        self.lats, self.lons = coordinates(shop.location for shop in shops)
        self.xyz = unit_vectors(self.lats, self.lons)
        self.tree = KDTree(self.xyz)

    def __len__(self) -> int:
        return len(self.ids)

    def chunks(self) -> list[tuple[int, int]]:
        n = len(self)
        return [(start, min(start + CHUNK_SIZE, n)) for start in range(0, n, CHUNK_SIZE)]

    def pairs_within(self, start: int, stop: int, radius_km: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        All (i, j) pairs with i in [start, stop) and d_ij <= radius_km.

        Returns row indices, column indices and haversine distances (km),
        rows ascending and columns ascending within a row.
        """
        # a tiny pad so float rounding in the chord never loses a boundary pair
        chord = chord_for_km(radius_km) + 1e-12
        neighbours = self.tree.query_ball_point(self.xyz[start:stop], r=chord, return_sorted=True)
        lengths = np.fromiter((len(js) for js in neighbours), dtype=np.int64, count=stop - start)
        rows = np.repeat(np.arange(start, stop, dtype=np.int64), lengths)
        cols = (
            np.concatenate([np.asarray(js, dtype=np.int64) for js in neighbours])
            if lengths.sum()
            else np.empty(0, dtype=np.int64)
        )
        d = haversine_km(self.lats[rows], self.lons[rows], self.lats[cols], self.lons[cols])
        keep = d <= radius_km
        return rows[keep], cols[keep], d[keep]


def _map_chunks(index: _ShopIndex, fn, threads: int) -> list:
    chunks = index.chunks()
    if threads <= 1 or len(chunks) <= 1:
        return [fn(start, stop) for start, stop in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda bounds: fn(*bounds), chunks))


def _check_shops(shops: Sequence[Shop]) -> None:
    if not shops:
        raise InputError("no shops")
    ids = [shop.id for shop in shops]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate shop ids")


def _effective_counts(index: _ShopIndex, params: DecayParams, exact: bool, threads: int) -> np.ndarray:
    gamma = params.gamma

    def exact_chunk(start: int, stop: int) -> np.ndarray:
        d = haversine_km(
            index.lats[start:stop, None], index.lons[start:stop, None], index.lats[None, :], index.lons[None, :]
        )
        return np.exp(-gamma * d).sum(axis=1)

    cutoff_km = TRUNCATION_EFOLDS / gamma

    def truncated_chunk(start: int, stop: int) -> np.ndarray:
        rows, _, d = index.pairs_within(start, stop, cutoff_km)
        return np.bincount(rows - start, weights=np.exp(-gamma * d), minlength=stop - start)

    parts = _map_chunks(index, exact_chunk if exact else truncated_chunk, threads)
    return np.concatenate(parts)


def effective_counts(
    shops: Sequence[Shop],
    params: DecayParams,
    exact: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """
    Effective shop count A_i of every shop, aligned with `shops`.

    With `exact=False` pairs farther apart than 10/gamma km are skipped,
    so each A_i is underestimated by less than N * exp(-10).
    """
    _check_shops(shops)
    return _effective_counts(_ShopIndex(shops), params, exact, threads)


def _id_ranks(ids: Sequence[str]) -> np.ndarray:
    order = sorted(range(len(ids)), key=ids.__getitem__)
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[order] = np.arange(len(ids))
    return ranks


def _peaks(index: _ShopIndex, a: np.ndarray, params: DecayParams, threads: int) -> list[int]:
    id_rank = _id_ranks(index.ids)
    radius_km = params.peak_radius_m / 1000.0

    def dominated_chunk(start: int, stop: int) -> np.ndarray:
        rows, cols, _ = index.pairs_within(start, stop, radius_km)
        a_i, a_j = a[rows], a[cols]
        tied = np.abs(a_j - a_i) <= DENSITY_RTOL * np.maximum(np.abs(a_i), np.abs(a_j))
        beats = np.where(tied, id_rank[cols] < id_rank[rows], a_j > a_i)
        return np.bincount(rows - start, weights=beats.astype(np.float64), minlength=stop - start) > 0

    dominated = np.concatenate(_map_chunks(index, dominated_chunk, threads))
    candidates = np.flatnonzero(~dominated & (a >= params.min_peak_density))
    return sorted(candidates.tolist(), key=lambda i: (-a[i], index.ids[i]))


def detect_peaks(
    shops: Sequence[Shop],
    a: np.ndarray,
    params: DecayParams,
    threads: int = 1,
) -> list[int]:
    """
    Indices of the shops whose effective count is a local maximum.

    Shop i is a peak when no shop within `peak_radius_m` has a larger A, or
    an equal A and a lexicographically smaller id. Peaks are returned in
    descending A, ties by id.
    """
    _check_shops(shops)
    if len(a) != len(shops):
        raise ValueError(f"density vector has {len(a)} entries for {len(shops)} shops")
    peaks = _peaks(_ShopIndex(shops), np.asarray(a, dtype=np.float64), params, threads)
    log.debug("peaks detected", n_shops=len(shops), n_peaks=len(peaks))
    return peaks


def _nearest_peak(index: _ShopIndex, peaks: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """
    For every shop, the position in `peaks` of its nearest peak and the
    distance to it in km. Equidistant peaks resolve to the earlier position.
    """
    peak_idx = np.asarray(peaks, dtype=np.int64)
    k = min(PEAK_CANDIDATES, len(peaks))
    _, cand = KDTree(index.xyz[peak_idx]).query(index.xyz, k=k)
    cand = np.asarray(cand, dtype=np.int64).reshape(len(index), k)
    d = haversine_km(
        index.lats[:, None], index.lons[:, None], index.lats[peak_idx[cand]], index.lons[peak_idx[cand]]
    )
    d_min = d.min(axis=1)
    tied = d <= d_min[:, None] + EQUIDISTANT_KM
    best = np.where(tied, cand, len(peaks)).min(axis=1)
    return best, d_min


def _grow(
    index: _ShopIndex, a: np.ndarray, peaks: list[int], params: ClusterParams
) -> ClusterAssignment:
    if not peaks:
        raise ComputationError("no density peaks to grow clusters from")
    # peak order decides both tie-breaking and cluster numbering
    peaks = sorted(peaks, key=lambda i: (-a[i], index.ids[i]))
    owner, distance_km = _nearest_peak(index, peaks)
    owner = np.where(distance_km <= params.cutoff_m / 1000.0, owner, -1)

    min_size = min(params.min_cluster_size, len(index))
    sizes = np.bincount(owner[owner >= 0], minlength=len(peaks))
    clusters = []
    for position, peak in enumerate(peaks):
        if sizes[position] < min_size:
            continue
        members = np.flatnonzero(owner == position)
        radius_km = float(distance_km[members].max())
        clusters.append(
            AmenityCluster(
                cluster_id=len(clusters),
                center=GeoPoint(lat=float(index.lats[peak]), lon=float(index.lons[peak])),
                center_shop_id=index.ids[peak],
                member_ids=frozenset(index.ids[m] for m in members),
                radius_m=radius_km * 1000.0,
                effective_density=float(a[peak]),
            )
        )

    assigned = {shop_id for cluster in clusters for shop_id in cluster.member_ids}
    unassigned = sorted(shop_id for shop_id in index.ids if shop_id not in assigned)
    dissolved = int(((sizes > 0) & (sizes < min_size)).sum())
    log.info(
        "clusters grown",
        n_peaks=len(peaks),
        n_clusters=len(clusters),
        n_dissolved=dissolved,
        n_unassigned=len(unassigned),
    )
    return ClusterAssignment(clusters=clusters, unassigned_ids=unassigned)


def grow_clusters(
    shops: Sequence[Shop],
    a: np.ndarray,
    peaks: list[int],
    params: ClusterParams,
) -> ClusterAssignment:
    """
    Allocate every shop to its nearest peak within `cutoff_m`.

    A shop equidistant from several peaks goes to the peak with the higher
    A, then the smaller id. Clusters with fewer than `min_cluster_size`
    members (capped at the number of shops) are dissolved and their shops
    reported as unassigned. Surviving clusters are numbered from 0 in
    descending peak density.
    """
    _check_shops(shops)
    return _grow(_ShopIndex(shops), np.asarray(a, dtype=np.float64), peaks, params)


def detect_clusters(
    shops: Sequence[Shop],
    decay: DecayParams,
    params: ClusterParams,
    exact: bool = False,
    threads: int = 1,
) -> ClusterAssignment:
    """Run effective counts, peak detection and cluster growth on one index."""
    _check_shops(shops)
    index = _ShopIndex(shops)
    a = _effective_counts(index, decay, exact, threads)
    peaks = _peaks(index, a, decay, threads)
    return _grow(index, a, peaks, params)


class ClusterLocator:
    """Nearest-center lookup over a fixed set of clusters."""

    def __init__(self, clusters: Sequence[AmenityCluster], slack_m: float = 100.0):
        if not clusters:
            raise ValueError("no clusters to locate against")
        ordered = sorted(clusters, key=lambda c: c.cluster_id)
        self.cluster_ids = np.array([c.cluster_id for c in ordered], dtype=np.int64)
        self.lats, self.lons = coordinates(c.center for c in ordered)
        self.reach_km = np.array([(c.radius_m + slack_m) / 1000.0 for c in ordered])
        self.tree = KDTree(unit_vectors(self.lats, self.lons))

    def locate(self, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
        """Cluster id per point, -1 where the nearest center is out of reach."""
        lats = np.asarray(lats, dtype=np.float64)
        lons = np.asarray(lons, dtype=np.float64)
        if lats.size == 0:
            return np.empty(0, dtype=np.int64)
        _, nearest = self.tree.query(unit_vectors(lats, lons), k=1)
        d = haversine_km(lats, lons, self.lats[nearest], self.lons[nearest])
        return np.where(d <= self.reach_km[nearest], self.cluster_ids[nearest], -1)


def cluster_of_point(
    clusters: Sequence[AmenityCluster], p: GeoPoint, slack_m: float = 100.0
) -> int | None:
    """Id of the nearest cluster if `p` lies within its radius plus `slack_m`."""
    found = int(ClusterLocator(clusters, slack_m).locate(np.array([p.lat]), np.array([p.lon]))[0])
    return None if found < 0 else found
