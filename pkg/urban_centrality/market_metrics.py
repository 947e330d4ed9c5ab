"""
Market-boundary statistics per product.

A product has a market in every cluster where it shows a comparative
advantage. The distance from one market to the nearest other market of the
same product proxies the product's threshold; the distance consumers travel
to buy it proxies its range.
"""

from collections.abc import Sequence

import numpy as np
import structlog

from urban_centrality.amenity_cluster import EQUIDISTANT_KM
from urban_centrality.errors import InputError
from urban_centrality.geo import cell_centroids, haversine_km
from urban_centrality.schemas.complexity import IncidenceMatrix
from urban_centrality.schemas.market import ConsumerGroup, MarketDistanceRecord, MarketSet
from urban_centrality.schemas.shops import AmenityCluster

log = structlog.get_logger(__name__)


def market_sets(incidence: IncidenceMatrix) -> list[MarketSet]:
    """One market set per product that has at least one market, in product order."""
    sets = []
    for j, product in enumerate(incidence.products):
        markets = frozenset(int(incidence.clusters[i]) for i in np.flatnonzero(incidence.m[:, j]))
        if markets:
            sets.append(MarketSet(product_code=product, market_cluster_ids=markets))
    return sets


def single_market_products(sets: Sequence[MarketSet]) -> list[str]:
    """Products with only one market; they have no inter-market distance."""
    return [s.product_code for s in sets if len(s.market_cluster_ids) < 2]


def _centers(clusters: Sequence[AmenityCluster]) -> dict[int, tuple[float, float]]:
    return {c.cluster_id: (c.center.lat, c.center.lon) for c in clusters}


def _pairwise(ids: list[int], centers: dict[int, tuple[float, float]]) -> np.ndarray:
    missing = [cid for cid in ids if cid not in centers]
    if missing:
        raise InputError(f"market clusters without a known center: {missing}")
    lats = np.array([centers[cid][0] for cid in ids])
    lons = np.array([centers[cid][1] for cid in ids])
    d = haversine_km(lats[:, None], lons[:, None], lats[None, :], lons[None, :])
    np.fill_diagonal(d, np.inf)
    return d


def min_market_distances(
    sets: Sequence[MarketSet],
    clusters: Sequence[AmenityCluster],
    per_product: bool = False,
) -> list[MarketDistanceRecord]:
    """
    For every product with two or more markets, one record per market
    cluster holding its nearest other market of the same product.
    Equidistant neighbours resolve to the smaller cluster id.

    With `per_product=True` each product collapses to its single closest
    pair of markets.
    """
    centers = _centers(clusters)
    records = []
    for market in sets:
        ids = sorted(market.market_cluster_ids)
        if len(ids) < 2:
            continue
        d = _pairwise(ids, centers)
        # first (smallest id) neighbour within rounding of the minimum
        nearest = np.argmax(d <= d.min(axis=1)[:, None] + EQUIDISTANT_KM, axis=1)
        product_records = [
            MarketDistanceRecord(
                product_code=market.product_code,
                cluster_a=ids[i],
                cluster_b=ids[nearest[i]],
                distance_km=float(d[i, nearest[i]]),
            )
            for i in range(len(ids))
        ]
        if per_product:
            product_records = [min(product_records, key=lambda r: (r.distance_km, r.cluster_a, r.cluster_b))]
        records.extend(product_records)

    skipped = single_market_products(sets)
    if skipped:
        log.info("skipped single-market products", n_skipped=len(skipped), products=skipped)
    return records


def mean_market_spacing(sets: Sequence[MarketSet], clusters: Sequence[AmenityCluster]) -> dict[str, float]:
    """Mean nearest-market distance (km) of every product with two or more markets."""
    spacing: dict[str, list[float]] = {}
    for record in min_market_distances(sets, clusters):
        spacing.setdefault(record.product_code, []).append(record.distance_km)
    return {product: float(np.mean(values)) for product, values in spacing.items()}


def travel_distances(groups: Sequence[ConsumerGroup]) -> np.ndarray:
    """Distance (km) between the home and purchase cell centroids of every group."""
    if not groups:
        return np.empty(0, dtype=np.float64)
    home_lat, home_lon = cell_centroids(g.home_cell for g in groups)
    shop_lat, shop_lon = cell_centroids(g.purchase_cell for g in groups)
    return haversine_km(home_lat, home_lon, shop_lat, shop_lon)
