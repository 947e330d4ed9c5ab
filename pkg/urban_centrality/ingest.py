"""
CSV readers and writers for every external dataset, and the joins that put
those datasets onto amenity clusters.

Readers validate each row through its pydantic schema. Rows that fail are
collected with their line numbers (the header is line 1) and written to a
rejects file; the read aborts when 1% or more of the rows fail.
"""

from collections import Counter
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path
from typing import TypeVar

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ValidationError
from scipy.spatial import KDTree

from urban_centrality import econometrics as ec
from urban_centrality.amenity_cluster import ClusterLocator
from urban_centrality.errors import InputError
from urban_centrality.geo import cell_centroids, coordinates, unit_vectors
from urban_centrality.market_metrics import travel_distances
from urban_centrality.schemas.complexity import ComplexityScores
from urban_centrality.schemas.geo import GeoPoint, GridCell
from urban_centrality.schemas.ingest import (
    CardRecord,
    ClusterTotals,
    LaborSectorCell,
    LandPriceRecord,
    PopulationCell,
    PopulationKind,
    RegressionTables,
)
from urban_centrality.schemas.market import Gender, MarketDistanceRecord
from urban_centrality.schemas.shops import AmenityCluster, Shop

log = structlog.get_logger(__name__)

MAX_REJECT_FRACTION = 0.01
MAX_JOIN_MISMATCH = 0.05
WARD_GRID = 5
CARD_CELL_M = 50

SHOP_COLUMNS = ["id", "lat", "lon", "product_code", "industry_code"]
POPULATION_COLUMNS = ["kind", "cell_lat", "cell_lon", "size_m", "count"]
CARD_COLUMNS = [
    "age_decade",
    "gender",
    "home_cell_lat",
    "home_cell_lon",
    "purchase_cell_lat",
    "purchase_cell_lon",
    "product_code",
    "purchase_count",
    "amount_krw",
    "n_stores",
]
LAND_PRICE_CLUSTER_COLUMNS = ["cluster_id", "price_krw_m2"]
LAND_PRICE_CELL_COLUMNS = ["cell_lat", "cell_lon", "size_m", "price_krw_m2"]
LABOR_COLUMNS = ["sector", "cell_lat", "cell_lon", "size_m", "count"]

T = TypeVar("T", bound=BaseModel)


def _load(path: Path | str) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise InputError(f"{path} has no header") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputError(f"cannot parse {path}: {e}") from e


def _require(frame: pd.DataFrame, columns: Sequence[str], path: Path | str) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(f"{path} lacks columns: {', '.join(missing)}")


def _parse_rows(
    frame: pd.DataFrame,
    parse: Callable[[dict[str, str]], T],
    path: Path | str,
    rejects_path: Path | str | None,
) -> list[T]:
    records, rejects = [], []
    for offset, row in enumerate(frame.to_dict(orient="records")):
        try:
            records.append(parse(row))
        except (ValidationError, ValueError) as e:
            reason = "; ".join(err["msg"] for err in e.errors()) if isinstance(e, ValidationError) else str(e)
            rejects.append({"line": offset + 2, "reason": reason})

    if rejects:
        if rejects_path is not None:
            pd.DataFrame(rejects, columns=["line", "reason"]).to_csv(rejects_path, index=False)
        fraction = len(rejects) / len(frame)
        log.warning(
            "rejected malformed rows",
            path=str(path),
            n_rejected=len(rejects),
            n_rows=len(frame),
            first_lines=[r["line"] for r in rejects[:10]],
        )
        if fraction >= MAX_REJECT_FRACTION:
            raise InputError(
                f"{path}: {len(rejects)} of {len(frame)} rows are malformed "
                f"(first at line {rejects[0]['line']}: {rejects[0]['reason']})"
            )
    return records


def _cell(lat: str, lon: str, size_m: str | int) -> GridCell:
    return GridCell(origin=GeoPoint(lat=float(lat), lon=float(lon)), size_m=int(size_m))


def _write(path: Path | str, rows: Iterable[dict], columns: Sequence[str]) -> None:
    pd.DataFrame(list(rows), columns=list(columns)).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


# shops


def read_shops(path: Path | str, rejects_path: Path | str | None = None) -> list[Shop]:
    """Read `id,lat,lon,product_code,industry_code[,ward]`."""
    frame = _load(path)
    _require(frame, SHOP_COLUMNS, path)
    has_ward = "ward" in frame.columns

    def parse(row: dict[str, str]) -> Shop:
        return Shop(
            id=row["id"],
            location=GeoPoint(lat=float(row["lat"]), lon=float(row["lon"])),
            product_code=row["product_code"],
            industry_code=row["industry_code"],
            ward=(row["ward"] or None) if has_ward else None,
        )

    shops = _parse_rows(frame, parse, path, rejects_path)
    duplicates = sorted(shop_id for shop_id, n in Counter(s.id for s in shops).items() if n > 1)
    if duplicates:
        raise InputError(f"{path}: duplicate shop ids {duplicates[:10]}")
    log.info("shops read", path=str(path), n_shops=len(shops))
    return shops


def write_shops(path: Path | str, shops: Sequence[Shop]) -> None:
    with_ward = any(s.ward is not None for s in shops)
    columns = SHOP_COLUMNS + (["ward"] if with_ward else [])
    rows = (
        {
            "id": s.id,
            "lat": s.location.lat,
            "lon": s.location.lon,
            "product_code": s.product_code,
            "industry_code": s.industry_code,
            "ward": s.ward or "",
        }
        for s in shops
    )
    _write(path, rows, columns)


# card transactions


def read_card(path: Path | str, rejects_path: Path | str | None = None) -> list[CardRecord]:
    """Read aggregated card transactions on 50 m cells."""
    frame = _load(path)
    _require(frame, CARD_COLUMNS, path)

    def parse(row: dict[str, str]) -> CardRecord:
        return CardRecord(
            age_decade=int(row["age_decade"]),
            gender=Gender(row["gender"]),
            home_cell=_cell(row["home_cell_lat"], row["home_cell_lon"], CARD_CELL_M),
            purchase_cell=_cell(row["purchase_cell_lat"], row["purchase_cell_lon"], CARD_CELL_M),
            product_code=row["product_code"],
            purchase_count=int(row["purchase_count"]),
            amount_krw=float(row["amount_krw"]),
            n_stores=int(row["n_stores"]),
        )

    return _parse_rows(frame, parse, path, rejects_path)


def write_card(path: Path | str, records: Sequence[CardRecord]) -> None:
    rows = (
        {
            "age_decade": r.age_decade,
            "gender": str(r.gender),
            "home_cell_lat": r.home_cell.origin.lat,
            "home_cell_lon": r.home_cell.origin.lon,
            "purchase_cell_lat": r.purchase_cell.origin.lat,
            "purchase_cell_lon": r.purchase_cell.origin.lon,
            "product_code": r.product_code,
            "purchase_count": r.purchase_count,
            "amount_krw": r.amount_krw,
            "n_stores": r.n_stores,
        }
        for r in records
    )
    _write(path, rows, CARD_COLUMNS)


# population


def read_population(path: Path | str, rejects_path: Path | str | None = None) -> list[PopulationCell]:
    frame = _load(path)
    _require(frame, POPULATION_COLUMNS, path)

    def parse(row: dict[str, str]) -> PopulationCell:
        return PopulationCell(
            cell=_cell(row["cell_lat"], row["cell_lon"], row["size_m"]),
            kind=PopulationKind(row["kind"]),
            count=float(row["count"]),
        )

    return _parse_rows(frame, parse, path, rejects_path)


def write_population(path: Path | str, cells: Sequence[PopulationCell]) -> None:
    rows = (
        {
            "kind": str(c.kind),
            "cell_lat": c.cell.origin.lat,
            "cell_lon": c.cell.origin.lon,
            "size_m": c.cell.size_m,
            "count": c.count,
        }
        for c in cells
    )
    _write(path, rows, POPULATION_COLUMNS)


# land prices


def read_land_prices(path: Path | str, rejects_path: Path | str | None = None) -> list[LandPriceRecord]:
    """Read land prices keyed by `cluster_id`, or by cell when that column is absent."""
    frame = _load(path)
    by_cluster = "cluster_id" in frame.columns
    _require(frame, LAND_PRICE_CLUSTER_COLUMNS if by_cluster else LAND_PRICE_CELL_COLUMNS, path)

    def parse(row: dict[str, str]) -> LandPriceRecord:
        if by_cluster:
            return LandPriceRecord(cluster_id=int(row["cluster_id"]), price=float(row["price_krw_m2"]))
        return LandPriceRecord(
            cell=_cell(row["cell_lat"], row["cell_lon"], row["size_m"]),
            price=float(row["price_krw_m2"]),
        )

    return _parse_rows(frame, parse, path, rejects_path)


def write_land_prices(path: Path | str, records: Sequence[LandPriceRecord]) -> None:
    if records and all(r.cluster_id is not None for r in records):
        _write(
            path,
            ({"cluster_id": r.cluster_id, "price_krw_m2": r.price} for r in records),
            LAND_PRICE_CLUSTER_COLUMNS,
        )
        return
    if any(r.cell is None for r in records):
        raise ValueError("land prices must be all cluster-keyed or all cell-keyed")
    rows = (
        {
            "cell_lat": r.cell.origin.lat,
            "cell_lon": r.cell.origin.lon,
            "size_m": r.cell.size_m,
            "price_krw_m2": r.price,
        }
        for r in records
    )
    _write(path, rows, LAND_PRICE_CELL_COLUMNS)


# labor sectors


def read_labor_sectors(path: Path | str, rejects_path: Path | str | None = None) -> list[LaborSectorCell]:
    frame = _load(path)
    _require(frame, LABOR_COLUMNS, path)

    def parse(row: dict[str, str]) -> LaborSectorCell:
        return LaborSectorCell(
            sector=row["sector"],
            cell=_cell(row["cell_lat"], row["cell_lon"], row["size_m"]),
            count=float(row["count"]),
        )

    return _parse_rows(frame, parse, path, rejects_path)


def write_labor_sectors(path: Path | str, cells: Sequence[LaborSectorCell]) -> None:
    rows = (
        {
            "sector": c.sector,
            "cell_lat": c.cell.origin.lat,
            "cell_lon": c.cell.origin.lon,
            "size_m": c.cell.size_m,
            "count": c.count,
        }
        for c in cells
    )
    _write(path, rows, LABOR_COLUMNS)


# joins onto clusters


def _locate_cells(cells: Sequence[GridCell], clusters: Sequence[AmenityCluster], slack_m: float) -> np.ndarray:
    lats, lons = cell_centroids(cells)
    return ClusterLocator(clusters, slack_m).locate(lats, lons)


def _sum_by_cluster(
    owner: np.ndarray, keys: Sequence[str], values: np.ndarray, clusters: Sequence[AmenityCluster]
) -> ClusterTotals:
    frame = pd.DataFrame({"cluster_id": owner, "key": list(keys), "value": values})
    inside = frame[frame["cluster_id"] >= 0]
    totals = inside.pivot_table(index="cluster_id", columns="key", values="value", aggfunc="sum", fill_value=0.0)
    totals = totals.reindex(sorted(c.cluster_id for c in clusters), fill_value=0.0)
    totals.index.name = "cluster_id"
    totals.columns.name = None
    outside = frame[frame["cluster_id"] < 0].groupby("key")["value"].sum()
    return ClusterTotals(totals=totals.astype(np.float64), outside={k: float(v) for k, v in outside.items()})


def aggregate_to_clusters(
    cells: Sequence[PopulationCell],
    clusters: Sequence[AmenityCluster],
    slack_m: float = 100.0,
) -> ClusterTotals:
    """
    Sum population counts per cluster and kind. A cell counts toward the
    cluster its centroid falls in; the rest goes to the outside bucket.
    """
    kinds = [str(k) for k in PopulationKind]
    if not cells:
        empty = pd.DataFrame(0.0, index=pd.Index(sorted(c.cluster_id for c in clusters), name="cluster_id"), columns=kinds)
        return ClusterTotals(totals=empty, outside={})
    owner = _locate_cells([c.cell for c in cells], clusters, slack_m)
    result = _sum_by_cluster(owner, [str(c.kind) for c in cells], np.array([c.count for c in cells]), clusters)
    totals = result.totals.reindex(columns=kinds, fill_value=0.0)
    if result.outside:
        log.info("population outside clusters", **{f"outside_{k}": v for k, v in result.outside.items()})
    return ClusterTotals(totals=totals, outside=result.outside)


def aggregate_land_prices(
    records: Sequence[LandPriceRecord],
    clusters: Sequence[AmenityCluster],
    slack_m: float = 100.0,
) -> pd.Series:
    """Land price per cluster; cell prices are averaged over the cells mapped to a cluster."""
    keyed = {r.cluster_id: r.price for r in records if r.cluster_id is not None}
    cell_records = [r for r in records if r.cell is not None]
    prices = pd.Series(keyed, dtype=np.float64)
    if cell_records:
        owner = _locate_cells([r.cell for r in cell_records], clusters, slack_m)
        frame = pd.DataFrame({"cluster_id": owner, "price": [r.price for r in cell_records]})
        means = frame[frame["cluster_id"] >= 0].groupby("cluster_id")["price"].mean()
        prices = pd.concat([prices, means[~means.index.isin(prices.index)]])
        log.info("land price cells outside clusters", n_cells=int((owner < 0).sum()))
    prices.index.name = "cluster_id"
    return prices.rename("land_price").sort_index()


def aggregate_labor_sectors(
    cells: Sequence[LaborSectorCell],
    clusters: Sequence[AmenityCluster],
    slack_m: float = 100.0,
) -> pd.DataFrame:
    """Share of each sector in a cluster's workers; clusters without workers are left out."""
    if not cells:
        return pd.DataFrame(index=pd.Index([], name="cluster_id"))
    owner = _locate_cells([c.cell for c in cells], clusters, slack_m)
    result = _sum_by_cluster(owner, [c.sector for c in cells], np.array([c.count for c in cells]), clusters)
    workers = result.totals.sum(axis=1)
    shares = result.totals[workers > 0].div(workers[workers > 0], axis=0)
    return shares.reindex(columns=sorted(shares.columns))


class WardIndex:
    """
    Ward labels for arbitrary points.

    When the shops carry a ward column a point takes the ward of its
    nearest shop. Otherwise wards are cells of a 5 x 5 grid over the shops'
    bounding box; points beyond the box clip to the border cells.
    """

    def __init__(self, shops: Sequence[Shop], grid: int = WARD_GRID):
        self.grid = grid
        with_ward = [s for s in shops if s.ward is not None]
        self.lats, self.lons = coordinates(s.location for s in shops)
        if with_ward:
            lats, lons = coordinates(s.location for s in with_ward)
            self.tree = KDTree(unit_vectors(lats, lons))
            self.labels = np.array([s.ward for s in with_ward], dtype=object)
        else:
            self.tree = None
            self.labels = None

    def wards(self, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
        lats = np.asarray(lats, dtype=np.float64)
        lons = np.asarray(lons, dtype=np.float64)
        if self.tree is not None:
            _, nearest = self.tree.query(unit_vectors(lats, lons), k=1)
            return self.labels[nearest]
        rows = self._bin(lats, self.lats)
        cols = self._bin(lons, self.lons)
        return np.array([f"W{r}{c}" for r, c in zip(rows, cols)], dtype=object)

    def _bin(self, values: np.ndarray, reference: np.ndarray) -> np.ndarray:
        lo, hi = float(reference.min()), float(reference.max())
        if hi <= lo:
            return np.zeros(len(values), dtype=np.int64)
        return np.clip(np.floor((values - lo) / (hi - lo) * self.grid), 0, self.grid - 1).astype(np.int64)

    def ward_of(self, p: GeoPoint) -> str:
        return str(self.wards(np.array([p.lat]), np.array([p.lon]))[0])


def product_industries(shops: Sequence[Shop]) -> dict[str, str]:
    """Most common industry code of every product, ties by code."""
    votes: dict[str, Counter] = {}
    for shop in shops:
        votes.setdefault(shop.product_code, Counter())[shop.industry_code] += 1
    return {product: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0] for product, c in votes.items()}


def cluster_covariates(
    clusters: Sequence[AmenityCluster],
    population: ClusterTotals,
    land_prices: pd.Series,
) -> pd.DataFrame:
    """Per-cluster population (thousands of people) and land price (million KRW per m2)."""
    ids = pd.Index(sorted(c.cluster_id for c in clusters), name="cluster_id")
    frame = (population.totals.reindex(ids, fill_value=0.0) / 1000.0).reindex(
        columns=[str(k) for k in PopulationKind], fill_value=0.0
    )
    frame["land_price"] = land_prices.reindex(ids) / 1_000_000.0
    return frame


def _check_mismatch(name: str, mismatched: int, total: int) -> None:
    if total and mismatched / total > MAX_JOIN_MISMATCH:
        raise InputError(f"{name}: {mismatched} of {total} rows do not join onto clusters or scores")


def build_regression_tables(
    clusters: Sequence[AmenityCluster],
    scores: ComplexityScores,
    market_records: Sequence[MarketDistanceRecord],
    card: Sequence[CardRecord],
    covariates: pd.DataFrame,
    industries: dict[str, str],
    wards: WardIndex,
) -> RegressionTables:
    """
    Observation tables of the market-boundary model (one row per
    product and market pair) and the consumer-travel model (one row per
    consumer group). Difference terms are absolute differences between the
    two clusters. Rows whose keys do not join are dropped and counted, as
    are rows with a missing covariate.
    """
    eci = pd.Series(scores.eci, index=scores.clusters)
    diversity = pd.Series(scores.diversity, index=scores.clusters)
    pci = pd.Series(scores.pci, index=scores.products)
    by_id = {c.cluster_id: c for c in clusters}
    center_ward = {cid: wards.ward_of(c.center) for cid, c in by_id.items()}
    dropped: dict[str, int] = {}

    market = pd.DataFrame([r.model_dump() for r in market_records], columns=list(MarketDistanceRecord.model_fields))
    joins = (
        market["product_code"].isin(pci.index)
        & market["cluster_a"].isin(eci.index)
        & market["cluster_b"].isin(eci.index)
    )
    dropped["market_unjoined"] = int((~joins).sum())
    _check_mismatch("market distances", dropped["market_unjoined"], len(market))
    market = market[joins]
    a, b = market["cluster_a"], market["cluster_b"]
    market_table = pd.DataFrame(
        {
            "product_code": market["product_code"],
            "cluster_a": a,
            "cluster_b": b,
            ec.DIST: market["distance_km"],
            ec.PCI: market["product_code"].map(pci),
            ec.D_ECI: (a.map(eci) - b.map(eci)).abs(),
            ec.D_DIVERSITY: (a.map(diversity) - b.map(diversity)).abs().astype(np.float64),
            "d_labor": (a.map(covariates["labor"]) - b.map(covariates["labor"])).abs(),
            "d_floating": (a.map(covariates["floating"]) - b.map(covariates["floating"])).abs(),
            "d_residential": (a.map(covariates["residential"]) - b.map(covariates["residential"])).abs(),
            "d_land_price": (a.map(covariates["land_price"]) - b.map(covariates["land_price"])).abs(),
            ec.WARD: a.map(center_ward),
            ec.INDUSTRY: market["product_code"].map(industries),
        }
    )
    complete = market_table.notna().all(axis=1)
    dropped["market_missing_covariate"] = int((~complete).sum())
    market_table = market_table[complete].reset_index(drop=True)

    card = list(card)
    known = np.array([r.product_code in pci.index for r in card], dtype=bool)
    dropped["consumer_unjoined"] = int((~known).sum())
    _check_mismatch("card records", dropped["consumer_unjoined"], len(card))
    joined = [r for r, ok in zip(card, known) if ok]
    home_lats, home_lons = cell_centroids(r.home_cell for r in joined)
    consumer_table = pd.DataFrame(
        {
            "product_code": [r.product_code for r in joined],
            ec.DIST: travel_distances(joined),
            ec.PCI: [pci[r.product_code] for r in joined],
            ec.COUNT: [float(r.purchase_count) for r in joined],
            ec.FEMALE: [1.0 if r.gender is Gender.F else 0.0 for r in joined],
            ec.AGE_GROUP: [str(r.age_decade) for r in joined],
            ec.WARD: wards.wards(home_lats, home_lons) if joined else [],
            ec.INDUSTRY: [industries.get(r.product_code) for r in joined],
        }
    )
    complete = consumer_table.notna().all(axis=1)
    dropped["consumer_missing_covariate"] = int((~complete).sum())
    consumer_table = consumer_table[complete].reset_index(drop=True)

    log.info(
        "regression tables built",
        market_rows=len(market_table),
        consumer_rows=len(consumer_table),
        **dropped,
    )
    return RegressionTables(market=market_table, consumer=consumer_table, dropped=dropped)
