"""
Synthetic cities with a known hierarchy.

Christaller cities place central places on a triangular lattice. The
level-l centers form the sublattice T^l Z^2, where T rotates by 60 degrees
and scales by sqrt(k); each level is therefore a scaled copy of the base
lattice nested inside the level below it. A level-l product is stocked at
every center of level l or higher.

Blob cities are isotropic Gaussian clouds of shops, one per ground-truth
cluster.

All randomness comes from numpy's PCG64 bit generator seeded through a
SeedSequence of (seed, stream), so a seed reproduces a city bit for bit.
"""

import math

import numpy as np
import structlog

from urban_centrality.errors import InputError
from urban_centrality.geo import cell_containing, offset_point
from urban_centrality.schemas.geo import GeoPoint
from urban_centrality.schemas.ingest import (
    CardRecord,
    LaborSectorCell,
    LandPriceRecord,
    PopulationCell,
    PopulationKind,
)
from urban_centrality.schemas.market import ConsumerGroup, Gender
from urban_centrality.schemas.shops import Shop
from urban_centrality.schemas.synth import (
    BlobConfig,
    CenterWeighting,
    ChristallerConfig,
    RangeProfile,
    SyntheticAreaData,
    SyntheticCenter,
    SyntheticCity,
)

log = structlog.get_logger(__name__)

MAX_SHOPS = 1_000_000

# first column of T per k; the second column is its 60 degree rotation
SUBLATTICE_GENERATOR = {3: (1, 1), 4: (2, 0), 7: (2, 1)}

AGE_DECADES = (10, 20, 30, 40, 50, 60, 70)
LABOR_SECTORS = ("manufacturing", "office", "retail")

_JITTER, _CONSUMERS, _CARDS, _AREAS = range(4)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def product_code(level: int, index: int) -> str:
    return f"L{level}P{index}"


def _adjugate(k: int) -> tuple[tuple[int, int], tuple[int, int]]:
    p, q = SUBLATTICE_GENERATOR[k]
    # T = [[p, -q], [q, p + q]], det T = p^2 + pq + q^2 = k
    return (p + q, q), (-q, p)


def lattice_level(i: int, j: int, k: int, max_level: int) -> int:
    """Highest l <= max_level with (i, j) in T^l Z^2."""
    (a, b), (c, d) = _adjugate(k)
    level = 0
    while level < max_level:
        u, v = a * i + b * j, c * i + d * j
        if u % k or v % k:
            break
        i, j = u // k, v // k
        level += 1
    return level


def _lattice_sites(radius: float) -> list[tuple[int, int]]:
    """Integer (i, j) with |i*a1 + j*a2| <= radius, a1 = (1, 0), a2 = (1/2, sqrt(3)/2)."""
    half_height = math.sqrt(3) / 2
    j_max = math.ceil(radius / half_height) + 1
    sites = []
    for j in range(-j_max, j_max + 1):
        for i in range(math.floor(-radius - j / 2) - 1, math.ceil(radius - j / 2) + 2):
            x, y = i + j / 2, j * half_height
            if x * x + y * y <= radius * radius + 1e-9:
                sites.append((i, j))
    return sites


def _city_anchor(origin: GeoPoint, half_width_m: float) -> GeoPoint:
    return offset_point(origin, -half_width_m, -half_width_m)


def generate_christaller(cfg: ChristallerConfig) -> SyntheticCity:
    """
    Build a hierarchical city. A level-h center hosts
    `shops_per_center_per_product` shops of every product of level <= h,
    multiplied by k^h under market-area weighting. Shop positions are
    jittered uniformly within a disc of `jitter_m`.
    """
    max_level = cfg.levels - 1
    sites = _lattice_sites(cfg.radius_km / cfg.base_spacing_km)
    levels = [lattice_level(i, j, cfg.k_factor, max_level) for i, j in sites]

    def copies(level: int) -> int:
        if cfg.center_weighting is CenterWeighting.MARKET_AREA:
            return cfg.shops_per_center_per_product * cfg.k_factor**level
        return cfg.shops_per_center_per_product

    n_shops = sum(copies(h) * (h + 1) * cfg.products_per_level for h in levels)
    if n_shops > MAX_SHOPS:
        raise InputError(f"configuration yields {n_shops:,} shops, more than {MAX_SHOPS:,}")

    jitter = _rng(cfg.seed, _JITTER).random((n_shops, 2))
    radii = cfg.jitter_m * np.sqrt(jitter[:, 0])
    angles = 2 * math.pi * jitter[:, 1]

    half_height = math.sqrt(3) / 2
    centers, shops, shop_center = [], [], {}
    for idx, ((i, j), level) in enumerate(zip(sites, levels)):
        east_m = (i + j / 2) * cfg.base_spacing_km * 1000.0
        north_m = j * half_height * cfg.base_spacing_km * 1000.0
        center = SyntheticCenter(
            center_id=f"c{idx:05d}",
            location=offset_point(cfg.origin, north_m, east_m),
            level=level,
            ring=max(abs(i), abs(j), abs(i + j)),
        )
        centers.append(center)
        for product_level in range(level + 1):
            for p in range(cfg.products_per_level):
                for _ in range(copies(level)):
                    s = len(shops)
                    shop = Shop(
                        id=f"s{s:07d}",
                        location=offset_point(
                            cfg.origin,
                            north_m + radii[s] * math.sin(angles[s]),
                            east_m + radii[s] * math.cos(angles[s]),
                        ),
                        product_code=product_code(product_level, p),
                        industry_code=f"I{p}",
                    )
                    shops.append(shop)
                    shop_center[shop.id] = center.center_id

    log.info(
        "christaller city generated",
        n_centers=len(centers),
        n_shops=len(shops),
        centers_per_level=[levels.count(h) for h in range(cfg.levels)],
    )
    return SyntheticCity(
        shops=shops,
        centers=centers,
        product_level={
            product_code(level, p): level for level in range(cfg.levels) for p in range(cfg.products_per_level)
        },
        shop_center=shop_center,
        anchor=_city_anchor(cfg.origin, cfg.radius_km * 1000.0 + cfg.jitter_m),
        base_spacing_km=cfg.base_spacing_km,
        k_factor=cfg.k_factor,
        levels=cfg.levels,
    )


def generate_blobs(cfg: BlobConfig) -> SyntheticCity:
    """
    Gaussian blobs on an east-west line `spacing_km` apart. Blob b sells its
    own products `B{b}P{p}`, so the count matrix is block diagonal.
    """
    rng = _rng(cfg.seed, _JITTER)
    offsets = rng.normal(0.0, cfg.sigma_m, size=(cfg.n_blobs, cfg.shops_per_blob, 2))
    centers, shops, shop_center, product_level = [], [], {}, {}
    for b in range(cfg.n_blobs):
        east_m = b * cfg.spacing_km * 1000.0
        center = SyntheticCenter(
            center_id=f"c{b:05d}", location=offset_point(cfg.origin, 0.0, east_m), level=0, ring=b
        )
        centers.append(center)
        for n in range(cfg.shops_per_blob):
            p = n % cfg.products_per_blob
            code = f"B{b}P{p}"
            product_level[code] = 0
            shop = Shop(
                id=f"s{len(shops):07d}",
                location=offset_point(cfg.origin, offsets[b, n, 0], east_m + offsets[b, n, 1]),
                product_code=code,
                industry_code=f"I{p}",
            )
            shops.append(shop)
            shop_center[shop.id] = center.center_id

    return SyntheticCity(
        shops=shops,
        centers=centers,
        product_level=product_level,
        shop_center=shop_center,
        anchor=_city_anchor(cfg.origin, 6 * cfg.sigma_m),
        base_spacing_km=cfg.spacing_km,
        k_factor=1,
        levels=1,
    )


def _stocked_products(city: SyntheticCity) -> dict[str, list[str]]:
    stocked: dict[str, set[str]] = {}
    for shop in city.shops:
        stocked.setdefault(city.shop_center[shop.id], set()).add(shop.product_code)
    return {center: sorted(codes) for center, codes in stocked.items()}


def generate_consumers(
    city: SyntheticCity,
    groups_per_center: int = 20,
    range_profile: RangeProfile | None = None,
    seed: int = 0,
) -> list[ConsumerGroup]:
    """
    Consumer groups buying at each center. A group buying a level-l product
    lives at a distance drawn uniformly from [0, range_profile(l)] km in a
    random direction. Home and purchase cells are 50 m cells of the grid
    anchored at the city's south-west corner.
    """
    range_profile = range_profile or RangeProfile()
    rng = _rng(seed, _CONSUMERS)
    stocked = _stocked_products(city)
    groups = []
    for center in sorted(city.centers, key=lambda c: c.center_id):
        products = stocked.get(center.center_id)
        if not products:
            continue
        purchase_cell = cell_containing(center.location, 50, city.anchor)
        for _ in range(groups_per_center):
            code = products[int(rng.integers(len(products)))]
            distance_m = rng.uniform(0.0, range_profile(city.product_level[code])) * 1000.0
            bearing = rng.uniform(0.0, 2 * math.pi)
            home = offset_point(center.location, distance_m * math.cos(bearing), distance_m * math.sin(bearing))
            groups.append(
                ConsumerGroup(
                    age_decade=AGE_DECADES[int(rng.integers(len(AGE_DECADES)))],
                    gender=Gender.F if rng.random() < 0.5 else Gender.M,
                    home_cell=cell_containing(home, 50, city.anchor),
                    purchase_cell=purchase_cell,
                    product_code=code,
                    purchase_count=1 + int(rng.poisson(2.0)),
                )
            )
    log.info("consumer groups generated", n_groups=len(groups))
    return groups


def card_records(city: SyntheticCity, groups: list[ConsumerGroup], seed: int = 0) -> list[CardRecord]:
    """Attach purchase amounts and store counts; higher-order goods cost more."""
    rng = _rng(seed, _CARDS)
    records = []
    for group in groups:
        unit_price = 10_000.0 * (1 + city.product_level[group.product_code])
        amount = round(group.purchase_count * unit_price * float(rng.lognormal(0.0, 0.2)))
        records.append(
            CardRecord(
                **group.model_dump(),
                amount_krw=float(amount),
                n_stores=int(rng.integers(1, group.purchase_count + 1)),
            )
        )
    return records


def generate_population(city: SyntheticCity, seed: int = 0) -> SyntheticAreaData:
    """
    Population, land-price and labor cells around every center, scaled with
    center level. Each center also gets a residential cell 500 m north of it,
    outside the cluster, so aggregation has an outside share to report.
    """
    rng = _rng(seed, _AREAS)
    k = max(city.k_factor, 2)
    population, land_prices, labor = [], [], []

    def noisy(scale: float, sigma: float = 0.2) -> float:
        return float(round(scale * rng.lognormal(0.0, sigma)))

    for center in sorted(city.centers, key=lambda c: c.center_id):
        level = center.level
        cell_100 = cell_containing(center.location, 100, city.anchor)
        cell_50 = cell_containing(center.location, 50, city.anchor)
        suburb = cell_containing(offset_point(center.location, 500.0, 0.0), 100, city.anchor)
        population += [
            PopulationCell(cell=cell_100, kind=PopulationKind.RESIDENTIAL, count=noisy(200.0)),
            PopulationCell(cell=suburb, kind=PopulationKind.RESIDENTIAL, count=noisy(400.0)),
            PopulationCell(cell=cell_100, kind=PopulationKind.LABOR, count=noisy(100.0 * k**level)),
            PopulationCell(cell=cell_50, kind=PopulationKind.FLOATING, count=noisy(300.0 * (1 + level) ** 2)),
        ]
        land_prices.append(LandPriceRecord(cell=cell_100, price=noisy(1_000_000.0 * (1 + level), 0.1)))
        sector_scale = {
            "manufacturing": 30.0 * (city.levels - level),
            "office": 20.0 * k**level,
            "retail": 50.0,
        }
        labor += [
            LaborSectorCell(sector=sector, cell=cell_100, count=noisy(sector_scale[sector]))
            for sector in LABOR_SECTORS
        ]
    return SyntheticAreaData(population=population, land_prices=land_prices, labor=labor)
