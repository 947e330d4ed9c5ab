import itertools
import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from urban_centrality.complexity_core import spearman
from urban_centrality.errors import InputError
from urban_centrality.geo import geodesic_distance
from urban_centrality.market_metrics import travel_distances
from urban_centrality.runners import cli
from urban_centrality.schemas.ingest import PopulationKind
from urban_centrality.schemas.synth import BlobConfig, CenterWeighting, ChristallerConfig, RangeProfile
from urban_centrality.synth_city import (
    MAX_SHOPS,
    card_records,
    generate_blobs,
    generate_christaller,
    generate_consumers,
    generate_population,
    lattice_level,
)

SMALL = ChristallerConfig(levels=3, radius_km=6.0, seed=7)


@pytest.fixture(scope="module")
def small_city():
    return generate_christaller(SMALL)


def level_of(product: str) -> int:
    return int(product[1 : product.index("P")])


# lattice


@pytest.mark.parametrize("k", [3, 4, 7])
def test_origin_is_in_every_level(k):
    assert lattice_level(0, 0, k, 5) == 5


def test_k3_lattice_levels():
    assert lattice_level(1, 0, 3, 3) == 0
    assert lattice_level(1, 1, 3, 3) == 1
    assert lattice_level(0, 3, 3, 3) == 2
    assert lattice_level(0, 3, 3, 1) == 1


@pytest.mark.parametrize("k", [3, 4, 7])
def test_level_fractions_follow_k(k):
    sites = list(itertools.product(range(-42, 42), repeat=2))
    levels = np.array([lattice_level(i, j, k, 2) for i, j in sites])
    assert np.mean(levels >= 1) == pytest.approx(1 / k, rel=0.05)


# christaller city


def test_higher_levels_are_rarer(small_city):
    per_level = [sum(c.level == h for c in small_city.centers) for h in range(3)]
    assert per_level[0] > per_level[1] > per_level[2] > 0


def test_centers_stock_every_product_up_to_their_level(small_city):
    center_level = {c.center_id: c.level for c in small_city.centers}
    stocked: dict[str, set[int]] = {}
    for shop in small_city.shops:
        stocked.setdefault(small_city.shop_center[shop.id], set()).add(level_of(shop.product_code))
    assert all(levels == set(range(center_level[c] + 1)) for c, levels in stocked.items())


def test_shop_count_follows_market_area_weighting(small_city):
    expected = sum(2 * 3**c.level * (c.level + 1) * 3 for c in small_city.centers)
    assert len(small_city.shops) == expected


def test_uniform_weighting_has_fewer_shops(small_city):
    uniform = generate_christaller(SMALL.model_copy(update={"center_weighting": CenterWeighting.UNIFORM}))
    assert len(uniform.shops) < len(small_city.shops)
    assert len(uniform.centers) == len(small_city.centers)


@pytest.mark.parametrize("level, spacing_km", [(0, 1.0), (1, 3**0.5), (2, 3.0)])
def test_nearest_center_spacing_per_level(small_city, level, spacing_km):
    centers = [c.location for c in small_city.centers if c.level >= level]
    nearest = min(geodesic_distance(a, b) for a, b in itertools.combinations(centers, 2))
    assert nearest == pytest.approx(spacing_km, rel=0.01)
    assert SMALL.spacing_km(level) == pytest.approx(spacing_km)


def test_single_level_city():
    city = generate_christaller(ChristallerConfig(levels=1, radius_km=3.0))
    assert {c.level for c in city.centers} == {0}
    assert set(city.product_level) == {"L0P0", "L0P1", "L0P2"}


def test_jitter_stays_within_the_disc(small_city):
    centers = {c.center_id: c.location for c in small_city.centers}
    offsets = [geodesic_distance(s.location, centers[small_city.shop_center[s.id]]) for s in small_city.shops]
    assert max(offsets) <= SMALL.jitter_m / 1000.0 * 1.01


def test_same_seed_same_city(small_city):
    assert generate_christaller(SMALL) == small_city


def test_different_seed_moves_shops(small_city):
    other = generate_christaller(SMALL.model_copy(update={"seed": 8}))
    assert [s.location for s in other.shops] != [s.location for s in small_city.shops]
    assert [s.product_code for s in other.shops] == [s.product_code for s in small_city.shops]


def test_oversized_city_is_rejected():
    with pytest.raises(InputError, match=f"more than {MAX_SHOPS:,}"):
        generate_christaller(ChristallerConfig(levels=6, radius_km=120.0))


# blobs


def test_blob_city_layout():
    city = generate_blobs(BlobConfig(seed=1))
    assert len(city.shops) == 300
    assert len(city.centers) == 3
    assert {p for p in city.product_level} == {f"B{b}P{p}" for b in range(3) for p in range(3)}
    assert all(s.product_code.startswith(f"B{int(city.shop_center[s.id][1:])}") for s in city.shops)


def test_blob_spread_matches_sigma():
    city = generate_blobs(BlobConfig(seed=2, n_blobs=1, shops_per_blob=2000))
    center = city.centers[0].location
    d = np.array([geodesic_distance(center, s.location) for s in city.shops]) * 1000.0
    # radial distance of a 2-D gaussian has mean sigma * sqrt(pi / 2)
    assert d.mean() == pytest.approx(100.0 * np.sqrt(np.pi / 2), rel=0.05)


# consumers and area data


def test_consumer_groups_per_center(small_city):
    groups = generate_consumers(small_city, groups_per_center=5, seed=1)
    assert len(groups) == 5 * len(small_city.centers)
    assert all(g.purchase_count >= 1 for g in groups)


def test_travel_stays_within_range(small_city):
    profile = RangeProfile()
    groups = generate_consumers(small_city, groups_per_center=10, range_profile=profile, seed=2)
    limits = np.array([profile(small_city.product_level[g.product_code]) for g in groups])
    # home and purchase snap to 50 m cells
    assert np.all(travel_distances(groups) <= limits + 0.08)


def test_higher_order_goods_travel_further(small_city):
    groups = generate_consumers(small_city, groups_per_center=20, seed=3)
    frame = pd.DataFrame(
        {
            "level": [small_city.product_level[g.product_code] for g in groups],
            "dist": travel_distances(groups),
        }
    )
    means = frame.groupby("level")["dist"].mean()
    assert means.is_monotonic_increasing


def test_constant_range_removes_the_gradient(small_city):
    groups = generate_consumers(small_city, groups_per_center=20, range_profile=RangeProfile(slope_km=0.0), seed=3)
    assert travel_distances(groups).max() <= 1.08


def test_card_records_extend_groups(small_city):
    groups = generate_consumers(small_city, groups_per_center=3, seed=4)
    records = card_records(small_city, groups, seed=4)
    assert len(records) == len(groups)
    for group, record in zip(groups, records):
        assert record.home_cell == group.home_cell
        assert record.amount_krw > 0
        assert 1 <= record.n_stores <= group.purchase_count


def test_population_cells_per_center(small_city):
    areas = generate_population(small_city, seed=5)
    n = len(small_city.centers)
    kinds = pd.Series([c.kind for c in areas.population]).value_counts()
    assert kinds[PopulationKind.RESIDENTIAL] == 2 * n
    assert kinds[PopulationKind.LABOR] == n
    assert kinds[PopulationKind.FLOATING] == n
    assert len(areas.land_prices) == n
    assert len(areas.labor) == 3 * n


def test_consumers_are_reproducible(small_city):
    assert generate_consumers(small_city, seed=9) == generate_consumers(small_city, seed=9)


# whole pipeline on the synthesized city


def _product_levels(small_city_run) -> pd.DataFrame:
    pci = pd.read_csv(small_city_run / "pci.csv", dtype={"product_code": str})
    return pci.assign(level=pci["product_code"].map(level_of))


@pytest.mark.slow
def test_pci_ranks_follow_product_level(small_city_run):
    pci = _product_levels(small_city_run)
    assert len(pci) == 9
    assert spearman(pci["level"], pci["pci"]) >= 0.9


@pytest.mark.slow
def test_market_spacing_matches_lattice(small_city_run):
    distances = pd.read_csv(small_city_run / "market_distances.csv", dtype={"product_code": str})
    median = distances.assign(level=distances["product_code"].map(level_of)).groupby("level")["distance_km"].median()
    for level, value in median.items():
        assert value == pytest.approx(SMALL.spacing_km(level), rel=0.1)
    assert median.is_monotonic_increasing


@pytest.mark.slow
def test_distance_grows_with_product_complexity(small_city_run):
    coefficients = pd.read_csv(small_city_run / "regression_coefficients.csv")
    pci = coefficients[coefficients["term"] == "pci"].set_index("model")
    for model in ("(1) market", "(3) consumer"):
        assert pci.loc[model, "coef"] > 0
        assert pci.loc[model, "p_value"] < 0.01


@pytest.mark.slow
def test_constant_range_gives_no_consumer_effect(small_city_config, tmp_path):
    flags = ["--config", str(small_city_config), "--out-dir", str(tmp_path)]
    assert cli.main([*flags, "synth", "--constant-range"]) == 0
    for command in ("cluster", "complexity", "market", "regress"):
        assert cli.main([*flags, command]) == 0
    coefficients = pd.read_csv(tmp_path / "regression_coefficients.csv")
    consumer = coefficients[(coefficients["model"] == "(3) consumer") & (coefficients["term"] == "pci")]
    assert abs(consumer["t_stat"].iloc[0]) < 3


# the default four-level k=3 city with 50 m jitter
REFERENCE = ChristallerConfig(levels=4, k_factor=3, jitter_m=50.0)

REFERENCE_TOML = """
seed = 1

[synth.christaller]
levels = 4
k_factor = 3
jitter_m = 50.0
"""


@pytest.fixture(scope="module")
def reference_city_run(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("reference_city")
    config = out / "city.toml"
    config.write_text(REFERENCE_TOML, encoding="utf-8")
    flags = ["--config", str(config), "--out-dir", str(out)]
    for command in ("synth", "cluster", "complexity", "market"):
        assert cli.main([*flags, command]) == 0
    return out


def _cluster_centers(run: Path) -> pd.DataFrame:
    """Planted level and lattice ring of every cluster, found through its center shop."""
    truth = json.loads((run / "ground_truth.json").read_text())
    centers = pd.DataFrame(truth["centers"]).set_index("center_id")
    clusters = pd.read_csv(run / "clusters.csv", dtype={"center_shop_id": str})
    located = centers.loc[clusters["center_shop_id"].map(truth["shop_center"]).to_numpy(), ["level", "ring"]]
    located.index = pd.Index(clusters["cluster_id"].to_numpy(), name="cluster_id")
    return located


@pytest.mark.slow
def test_reference_city_pci_follows_product_level(reference_city_run):
    pci = _product_levels(reference_city_run)
    assert len(pci) == REFERENCE.levels * REFERENCE.products_per_level
    assert spearman(pci["level"], pci["pci"]) >= 0.9


@pytest.mark.slow
def test_reference_city_eci_follows_center_level(reference_city_run):
    eci = pd.read_csv(reference_city_run / "eci.csv").set_index("cluster_id")
    levels = _cluster_centers(reference_city_run).loc[eci.index, "level"]
    assert spearman(levels, eci["eci"]) >= 0.8


@pytest.mark.slow
def test_reference_city_market_spacing_away_from_the_edge(reference_city_run):
    distances = pd.read_csv(reference_city_run / "market_distances.csv", dtype={"product_code": str})
    distances["level"] = distances["product_code"].map(level_of)
    distances["ring"] = _cluster_centers(reference_city_run).loc[distances["cluster_a"], "ring"].to_numpy()
    # hop ring bounds the distance from the origin in base spacings, so these
    # markets have every lattice neighbour inside the city
    spacing = distances["level"].map(REFERENCE.spacing_km)
    interior = distances[distances["ring"] * REFERENCE.base_spacing_km + spacing <= REFERENCE.radius_km]
    median = interior.groupby("level")["distance_km"].median()
    assert list(median.index) == list(range(REFERENCE.levels))
    for level, value in median.items():
        assert value == pytest.approx(REFERENCE.spacing_km(level), rel=0.05)
