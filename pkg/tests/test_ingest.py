import numpy as np
import pandas as pd
import pytest
from conftest import ORIGIN, make_shop

from urban_centrality import ingest
from urban_centrality.errors import InputError
from urban_centrality.geo import cell_containing, offset_point
from urban_centrality.schemas.complexity import ComplexityMethod, ComplexityScores
from urban_centrality.schemas.ingest import (
    CardRecord,
    LaborSectorCell,
    LandPriceRecord,
    PopulationCell,
    PopulationKind,
)
from urban_centrality.schemas.market import Gender, MarketDistanceRecord
from urban_centrality.schemas.shops import AmenityCluster

ANCHOR = offset_point(ORIGIN, -5000.0, -5000.0)
EAST = offset_point(ORIGIN, 0.0, 2000.0)


def cluster(cluster_id: int, center) -> AmenityCluster:
    return AmenityCluster(
        cluster_id=cluster_id,
        center=center,
        center_shop_id=f"s{cluster_id}",
        member_ids=frozenset({f"s{cluster_id}"}),
        radius_m=100.0,
        effective_density=1.0,
    )


CLUSTERS = [cluster(0, ORIGIN), cluster(1, EAST)]


def cell(point, size_m: int = 100):
    return cell_containing(point, size_m, ANCHOR)


def card(product: str = "A", home=ORIGIN, shop=ORIGIN, gender: Gender = Gender.F) -> CardRecord:
    return CardRecord(
        age_decade=30,
        gender=gender,
        home_cell=cell(home, 50),
        purchase_cell=cell(shop, 50),
        product_code=product,
        purchase_count=2,
        amount_krw=15000.0,
        n_stores=1,
    )


def write_rows(path, header: str, rows: list[str]) -> None:
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")


# readers and writers


def test_shops_survive_a_write_and_read(tmp_path):
    shops = [make_shop("a", 10.0, 20.0), make_shop("b", -35.5, 4.25, product="P1", industry="I1")]
    ingest.write_shops(tmp_path / "shops.csv", shops)
    assert ingest.read_shops(tmp_path / "shops.csv") == shops


def test_shop_wards_survive_a_write_and_read(tmp_path):
    shops = [make_shop("a", ward="Jung"), make_shop("b", 100.0, ward="Jongno")]
    ingest.write_shops(tmp_path / "shops.csv", shops)
    assert [s.ward for s in ingest.read_shops(tmp_path / "shops.csv")] == ["Jung", "Jongno"]


def test_numeric_looking_ids_stay_text(tmp_path):
    write_rows(tmp_path / "shops.csv", "id,lat,lon,product_code,industry_code", ["007,37.5,127.0,0101,01"])
    (shop,) = ingest.read_shops(tmp_path / "shops.csv")
    assert (shop.id, shop.product_code, shop.industry_code) == ("007", "0101", "01")


def test_other_datasets_survive_a_write_and_read(tmp_path):
    records = [card(), card("B", home=EAST, gender=Gender.M)]
    ingest.write_card(tmp_path / "card.csv", records)
    assert ingest.read_card(tmp_path / "card.csv") == records

    cells = [
        PopulationCell(cell=cell(ORIGIN), kind=PopulationKind.RESIDENTIAL, count=120.0),
        PopulationCell(cell=cell(EAST, 50), kind=PopulationKind.FLOATING, count=33.0),
    ]
    ingest.write_population(tmp_path / "population.csv", cells)
    assert ingest.read_population(tmp_path / "population.csv") == cells

    labor = [LaborSectorCell(sector="office", cell=cell(ORIGIN), count=12.0)]
    ingest.write_labor_sectors(tmp_path / "labor.csv", labor)
    assert ingest.read_labor_sectors(tmp_path / "labor.csv") == labor


@pytest.mark.parametrize(
    "records",
    [
        [LandPriceRecord(cluster_id=0, price=2e6), LandPriceRecord(cluster_id=1, price=3e6)],
        [LandPriceRecord(cell=cell(ORIGIN), price=2e6)],
    ],
    ids=["by-cluster", "by-cell"],
)
def test_land_prices_survive_a_write_and_read(tmp_path, records):
    ingest.write_land_prices(tmp_path / "land.csv", records)
    assert ingest.read_land_prices(tmp_path / "land.csv") == records


def test_mixed_land_price_keys_are_rejected(tmp_path):
    records = [LandPriceRecord(cluster_id=0, price=2e6), LandPriceRecord(cell=cell(ORIGIN), price=2e6)]
    with pytest.raises(ValueError):
        ingest.write_land_prices(tmp_path / "land.csv", records)


def test_missing_file(tmp_path):
    with pytest.raises(InputError, match="not found"):
        ingest.read_shops(tmp_path / "absent.csv")


def test_empty_file(tmp_path):
    (tmp_path / "shops.csv").write_text("", encoding="utf-8")
    with pytest.raises(InputError, match="no header"):
        ingest.read_shops(tmp_path / "shops.csv")


def test_header_only_file_has_no_shops(tmp_path):
    write_rows(tmp_path / "shops.csv", "id,lat,lon,product_code,industry_code", [])
    assert ingest.read_shops(tmp_path / "shops.csv") == []


def test_missing_columns(tmp_path):
    write_rows(tmp_path / "shops.csv", "id,lat,lon", ["a,37.5,127.0"])
    with pytest.raises(InputError, match="lacks columns: product_code, industry_code"):
        ingest.read_shops(tmp_path / "shops.csv")


def test_duplicate_shop_ids(tmp_path):
    write_rows(
        tmp_path / "shops.csv",
        "id,lat,lon,product_code,industry_code",
        ["a,37.5,127.0,P,I", "a,37.6,127.0,P,I"],
    )
    with pytest.raises(InputError, match="duplicate shop ids"):
        ingest.read_shops(tmp_path / "shops.csv")


def test_few_malformed_rows_are_rejected_and_logged(tmp_path):
    rows = [f"s{i},37.5,127.0,P,I" for i in range(200)]
    rows[41] = "s41,north,127.0,P,I"
    write_rows(tmp_path / "shops.csv", "id,lat,lon,product_code,industry_code", rows)
    shops = ingest.read_shops(tmp_path / "shops.csv", rejects_path=tmp_path / "rejects.csv")
    assert len(shops) == 199
    rejects = pd.read_csv(tmp_path / "rejects.csv")
    assert rejects["line"].tolist() == [43]


def test_one_percent_malformed_rows_abort(tmp_path):
    rows = [f"s{i},37.5,127.0,P,I" for i in range(100)]
    rows[0] = "s0,91.0,127.0,P,I"
    write_rows(tmp_path / "shops.csv", "id,lat,lon,product_code,industry_code", rows)
    with pytest.raises(InputError, match="1 of 100 rows are malformed"):
        ingest.read_shops(tmp_path / "shops.csv")


def test_population_cell_size_must_match_kind(tmp_path):
    write_rows(
        tmp_path / "population.csv",
        "kind,cell_lat,cell_lon,size_m,count",
        ["floating,37.5,127.0,100,10"],
    )
    with pytest.raises(InputError, match="malformed"):
        ingest.read_population(tmp_path / "population.csv")


# joins onto clusters


def test_population_mass_is_conserved():
    far = offset_point(ORIGIN, 3000.0, 0.0)
    cells = [
        PopulationCell(cell=cell(ORIGIN), kind=PopulationKind.RESIDENTIAL, count=100.0),
        PopulationCell(cell=cell(ORIGIN), kind=PopulationKind.LABOR, count=40.0),
        PopulationCell(cell=cell(EAST, 50), kind=PopulationKind.FLOATING, count=25.0),
        PopulationCell(cell=cell(far), kind=PopulationKind.RESIDENTIAL, count=7.0),
    ]
    result = ingest.aggregate_to_clusters(cells, CLUSTERS)
    assert result.totals.loc[0, "residential"] == 100.0
    assert result.totals.loc[0, "labor"] == 40.0
    assert result.totals.loc[1, "floating"] == 25.0
    assert result.outside == {"residential": 7.0}
    assert result.totals.to_numpy().sum() + sum(result.outside.values()) == 172.0


def test_no_population_gives_zero_totals():
    result = ingest.aggregate_to_clusters([], CLUSTERS)
    assert result.totals.index.tolist() == [0, 1]
    assert (result.totals.to_numpy() == 0).all()


def test_cluster_keyed_land_prices():
    prices = ingest.aggregate_land_prices(
        [LandPriceRecord(cluster_id=1, price=3e6), LandPriceRecord(cluster_id=0, price=2e6)], CLUSTERS
    )
    assert prices.to_dict() == {0: 2e6, 1: 3e6}


def test_cell_keyed_land_prices_are_averaged():
    near = offset_point(ORIGIN, 50.0, 0.0)
    records = [
        LandPriceRecord(cell=cell(ORIGIN), price=2e6),
        LandPriceRecord(cell=cell(near), price=4e6),
        LandPriceRecord(cell=cell(offset_point(ORIGIN, 4000.0, 0.0)), price=9e6),
    ]
    assert ingest.aggregate_land_prices(records, CLUSTERS).to_dict() == {0: 3e6}


def test_labor_shares_sum_to_one():
    cells = [
        LaborSectorCell(sector="office", cell=cell(ORIGIN), count=30.0),
        LaborSectorCell(sector="retail", cell=cell(ORIGIN), count=10.0),
        LaborSectorCell(sector="retail", cell=cell(EAST), count=5.0),
    ]
    shares = ingest.aggregate_labor_sectors(cells, CLUSTERS)
    assert shares.loc[0].tolist() == [0.75, 0.25]
    assert shares.loc[1].tolist() == [0.0, 1.0]
    assert np.allclose(shares.sum(axis=1), 1.0)


def test_wards_from_nearest_shop():
    index = ingest.WardIndex([make_shop("a", ward="Jung"), make_shop("b", east_m=2000.0, ward="Jongno")])
    assert index.ward_of(offset_point(ORIGIN, 0.0, 300.0)) == "Jung"
    assert index.ward_of(offset_point(ORIGIN, 0.0, 1700.0)) == "Jongno"


def test_wards_from_grid_clip_to_the_border():
    index = ingest.WardIndex([make_shop("a"), make_shop("b", 1000.0, 1000.0)])
    assert index.ward_of(ORIGIN) == "W00"
    assert index.ward_of(offset_point(ORIGIN, 1000.0, 1000.0)) == "W44"
    assert index.ward_of(offset_point(ORIGIN, 5000.0, -5000.0)) == "W40"
    assert index.ward_of(offset_point(ORIGIN, 500.0, 500.0)) == "W22"


def test_product_industry_is_the_majority_code():
    shops = [
        make_shop("a", product="P", industry="I2"),
        make_shop("b", product="P", industry="I1"),
        make_shop("c", product="Q", industry="I3"),
        make_shop("d", product="Q", industry="I3"),
        make_shop("e", product="Q", industry="I0"),
    ]
    assert ingest.product_industries(shops) == {"P": "I1", "Q": "I3"}


# regression tables


def two_cluster_world(card_records):
    scores = ComplexityScores(
        clusters=[0, 1],
        products=["A", "B"],
        eci_raw=np.array([1.0, -1.0]),
        eci=np.array([1.0, 0.0]),
        pci_raw=np.array([-1.0, 1.0]),
        pci=np.array([0.0, 1.0]),
        diversity=np.array([2, 1]),
        ubiquity=np.array([2, 1]),
        method=ComplexityMethod.EIGEN,
        iterations=0,
    )
    records = [
        MarketDistanceRecord(product_code="A", cluster_a=0, cluster_b=1, distance_km=2.0),
        MarketDistanceRecord(product_code="A", cluster_a=1, cluster_b=0, distance_km=2.0),
    ]
    shops = [make_shop("s0", product="A", industry="I0"), make_shop("s1", east_m=2000.0, product="B", industry="I1")]
    covariates = ingest.cluster_covariates(
        CLUSTERS, ingest.aggregate_to_clusters([], CLUSTERS), pd.Series({0: 1e6, 1: 3e6})
    )
    return ingest.build_regression_tables(
        CLUSTERS,
        scores,
        records,
        card_records,
        covariates,
        ingest.product_industries(shops),
        ingest.WardIndex(shops),
    )


def test_market_table_differences():
    market = two_cluster_world([card()]).market
    assert len(market) == 2
    row = market.iloc[0]
    assert (row["dist_km"], row["pci"], row["d_eci"], row["d_diversity"]) == (2.0, 0.0, 1.0, 1.0)
    assert row["d_land_price"] == pytest.approx(2.0)
    assert row["d_labor"] == 0.0
    assert row["industry"] == "I0"


def test_buying_at_home_travels_zero():
    consumer = two_cluster_world([card(), card("B", home=EAST, gender=Gender.M)]).consumer
    assert consumer["dist_km"].tolist()[0] == 0.0
    assert consumer["female"].tolist() == [1.0, 0.0]
    assert consumer["pci"].tolist() == [0.0, 1.0]
    assert consumer["age_group"].tolist() == ["30", "30"]


def test_few_unjoined_card_rows_are_dropped():
    tables = two_cluster_world([card() for _ in range(39)] + [card("Z")])
    assert len(tables.consumer) == 39
    assert tables.dropped["consumer_unjoined"] == 1


def test_many_unjoined_card_rows_abort():
    with pytest.raises(InputError, match="2 of 20 rows"):
        two_cluster_world([card() for _ in range(18)] + [card("Z"), card("Y")])
