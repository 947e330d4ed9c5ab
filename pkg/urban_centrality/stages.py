"""
Pipeline stages with file-based handoff.

Each stage reads its inputs and the artifacts of earlier stages from the
output directory and writes its own artifacts there. Artifacts carry no
timestamps, so the same configuration reproduces them byte for byte.
"""

import json
import math
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import structlog
from shapely.geometry import Point, mapping

from urban_centrality import econometrics as ec
from urban_centrality import ingest
from urban_centrality.amenity_cluster import detect_clusters
from urban_centrality.complexity_core import (
    build_counts,
    compute_complexity,
    compute_rca,
    prune_incidence,
    spearman,
    uniqueness,
)
from urban_centrality.errors import ComputationError, InputError, MissingStageOutputError
from urban_centrality.market_metrics import (
    market_sets,
    mean_market_spacing,
    min_market_distances,
    single_market_products,
    travel_distances,
)
from urban_centrality.schemas.complexity import ComplexityMethod, ComplexityScores, IncidenceMatrix
from urban_centrality.schemas.config import RunConfig
from urban_centrality.schemas.geo import GeoPoint
from urban_centrality.schemas.market import MarketDistanceRecord
from urban_centrality.schemas.pipeline import PipelineStage, StageSummary
from urban_centrality.schemas.shops import AmenityCluster
from urban_centrality.synth_city import (
    card_records,
    generate_blobs,
    generate_christaller,
    generate_consumers,
    generate_population,
)

log = structlog.get_logger(__name__)

CLUSTERS_CSV = "clusters.csv"
CLUSTER_MEMBERS_CSV = "cluster_members.csv"
UNASSIGNED_CSV = "unassigned_shops.csv"
CLUSTER_SUMMARY = "cluster_summary.json"
ECI_CSV = "eci.csv"
PCI_CSV = "pci.csv"
INCIDENCE_CSV = "incidence.csv"
COMPLEXITY_SUMMARY = "complexity_summary.json"
MARKET_DISTANCES_CSV = "market_distances.csv"
MARKET_SPACING_CSV = "market_spacing.csv"
TRAVEL_DISTANCES_CSV = "travel_distances.csv"
MARKET_TABLE_CSV = "market_table.csv"
CONSUMER_TABLE_CSV = "consumer_table.csv"
REGRESSION_REPORT = "regression_report.txt"
REGRESSION_COEFFICIENTS_CSV = "regression_coefficients.csv"
CORRELATIONS_CSV = "correlations.csv"
LABOR_SHARE_TIERS_CSV = "labor_share_tiers.csv"
ECI_TIERS_CSV = "eci_tiers.csv"
CONTINGENCY_ECI_PCI_CSV = "contingency_eci_pci.csv"
CONTINGENCY_DIVERSITY_UNIQUENESS_CSV = "contingency_diversity_uniqueness.csv"
CLUSTERS_GEOJSON = "clusters.geojson"
GROUND_TRUTH_JSON = "ground_truth.json"

# correlation table labels and the per-cluster columns they read
AREA_CHARACTERISTICS = {
    "ECI": "eci",
    "Diversity": "diversity",
    "Shops": "n_shops",
    "Labor": "labor",
    "Float": "floating",
    "Resi": "residential",
    "Price": "land_price",
}


def _out_dir(config: RunConfig) -> Path:
    try:
        config.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create output directory {config.out_dir}: {e}") from e
    return config.out_dir


def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> str:
    frame.to_csv(path, index=index, lineterminator="\n", encoding="utf-8")
    return path.name


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _write_json(payload: Any, path: Path) -> str:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path.name


def _require_artifact(out_dir: Path, name: str, stage: PipelineStage) -> Path:
    path = out_dir / name
    if not path.is_file():
        raise MissingStageOutputError(str(path), f"centrality {stage}")
    return path


def _read_artifact(path: Path, text_columns: tuple[str, ...] = ()) -> pd.DataFrame:
    return pd.read_csv(path, dtype=dict.fromkeys(text_columns, str), keep_default_na=False, na_values=[""])


# stage artifact readers


def load_clusters(out_dir: Path) -> list[AmenityCluster]:
    """Clusters written by the cluster stage."""
    table = _read_artifact(_require_artifact(out_dir, CLUSTERS_CSV, PipelineStage.CLUSTER), ("center_shop_id",))
    members = _read_artifact(_require_artifact(out_dir, CLUSTER_MEMBERS_CSV, PipelineStage.CLUSTER), ("shop_id",))
    member_ids = members.groupby("cluster_id")["shop_id"].apply(frozenset)
    return [
        AmenityCluster(
            cluster_id=int(row.cluster_id),
            center=GeoPoint(lat=float(row.center_lat), lon=float(row.center_lon)),
            center_shop_id=str(row.center_shop_id),
            member_ids=member_ids.get(int(row.cluster_id), frozenset()),
            radius_m=float(row.radius_m),
            effective_density=float(row.effective_density),
        )
        for row in table.itertuples(index=False)
    ]


def load_scores(out_dir: Path) -> ComplexityScores:
    """Complexity scores written by the complexity stage."""
    eci = _read_artifact(_require_artifact(out_dir, ECI_CSV, PipelineStage.COMPLEXITY))
    pci = _read_artifact(_require_artifact(out_dir, PCI_CSV, PipelineStage.COMPLEXITY), ("product_code",))
    summary = json.loads(_require_artifact(out_dir, COMPLEXITY_SUMMARY, PipelineStage.COMPLEXITY).read_text())
    return ComplexityScores(
        clusters=eci["cluster_id"].astype(int).tolist(),
        products=pci["product_code"].tolist(),
        eci_raw=eci["eci_raw"].to_numpy(np.float64),
        eci=eci["eci"].to_numpy(np.float64),
        pci_raw=pci["pci_raw"].to_numpy(np.float64),
        pci=pci["pci"].to_numpy(np.float64),
        diversity=eci["diversity"].to_numpy(np.int64),
        ubiquity=pci["ubiquity"].to_numpy(np.int64),
        method=ComplexityMethod(summary["method"]),
        iterations=int(summary["iterations"]),
    )


def load_incidence(out_dir: Path) -> IncidenceMatrix:
    """Incidence written by the complexity stage, rows and columns in score order."""
    scores = load_scores(out_dir)
    cells = _read_artifact(_require_artifact(out_dir, INCIDENCE_CSV, PipelineStage.COMPLEXITY), ("product_code",))
    row = {cid: i for i, cid in enumerate(scores.clusters)}
    col = {code: j for j, code in enumerate(scores.products)}
    rca = np.zeros((len(row), len(col)))
    m = np.zeros((len(row), len(col)), dtype=np.int64)
    i = cells["cluster_id"].astype(int).map(row).to_numpy()
    j = cells["product_code"].astype(str).map(col).to_numpy()
    rca[i, j] = cells["rca"].to_numpy(np.float64)
    m[i, j] = cells["m"].to_numpy(np.int64)
    return IncidenceMatrix(clusters=scores.clusters, products=scores.products, rca=rca, m=m)


def load_market_records(out_dir: Path) -> list[MarketDistanceRecord]:
    table = _read_artifact(_require_artifact(out_dir, MARKET_DISTANCES_CSV, PipelineStage.MARKET), ("product_code",))
    return [
        MarketDistanceRecord(
            product_code=str(r.product_code),
            cluster_a=int(r.cluster_a),
            cluster_b=int(r.cluster_b),
            distance_km=float(r.distance_km),
        )
        for r in table.itertuples(index=False)
    ]


# stages


def run_synth(config: RunConfig) -> StageSummary:
    """Generate a synthetic city and every input dataset the other stages read."""
    out = _out_dir(config)
    synth = config.synth
    if synth.kind == "christaller":
        city = generate_christaller(synth.christaller.model_copy(update={"seed": config.seed}))
    else:
        city = generate_blobs(synth.blobs.model_copy(update={"seed": config.seed}))
    groups = generate_consumers(city, synth.groups_per_center, synth.range_profile, seed=config.seed)
    card = card_records(city, groups, seed=config.seed)
    area = generate_population(city, seed=config.seed)

    ingest.write_shops(out / "shops.csv", city.shops)
    ingest.write_card(out / "card.csv", card)
    ingest.write_population(out / "population.csv", area.population)
    ingest.write_land_prices(out / "land_price.csv", area.land_prices)
    ingest.write_labor_sectors(out / "labor_sectors.csv", area.labor)
    ground_truth = {
        "kind": synth.kind,
        "levels": city.levels,
        "k_factor": city.k_factor,
        "base_spacing_km": city.base_spacing_km,
        "anchor": city.anchor.model_dump(),
        "product_level": city.product_level,
        "centers": [
            {"center_id": c.center_id, "lat": c.location.lat, "lon": c.location.lon, "level": c.level, "ring": c.ring}
            for c in city.centers
        ],
        "shop_center": city.shop_center,
    }
    return StageSummary(
        stage=PipelineStage.SYNTH,
        artifacts=[
            "shops.csv",
            "card.csv",
            "population.csv",
            "land_price.csv",
            "labor_sectors.csv",
            _write_json(ground_truth, out / GROUND_TRUTH_JSON),
        ],
        metrics={"n_shops": len(city.shops), "n_centers": len(city.centers), "n_groups": len(card)},
    )


def run_cluster(config: RunConfig) -> StageSummary:
    """Detect amenity clusters in the shops file."""
    out = _out_dir(config)
    shops = ingest.read_shops(config.input_path("shops"), rejects_path=out / "shops_rejects.csv")
    assignment = detect_clusters(
        shops, config.decay, config.cluster, exact=config.exact_distances, threads=config.threads
    )
    clusters = assignment.clusters
    table = pd.DataFrame(
        [
            {
                "cluster_id": c.cluster_id,
                "center_lat": c.center.lat,
                "center_lon": c.center.lon,
                "center_shop_id": c.center_shop_id,
                "radius_m": c.radius_m,
                "n_shops": c.n_shops,
                "effective_density": c.effective_density,
            }
            for c in clusters
        ],
        columns=["cluster_id", "center_lat", "center_lon", "center_shop_id", "radius_m", "n_shops", "effective_density"],
    )
    members = pd.DataFrame(
        sorted((m, c.cluster_id) for c in clusters for m in c.member_ids), columns=["shop_id", "cluster_id"]
    )
    mean_radius = float(np.mean([c.radius_m for c in clusters])) if clusters else None
    summary = {
        "n_shops": len(shops),
        "n_clusters": len(clusters),
        "n_assigned": assignment.n_assigned,
        "n_unassigned": len(assignment.unassigned_ids),
        "mean_radius_m": mean_radius,
        "gamma": config.decay.gamma,
        "peak_radius_m": config.decay.peak_radius_m,
        "cutoff_m": config.cluster.cutoff_m,
        "min_cluster_size": config.cluster.min_cluster_size,
        "exact_distances": config.exact_distances,
    }
    log.info("cluster stage finished", n_clusters=len(clusters), mean_radius_m=mean_radius)
    return StageSummary(
        stage=PipelineStage.CLUSTER,
        artifacts=[
            _write_csv(table, out / CLUSTERS_CSV),
            _write_csv(members, out / CLUSTER_MEMBERS_CSV),
            _write_csv(pd.DataFrame({"shop_id": assignment.unassigned_ids}), out / UNASSIGNED_CSV),
            _write_json(summary, out / CLUSTER_SUMMARY),
        ],
        metrics={k: summary[k] for k in ("n_clusters", "n_unassigned", "mean_radius_m")},
    )


def run_complexity(config: RunConfig) -> StageSummary:
    """Build the incidence of clusters and products and compute ECI and PCI."""
    out = _out_dir(config)
    clusters = load_clusters(out)
    shops = ingest.read_shops(config.input_path("shops"))
    counts = build_counts(shops, clusters)
    incidence = prune_incidence(compute_rca(counts))
    params = config.complexity
    scores = compute_complexity(incidence, params.method, params.max_iter, params.tol)

    other = ComplexityMethod.EIGEN if scores.method is ComplexityMethod.REFLECTIONS else ComplexityMethod.REFLECTIONS
    try:
        alternative = compute_complexity(incidence, other, params.max_iter, params.tol)
        agreement = spearman(scores.eci, alternative.eci)
    except ComputationError as e:
        log.warning("alternative method failed; rank agreement not reported", method=str(other), error=str(e))
        agreement = None

    eci = pd.DataFrame(
        {
            "cluster_id": scores.clusters,
            "eci_raw": scores.eci_raw,
            "eci": scores.eci,
            "diversity": scores.diversity,
        }
    )
    pci = pd.DataFrame(
        {
            "product_code": scores.products,
            "pci_raw": scores.pci_raw,
            "pci": scores.pci,
            "ubiquity": scores.ubiquity,
            "uniqueness": uniqueness(incidence),
        }
    )
    count_of = pd.DataFrame(counts.counts, index=counts.clusters, columns=counts.products)
    count_of = count_of.loc[incidence.clusters, incidence.products].to_numpy()
    rows, cols = np.nonzero(count_of)
    cells = pd.DataFrame(
        {
            "cluster_id": np.asarray(incidence.clusters)[rows],
            "product_code": np.asarray(incidence.products, dtype=object)[cols],
            "count": count_of[rows, cols],
            "rca": incidence.rca[rows, cols],
            "m": incidence.m[rows, cols],
        }
    )
    summary = {
        "method": str(scores.method),
        "iterations": scores.iterations,
        "n_clusters": len(scores.clusters),
        "n_products": len(scores.products),
        "n_markets": int(incidence.m.sum()),
        "spearman_reflections_eigen": agreement,
    }
    return StageSummary(
        stage=PipelineStage.COMPLEXITY,
        artifacts=[
            _write_csv(eci, out / ECI_CSV),
            _write_csv(pci, out / PCI_CSV),
            _write_csv(cells, out / INCIDENCE_CSV),
            _write_json(summary, out / COMPLEXITY_SUMMARY),
        ],
        metrics={k: summary[k] for k in ("method", "n_clusters", "n_products", "spearman_reflections_eigen")},
    )


def run_market(config: RunConfig) -> StageSummary:
    """Nearest same-product market distances, mean spacings and consumer travel distances."""
    out = _out_dir(config)
    clusters = load_clusters(out)
    incidence = load_incidence(out)
    scores = load_scores(out)
    sets = market_sets(incidence)
    records = min_market_distances(sets, clusters, per_product=config.per_product)
    distances = pd.DataFrame(
        [r.model_dump() for r in records], columns=["product_code", "cluster_a", "cluster_b", "distance_km"]
    )
    spacing = mean_market_spacing(sets, clusters)
    pci_of = dict(zip(scores.products, scores.pci))
    spacing_table = pd.DataFrame(
        [
            {
                "product_code": s.product_code,
                "n_markets": len(s.market_cluster_ids),
                "mean_spacing_km": spacing[s.product_code],
                "pci": pci_of[s.product_code],
            }
            for s in sets
            if s.product_code in spacing
        ],
        columns=["product_code", "n_markets", "mean_spacing_km", "pci"],
    )
    artifacts = [_write_csv(distances, out / MARKET_DISTANCES_CSV), _write_csv(spacing_table, out / MARKET_SPACING_CSV)]

    card_path = config.input_path("card")
    if card_path.is_file():
        card = ingest.read_card(card_path, rejects_path=out / "card_rejects.csv")
        travel = pd.DataFrame(
            {
                "group": range(len(card)),
                "product_code": [r.product_code for r in card],
                "dist_km": travel_distances(card),
            }
        )
        artifacts.append(_write_csv(travel, out / TRAVEL_DISTANCES_CSV))
    else:
        log.info("no card file; travel distances skipped", path=str(card_path))

    return StageSummary(
        stage=PipelineStage.MARKET,
        artifacts=artifacts,
        metrics={
            "n_records": len(records),
            "n_single_market_products": len(single_market_products(sets)),
            "per_product": str(config.per_product),
        },
    )


def _area_inputs(config: RunConfig, clusters: list[AmenityCluster]) -> pd.DataFrame:
    population = ingest.aggregate_to_clusters(
        ingest.read_population(config.input_path("population")), clusters, config.cluster.slack_m
    )
    prices = ingest.aggregate_land_prices(
        ingest.read_land_prices(config.input_path("land_price")), clusters, config.cluster.slack_m
    )
    return ingest.cluster_covariates(clusters, population, prices)


def run_regress(config: RunConfig) -> StageSummary:
    """Fit the market-boundary and consumer-travel models."""
    out = _out_dir(config)
    clusters = load_clusters(out)
    scores = load_scores(out)
    records = load_market_records(out)
    shops = ingest.read_shops(config.input_path("shops"))
    card = ingest.read_card(config.input_path("card"), rejects_path=out / "card_rejects.csv")
    tables = ingest.build_regression_tables(
        clusters,
        scores,
        records,
        card,
        _area_inputs(config, clusters),
        ingest.product_industries(shops),
        ingest.WardIndex(shops),
    )

    market_fits = [
        ec.ols_fit(tables.market, ec.spec_market_boundary(tables.market, include_complexity=False)),
        ec.ols_fit(tables.market, ec.spec_market_boundary(tables.market, include_complexity=True)),
    ]
    consumer_fits = [
        ec.ols_fit(tables.consumer, ec.spec_consumer(tables.consumer, include_count=False)),
        ec.ols_fit(tables.consumer, ec.spec_consumer(tables.consumer, include_count=True)),
    ]
    report = "\n".join(
        [
            ec.format_regression_report(
                market_fits,
                shown_terms=[ec.PCI, ec.D_ECI, ec.D_DIVERSITY],
                title="Market boundary: nearest same-product market distance (km)",
            ),
            ec.format_regression_report(
                consumer_fits,
                shown_terms=[ec.PCI, ec.COUNT, ec.FEMALE],
                title="Consumer travel distance (km)",
                first_column=3,
            ),
        ]
    )
    (out / REGRESSION_REPORT).write_text(report, encoding="utf-8")

    coefficients = pd.concat(
        [
            pd.DataFrame(
                {
                    "model": f"({k + 1}) {fit.label}",
                    "term": fit.coefficients.index,
                    "coef": fit.coefficients.to_numpy(),
                    "std_error": fit.std_errors.to_numpy(),
                    "t_stat": fit.t_stats.to_numpy(),
                    "p_value": fit.p_values.to_numpy(),
                }
            )
            for k, fit in enumerate(market_fits + consumer_fits)
        ],
        ignore_index=True,
    )
    metrics: dict[str, float | int | str | None] = {
        "market_rows": len(tables.market),
        "consumer_rows": len(tables.consumer),
        **tables.dropped,
    }
    for k, fit in enumerate(market_fits + consumer_fits, start=1):
        metrics[f"pci_coef_{k}"] = float(fit.coefficients[ec.PCI])
        metrics[f"pci_p_{k}"] = float(fit.p_values[ec.PCI])
    return StageSummary(
        stage=PipelineStage.REGRESS,
        artifacts=[
            _write_csv(tables.market, out / MARKET_TABLE_CSV),
            _write_csv(tables.consumer, out / CONSUMER_TABLE_CSV),
            REGRESSION_REPORT,
            _write_csv(coefficients, out / REGRESSION_COEFFICIENTS_CSV),
        ],
        metrics=metrics,
    )


def _bins(config: RunConfig, incidence: IncidenceMatrix) -> int:
    limit = min(incidence.m.shape)
    if config.n_bins > limit:
        log.warning("fewer clusters or products than bins; using fewer bins", n_bins=config.n_bins, used=limit)
        return limit
    return config.n_bins


def run_correlate(config: RunConfig) -> StageSummary:
    """Area-characteristics correlations, ECI tiers, labor-share tiers and rank contingency matrices."""
    out = _out_dir(config)
    clusters = load_clusters(out)
    scores = load_scores(out)
    incidence = load_incidence(out)

    area = pd.DataFrame(
        {"eci": scores.eci, "diversity": scores.diversity.astype(np.float64)},
        index=pd.Index(scores.clusters, name="cluster_id"),
    )
    area["n_shops"] = pd.Series({c.cluster_id: float(c.n_shops) for c in clusters})
    area = area.join(_area_inputs(config, clusters))
    correlations = ec.correlation_matrix(
        area.rename(columns={v: k for k, v in AREA_CHARACTERISTICS.items()}), list(AREA_CHARACTERISTICS)
    )
    correlations.index.name = "variable"

    tiers = ec.eci_tiers(scores.eci, scores.clusters, config.n_tiers)
    tier_table = pd.DataFrame({"eci": area["eci"], "tier": tiers})
    for kind in ("floating", "residential"):
        tier_table[f"{kind}_tier"] = ec.value_tiers(area[kind].to_numpy(), area.index, config.n_tiers)
    artifacts = [
        _write_csv(correlations, out / CORRELATIONS_CSV, index=True),
        _write_csv(tier_table.reset_index(), out / ECI_TIERS_CSV),
    ]

    labor_path = config.input_path("labor_sectors")
    if labor_path.is_file():
        shares = ingest.aggregate_labor_sectors(ingest.read_labor_sectors(labor_path), clusters, config.cluster.slack_m)
        artifacts.append(_write_csv(ec.tier_point_biserial(shares, tiers), out / LABOR_SHARE_TIERS_CSV, index=True))
    else:
        log.info("no labor sector file; labor share tiers skipped", path=str(labor_path))

    n_bins = _bins(config, incidence)
    eci_pci = ec.rank_contingency(scores.eci, scores.pci, incidence, n_bins, "eci", "pci")
    div_uniq = ec.rank_contingency(
        scores.diversity, uniqueness(incidence), incidence, n_bins, "diversity", "uniqueness"
    )
    artifacts += [
        _write_csv(eci_pci.to_frame(), out / CONTINGENCY_ECI_PCI_CSV, index=True),
        _write_csv(div_uniq.to_frame(), out / CONTINGENCY_DIVERSITY_UNIQUENESS_CSV, index=True),
    ]
    return StageSummary(
        stage=PipelineStage.CORRELATE,
        artifacts=artifacts,
        metrics={
            "n_bins": n_bins,
            "monotonicity_eci_pci": ec.monotonicity_score(eci_pci),
            "monotonicity_diversity_uniqueness": ec.monotonicity_score(div_uniq),
        },
    )


def run_export_geojson(config: RunConfig) -> StageSummary:
    """One point feature per cluster, longitude first."""
    out = _out_dir(config)
    clusters = load_clusters(out)
    scores = load_scores(out)
    tiers_path = out / ECI_TIERS_CSV
    if tiers_path.is_file():
        tier_of = _read_artifact(tiers_path).set_index("cluster_id")["tier"].to_dict()
    else:
        tier_of = ec.eci_tiers(scores.eci, scores.clusters, config.n_tiers).to_dict()
    eci_of = dict(zip(scores.clusters, scores.eci))
    diversity_of = dict(zip(scores.clusters, scores.diversity))

    features = [
        {
            "type": "Feature",
            "geometry": mapping(Point(c.center.lon, c.center.lat)),
            "properties": {
                "cluster_id": c.cluster_id,
                "eci": eci_of.get(c.cluster_id),
                "diversity": diversity_of.get(c.cluster_id),
                "tier": tier_of.get(c.cluster_id),
                "n_shops": c.n_shops,
                "radius_m": c.radius_m,
            },
        }
        for c in sorted(clusters, key=lambda c: c.cluster_id)
    ]
    collection = {"type": "FeatureCollection", "features": features}
    return StageSummary(
        stage=PipelineStage.EXPORT_GEOJSON,
        artifacts=[_write_json(collection, out / CLUSTERS_GEOJSON)],
        metrics={"n_features": len(features)},
    )


STAGES: dict[PipelineStage, Callable[[RunConfig], StageSummary]] = {
    PipelineStage.SYNTH: run_synth,
    PipelineStage.CLUSTER: run_cluster,
    PipelineStage.COMPLEXITY: run_complexity,
    PipelineStage.MARKET: run_market,
    PipelineStage.REGRESS: run_regress,
    PipelineStage.CORRELATE: run_correlate,
    PipelineStage.EXPORT_GEOJSON: run_export_geojson,
}
