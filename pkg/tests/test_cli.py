import json
import shutil

import pandas as pd
import pytest
from conftest import run_pipeline

from urban_centrality.runners import cli

ARTIFACTS = [
    "shops.csv",
    "card.csv",
    "population.csv",
    "land_price.csv",
    "labor_sectors.csv",
    "ground_truth.json",
    "clusters.csv",
    "cluster_members.csv",
    "unassigned_shops.csv",
    "cluster_summary.json",
    "eci.csv",
    "pci.csv",
    "incidence.csv",
    "complexity_summary.json",
    "market_distances.csv",
    "market_spacing.csv",
    "travel_distances.csv",
    "market_table.csv",
    "consumer_table.csv",
    "regression_report.txt",
    "regression_coefficients.csv",
    "correlations.csv",
    "eci_tiers.csv",
    "labor_share_tiers.csv",
    "contingency_eci_pci.csv",
    "contingency_diversity_uniqueness.csv",
    "clusters.geojson",
]


def centrality(out_dir, *args: str) -> int:
    return cli.main(["--out-dir", str(out_dir), *args])


@pytest.mark.slow
def test_pipeline_writes_every_artifact(small_city_run):
    missing = [name for name in ARTIFACTS if not (small_city_run / name).is_file()]
    assert missing == []


@pytest.mark.slow
def test_complexity_summary(small_city_run):
    summary = json.loads((small_city_run / "complexity_summary.json").read_text())
    assert summary["method"] == "reflections"
    assert summary["iterations"] % 2 == 0
    assert summary["n_products"] == 9
    # clusters of one center level share an incidence row
    assert summary["spearman_reflections_eigen"] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
def test_normalized_scores_on_disk(small_city_run):
    eci = pd.read_csv(small_city_run / "eci.csv")
    assert eci["eci"].min() == 0.0
    assert eci["eci"].max() == 1.0


@pytest.mark.slow
def test_geojson_has_one_point_per_cluster(small_city_run):
    clusters = pd.read_csv(small_city_run / "clusters.csv").set_index("cluster_id")
    collection = json.loads((small_city_run / "clusters.geojson").read_text())
    assert collection["type"] == "FeatureCollection"
    assert len(collection["features"]) == len(clusters)
    for feature in collection["features"]:
        lon, lat = feature["geometry"]["coordinates"]
        center = clusters.loc[feature["properties"]["cluster_id"]]
        assert (lon, lat) == (center["center_lon"], center["center_lat"])
        assert feature["properties"]["tier"] in {"High", "Intermediate", "Low"}


@pytest.mark.slow
def test_contingency_bins_are_clamped_to_products(small_city_run):
    contingency = pd.read_csv(small_city_run / "contingency_eci_pci.csv", index_col=0)
    assert contingency.shape == (9, 9)


@pytest.mark.slow
def test_regression_report_lists_four_models(small_city_run):
    report = (small_city_run / "regression_report.txt").read_text()
    for column in ("(1)", "(2)", "(3)", "(4)"):
        assert column in report


@pytest.mark.slow
def test_per_product_keeps_one_row_per_product(small_city_run, tmp_path):
    out = tmp_path / "run"
    shutil.copytree(small_city_run, out)
    assert centrality(out, "market", "--per-product") == 0
    closest = pd.read_csv(out / "market_distances.csv", dtype={"product_code": str})
    every = pd.read_csv(small_city_run / "market_distances.csv", dtype={"product_code": str})
    assert len(closest) == closest["product_code"].nunique()
    assert len(closest) < len(every)


@pytest.mark.slow
def test_outputs_are_reproducible_across_thread_counts(small_city_run, small_city_config, tmp_path):
    run_pipeline(small_city_config, tmp_path, "--threads", "8")
    for name in ARTIFACTS:
        assert (tmp_path / name).read_bytes() == (small_city_run / name).read_bytes(), name


def test_help_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--help"])
    assert info.value.code == 0
    assert "export-geojson" in capsys.readouterr().out


def test_usage_errors_exit_with_input_code(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["--no-such-flag", "cluster"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 1


def test_missing_shops_file(tmp_path, capsys):
    assert centrality(tmp_path, "cluster") == 1
    assert "input file not found" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["--config", str(tmp_path / "absent.toml"), "cluster"]) == 1


def test_invalid_config_value(tmp_path):
    assert centrality(tmp_path, "--threads", "0", "cluster") == 1


def test_stage_before_its_inputs(tmp_path, small_city_config, capsys):
    config = ["--config", str(small_city_config)]
    assert centrality(tmp_path, *config, "synth") == 0
    assert centrality(tmp_path, *config, "cluster") == 0
    capsys.readouterr()
    assert centrality(tmp_path, *config, "regress") == 1
    assert "run `centrality complexity` first" in capsys.readouterr().err


def test_blob_city_has_three_clusters_and_degenerate_complexity(tmp_path, capsys):
    assert centrality(tmp_path, "synth", "--kind", "blobs") == 0
    assert centrality(tmp_path, "cluster") == 0
    assert json.loads((tmp_path / "cluster_summary.json").read_text())["n_clusters"] == 3
    capsys.readouterr()
    assert centrality(tmp_path, "complexity") == 2
    assert "degenerate incidence" in capsys.readouterr().err


def test_synth_prints_a_summary(tmp_path, capsys):
    assert centrality(tmp_path, "--seed", "3", "synth", "--levels", "2", "--groups-per-center", "2") == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["stage"] == "synth"
    assert summary["metrics"]["n_groups"] == 2 * summary["metrics"]["n_centers"]
    assert json.loads((tmp_path / "ground_truth.json").read_text())["levels"] == 2


@pytest.mark.slow
def test_eigen_method_reports_full_rank_agreement(small_city_run, tmp_path, capsys):
    out = tmp_path / "run"
    shutil.copytree(small_city_run, out)
    capsys.readouterr()
    assert centrality(out, "complexity", "--method", "eigen") == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["metrics"]["method"] == "eigen"
    assert summary["metrics"]["spearman_reflections_eigen"] == pytest.approx(1.0, abs=1e-12)
    eci = pd.read_csv(out / "eci.csv")
    reference = pd.read_csv(small_city_run / "eci.csv")
    assert eci["eci"].nunique() == reference["eci"].nunique()


def test_command_help_lists_global_flags(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["cluster", "--help"])
    assert info.value.code == 0
    usage = capsys.readouterr().out
    for flag in ("--out-dir", "--config", "--seed", "--threads", "--exact-distances", "--log-level"):
        assert flag in usage


def test_global_flags_after_the_command(tmp_path):
    assert cli.main(["synth", "--kind", "blobs", "--out-dir", str(tmp_path), "--seed", "3"]) == 0
    assert (tmp_path / "shops.csv").is_file()
    # a flag before the command survives the command's own flags
    assert cli.main(["--out-dir", str(tmp_path), "cluster", "--threads", "2"]) == 0
    assert json.loads((tmp_path / "cluster_summary.json").read_text())["n_clusters"] == 3
