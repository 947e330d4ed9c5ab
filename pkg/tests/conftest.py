import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from urban_centrality.geo import offset_point
from urban_centrality.runners import cli
from urban_centrality.schemas.geo import GeoPoint
from urban_centrality.schemas.shops import Shop

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))

ORIGIN = GeoPoint(lat=37.5, lon=127.0)

# a three-level k=3 city small enough for the whole pipeline in a few seconds
SMALL_CITY_TOML = """
seed = 7

[synth.christaller]
levels = 3
radius_km = 6.0
"""


def make_shop(
    shop_id: str,
    north_m: float = 0.0,
    east_m: float = 0.0,
    product: str = "P0",
    industry: str = "I0",
    ward: str | None = None,
) -> Shop:
    """A shop placed `north_m` and `east_m` metres from ORIGIN."""
    return Shop(
        id=shop_id,
        location=offset_point(ORIGIN, north_m, east_m),
        product_code=product,
        industry_code=industry,
        ward=ward,
    )


def nested_matrix(diversities, n_cols: int | None = None) -> np.ndarray:
    """Binary matrix whose row i holds ones in its first diversities[i] columns."""
    diversities = np.asarray(diversities)
    return (np.arange(n_cols or diversities.max())[None, :] < diversities[:, None]).astype(np.int64)


@pytest.fixture
def shop_factory():
    return make_shop


@pytest.fixture(scope="session")
def small_city_config(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("config") / "small.toml"
    path.write_text(SMALL_CITY_TOML, encoding="utf-8")
    return path


def run_pipeline(config: Path, out_dir: Path, *extra: str) -> None:
    """Run every CLI command on a freshly synthesized small city."""
    for command in (
        ["synth"],
        ["cluster"],
        ["complexity"],
        ["market"],
        ["regress"],
        ["correlate"],
        ["export-geojson"],
    ):
        code = cli.main(["--config", str(config), "--out-dir", str(out_dir), *extra, *command])
        assert code == 0, f"{command[0]} exited with {code}"


@pytest.fixture(scope="session")
def small_city_run(tmp_path_factory, small_city_config) -> Path:
    """Output directory of a full pipeline run on the small city."""
    out_dir = tmp_path_factory.mktemp("small_city")
    run_pipeline(small_city_config, out_dir)
    return out_dir
