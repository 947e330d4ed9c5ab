"""
Schemas for the synthetic city generators.
"""

from enum import StrEnum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from urban_centrality.schemas.geo import GeoPoint
from urban_centrality.schemas.ingest import LaborSectorCell, LandPriceRecord, PopulationCell
from urban_centrality.schemas.shops import Shop

SEOUL_CITY_HALL = GeoPoint(lat=37.5665, lon=126.9780)


class CenterWeighting(StrEnum):
    """How many shops a center hosts per stocked product."""

    # shops_per_center_per_product * k**level: higher order places serve
    # proportionally larger market areas
    MARKET_AREA = "market_area"
    UNIFORM = "uniform"


class ChristallerConfig(BaseModel):
    """Hierarchical hexagonal city with nested market lattices."""

    levels: int = Field(default=4, ge=1, le=6)
    base_spacing_km: float = Field(default=1.0, gt=0)
    k_factor: Literal[3, 4, 7] = 3
    shops_per_center_per_product: int = Field(default=2, ge=1)
    products_per_level: int = Field(default=3, ge=1)
    jitter_m: float = Field(default=50.0, ge=0)
    radius_km: float = Field(default=12.0, gt=0)
    center_weighting: CenterWeighting = CenterWeighting.MARKET_AREA
    origin: GeoPoint = SEOUL_CITY_HALL
    seed: int = Field(default=0, ge=0, lt=2**64)

    def spacing_km(self, level: int) -> float:
        """Market spacing of a level-`level` product."""
        return self.base_spacing_km * self.k_factor ** (level / 2)


class BlobConfig(BaseModel):
    """Gaussian blobs of shops, one ground-truth cluster each."""

    n_blobs: int = Field(default=3, ge=1)
    shops_per_blob: int = Field(default=100, ge=1)
    sigma_m: float = Field(default=100.0, gt=0)
    spacing_km: float = Field(default=2.0, gt=0)
    products_per_blob: int = Field(default=3, ge=1)
    origin: GeoPoint = SEOUL_CITY_HALL
    seed: int = Field(default=0, ge=0, lt=2**64)


class RangeProfile(BaseModel):
    """Maximum consumer travel distance per product level: intercept + slope * level."""

    intercept_km: float = Field(default=1.0, gt=0)
    slope_km: float = Field(default=1.0, ge=0)

    def __call__(self, level: int) -> float:
        return self.intercept_km + self.slope_km * level


class SyntheticCenter(BaseModel):
    """A central place of the synthetic city."""

    model_config = ConfigDict(frozen=True)

    center_id: str
    location: GeoPoint
    level: int
    ring: int = Field(description="Lattice hop distance from the city origin")


class SyntheticCity(BaseModel):
    """Generated shops plus the hierarchy they were generated from."""

    shops: list[Shop]
    centers: list[SyntheticCenter]
    product_level: dict[str, int]
    shop_center: dict[str, str]
    anchor: GeoPoint = Field(description="South-west corner of the city bounding box")
    base_spacing_km: float
    k_factor: int
    levels: int


class SyntheticAreaData(BaseModel):
    """Population, land-price and labor cells laid over a synthetic city."""

    population: list[PopulationCell]
    land_prices: list[LandPriceRecord]
    labor: list[LaborSectorCell]
