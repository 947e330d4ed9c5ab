"""
Schemas for market boundaries and consumer travel.
"""

from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from urban_centrality.schemas.geo import GridCell


class Gender(StrEnum):
    """Gender of a consumer group."""

    F = "F"
    M = "M"


class MarketSet(BaseModel):
    """Clusters in which a product shows a comparative advantage (M_cp = 1)."""

    model_config = ConfigDict(frozen=True)

    product_code: str
    market_cluster_ids: frozenset[int] = Field(min_length=1)


class MarketDistanceRecord(BaseModel):
    """Distance from a market cluster to the nearest other market of the same product."""

    model_config = ConfigDict(frozen=True)

    product_code: str
    cluster_a: int
    cluster_b: int
    distance_km: float = Field(ge=0)

    @model_validator(mode="after")
    def _distinct_clusters(self) -> "MarketDistanceRecord":
        if self.cluster_a == self.cluster_b:
            raise ValueError("cluster_a and cluster_b must differ")
        return self


class ConsumerGroup(BaseModel):
    """
    Consumers aggregated by age decade, gender, home cell and purchase cell
    for one product.
    """

    model_config = ConfigDict(frozen=True)

    age_decade: int = Field(ge=0)
    gender: Gender
    home_cell: GridCell
    purchase_cell: GridCell
    product_code: str = Field(min_length=1)
    purchase_count: int = Field(ge=1)
