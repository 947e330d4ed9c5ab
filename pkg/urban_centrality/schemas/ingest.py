"""
Schemas for the external datasets joined onto clusters.
"""

from dataclasses import dataclass, field
from enum import StrEnum

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from urban_centrality.schemas.geo import GridCell
from urban_centrality.schemas.market import ConsumerGroup


class PopulationKind(StrEnum):
    """Kind of population count."""

    RESIDENTIAL = "residential"
    LABOR = "labor"
    FLOATING = "floating"

    @property
    def cell_size_m(self) -> int:
        """Cell size in which this population is published."""
        return 50 if self is PopulationKind.FLOATING else 100


class PopulationCell(BaseModel):
    """A population count on a statistics cell."""

    model_config = ConfigDict(frozen=True)

    cell: GridCell
    kind: PopulationKind
    count: float = Field(ge=0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _cell_size_matches_kind(self) -> "PopulationCell":
        if self.cell.size_m != self.kind.cell_size_m:
            raise ValueError(
                f"{self.kind} population must use {self.kind.cell_size_m} m cells, got {self.cell.size_m} m"
            )
        return self


class CardRecord(ConsumerGroup):
    """Aggregated card transactions of a consumer group."""

    amount_krw: float = Field(ge=0, allow_inf_nan=False)
    n_stores: int = Field(ge=0)


class LandPriceRecord(BaseModel):
    """Land price keyed either by cluster or by cell."""

    model_config = ConfigDict(frozen=True)

    cluster_id: int | None = None
    cell: GridCell | None = None
    price: float = Field(gt=0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _exactly_one_key(self) -> "LandPriceRecord":
        if (self.cluster_id is None) == (self.cell is None):
            raise ValueError("a land price needs exactly one of cluster_id or cell")
        return self


class LaborSectorCell(BaseModel):
    """Workers of one industrial sector on a 100 m cell."""

    model_config = ConfigDict(frozen=True)

    sector: str = Field(min_length=1)
    cell: GridCell
    count: float = Field(ge=0, allow_inf_nan=False)


@dataclass(frozen=True)
class ClusterTotals:
    """Per-cluster sums by column plus what fell outside every cluster."""

    totals: pd.DataFrame
    outside: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class RegressionTables:
    """Observation tables of the market-boundary and consumer-travel models."""

    market: pd.DataFrame
    consumer: pd.DataFrame
    dropped: dict[str, int] = field(default_factory=dict)
