"""
Schemas for shops and detected amenity clusters.
"""

from pydantic import BaseModel, ConfigDict, Field

from urban_centrality.schemas.geo import GeoPoint


class Shop(BaseModel):
    """A geo-located small business."""

    model_config = ConfigDict(frozen=True)

    id: str = Field(min_length=1)
    location: GeoPoint
    product_code: str = Field(min_length=1)
    industry_code: str = Field(min_length=1)
    ward: str | None = None


class DecayParams(BaseModel):
    """
    Parameters of the effective shop count.

    `gamma` is a per-kilometre decay rate: a shop 1/gamma km away counts 1/e.
    """

    gamma: float = Field(default=7.58, gt=0)
    peak_radius_m: float = Field(default=300.0, gt=0)
    min_peak_density: float = Field(default=0.0, ge=0)


class ClusterParams(BaseModel):
    """Parameters of cluster growth around detected peaks."""

    cutoff_m: float = Field(default=1000.0, gt=0)
    min_cluster_size: int = Field(default=5, ge=1)
    slack_m: float = Field(default=100.0, ge=0)


class AmenityCluster(BaseModel):
    """A detected spatial unit: a density peak and the shops allocated to it."""

    model_config = ConfigDict(frozen=True)

    cluster_id: int = Field(ge=0)
    center: GeoPoint
    center_shop_id: str
    member_ids: frozenset[str] = Field(min_length=1)
    radius_m: float = Field(ge=0)
    effective_density: float

    @property
    def n_shops(self) -> int:
        """Number of member shops."""
        return len(self.member_ids)


class ClusterAssignment(BaseModel):
    """Result of cluster growth: clusters plus the shops left unassigned."""

    clusters: list[AmenityCluster]
    unassigned_ids: list[str] = Field(default_factory=list)

    @property
    def n_assigned(self) -> int:
        """Number of shops that belong to some cluster."""
        return sum(cluster.n_shops for cluster in self.clusters)
