"""
Geographic value types.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class GeoPoint(BaseModel):
    """A WGS84 coordinate pair in degrees."""

    model_config = ConfigDict(frozen=True)

    lat: float = Field(ge=-90.0, le=90.0, allow_inf_nan=False)
    lon: float = Field(ge=-180.0, le=180.0, allow_inf_nan=False)


class GridCell(BaseModel):
    """
    A square statistics cell identified by its south-west corner.

    Residential and labor counts use 100 m cells, floating population and
    card transactions use 50 m cells.
    """

    model_config = ConfigDict(frozen=True)

    origin: GeoPoint
    size_m: Literal[50, 100]
