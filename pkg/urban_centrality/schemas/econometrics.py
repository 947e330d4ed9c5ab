"""
Schemas for regressions and rank statistics.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator


class DesignSpec(BaseModel):
    """
    A linear model: response, numeric regressors and dummy-encoded fixed effects.

    Each fixed-effect column is expanded into one dummy per level with the
    base level dropped.
    """

    response: str
    numeric_terms: list[str] = Field(default_factory=list)
    fe_terms: list[str] = Field(default_factory=list)
    intercept: bool = True
    label: str = ""

    @model_validator(mode="after")
    def _unique_terms(self) -> "DesignSpec":
        terms = self.numeric_terms + self.fe_terms
        duplicates = sorted({term for term in terms if terms.count(term) > 1})
        if duplicates:
            raise ValueError(f"duplicate terms: {duplicates}")
        if self.response in terms:
            raise ValueError(f"response {self.response!r} is also a regressor")
        return self

    @property
    def columns(self) -> list[str]:
        """Every table column the design reads."""
        return [self.response, *self.numeric_terms, *self.fe_terms]


@dataclass(frozen=True)
class RegressionResult:
    """Coefficients and fit statistics of an OLS fit, indexed by term name."""

    coefficients: pd.Series
    std_errors: pd.Series
    t_stats: pd.Series
    p_values: pd.Series
    r2: float
    adj_r2: float
    residual_std_error: float
    f_stat: float
    f_p_value: float
    n_obs: int
    df_resid: int
    fitted: np.ndarray = field(repr=False)
    response: str = ""
    label: str = ""
    fe_terms: list[str] = field(default_factory=list)
    dropped_fe: list[str] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        """Number of estimated coefficients."""
        return len(self.coefficients)


@dataclass(frozen=True)
class ContingencyMatrix:
    """
    Block densities of M between cluster rank bins (rows) and product rank
    bins (columns). Bin 0 holds the lowest scores.
    """

    n_bins: int
    density: np.ndarray
    row_label: str
    col_label: str
    row_bin_sizes: list[int]
    col_bin_sizes: list[int]

    def to_frame(self) -> pd.DataFrame:
        """Density as a labelled frame."""
        return pd.DataFrame(
            self.density,
            index=pd.Index(range(self.n_bins), name=f"{self.row_label}_bin"),
            columns=[f"{self.col_label}_bin_{b}" for b in range(self.n_bins)],
        )
