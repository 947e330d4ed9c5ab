"""
Matrix containers for the complexity computation.

These hold numpy arrays, so they are frozen dataclasses rather than
pydantic models.
"""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np


class ComplexityMethod(StrEnum):
    """Algorithm used to compute the complexity indices."""

    REFLECTIONS = "reflections"
    EIGEN = "eigen"


@dataclass(frozen=True)
class CountMatrix:
    """Shop counts per (cluster, product), rows and columns without zero totals."""

    clusters: list[int]
    products: list[str]
    counts: np.ndarray

    def __post_init__(self):
        if self.counts.shape != (len(self.clusters), len(self.products)):
            raise ValueError(
                f"counts shape {self.counts.shape} does not match labels "
                f"({len(self.clusters)}, {len(self.products)})"
            )
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class IncidenceMatrix:
    """Balassa RCA values and the binary specialization matrix M_cp."""

    clusters: list[int]
    products: list[str]
    rca: np.ndarray
    m: np.ndarray

    @property
    def diversity(self) -> np.ndarray:
        """Row sums of M."""
        return self.m.sum(axis=1).astype(np.int64)

    @property
    def ubiquity(self) -> np.ndarray:
        """Column sums of M."""
        return self.m.sum(axis=0).astype(np.int64)


@dataclass(frozen=True)
class ComplexityScores:
    """Paired cluster (ECI) and product (PCI) scores."""

    clusters: list[int]
    products: list[str]
    eci_raw: np.ndarray
    eci: np.ndarray
    pci_raw: np.ndarray
    pci: np.ndarray
    diversity: np.ndarray
    ubiquity: np.ndarray
    method: ComplexityMethod
    iterations: int
