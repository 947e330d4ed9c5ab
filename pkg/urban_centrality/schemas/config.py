"""
Run configuration.

A TOML file supplies the base values and command-line flags override them.
"""

import tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from urban_centrality.errors import InputError
from urban_centrality.schemas.complexity import ComplexityMethod
from urban_centrality.schemas.shops import ClusterParams, DecayParams
from urban_centrality.schemas.synth import BlobConfig, ChristallerConfig, RangeProfile

# default file names inside the output directory
SHOPS_CSV = "shops.csv"
CARD_CSV = "card.csv"
POPULATION_CSV = "population.csv"
LAND_PRICE_CSV = "land_price.csv"
LABOR_SECTORS_CSV = "labor_sectors.csv"


class ComplexityParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: ComplexityMethod = ComplexityMethod.REFLECTIONS
    max_iter: int = Field(default=1000, ge=2)
    tol: float = Field(default=1e-6, gt=0)


class InputPaths(BaseModel):
    """Input files; unset entries default to the synthetic outputs in the output directory."""

    model_config = ConfigDict(extra="forbid")

    shops: Path | None = None
    card: Path | None = None
    population: Path | None = None
    land_price: Path | None = None
    labor_sectors: Path | None = None


class SynthParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["christaller", "blobs"] = "christaller"
    christaller: ChristallerConfig = Field(default_factory=ChristallerConfig)
    blobs: BlobConfig = Field(default_factory=BlobConfig)
    groups_per_center: int = Field(default=20, ge=1)
    range_profile: RangeProfile = Field(default_factory=RangeProfile)


class RunConfig(BaseModel):
    """Everything one invocation of a stage needs."""

    model_config = ConfigDict(extra="forbid")

    out_dir: Path = Path("out")
    seed: int = Field(default=0, ge=0, lt=2**64)
    threads: int = Field(default=1, ge=1)
    exact_distances: bool = False
    per_product: bool = False
    n_bins: int = Field(default=10, ge=2)
    n_tiers: int = Field(default=3, ge=2)
    decay: DecayParams = Field(default_factory=DecayParams)
    cluster: ClusterParams = Field(default_factory=ClusterParams)
    complexity: ComplexityParams = Field(default_factory=ComplexityParams)
    inputs: InputPaths = Field(default_factory=InputPaths)
    synth: SynthParams = Field(default_factory=SynthParams)

    def input_path(self, name: str) -> Path:
        """Configured input path, or its default file in the output directory."""
        defaults = {
            "shops": SHOPS_CSV,
            "card": CARD_CSV,
            "population": POPULATION_CSV,
            "land_price": LAND_PRICE_CSV,
            "labor_sectors": LABOR_SECTORS_CSV,
        }
        configured = getattr(self.inputs, name)
        return configured if configured is not None else self.out_dir / defaults[name]

    @classmethod
    def load(cls, path: Path | None = None, overrides: dict[str, Any] | None = None) -> "RunConfig":
        """Read `path` (TOML) if given, then apply nested `overrides`."""
        data: dict[str, Any] = {}
        if path is not None:
            try:
                data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
            except FileNotFoundError as e:
                raise InputError(f"config file not found: {path}") from e
            except tomllib.TOMLDecodeError as e:
                raise InputError(f"invalid config file {path}: {e}") from e
        data = _merge(data, overrides or {})
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise InputError(f"invalid configuration: {e}") from e


def _merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged
