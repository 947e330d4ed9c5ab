"""
Schemas shared by the stage functions, the CLI and the Temporal pipeline.
"""

from enum import StrEnum

from pydantic import BaseModel, Field

from urban_centrality.schemas.config import RunConfig


class PipelineStage(StrEnum):
    """Pipeline stages, named after their CLI subcommands."""

    SYNTH = "synth"
    CLUSTER = "cluster"
    COMPLEXITY = "complexity"
    MARKET = "market"
    REGRESS = "regress"
    CORRELATE = "correlate"
    EXPORT_GEOJSON = "export-geojson"


class StageSummary(BaseModel):
    """Artifacts written by one stage and its headline numbers."""

    stage: PipelineStage
    artifacts: list[str] = Field(default_factory=list)
    metrics: dict[str, float | int | str | None] = Field(default_factory=dict)


class PipelineInput(BaseModel):
    """Input of the pipeline workflow."""

    pipeline_id: str
    config: RunConfig = Field(default_factory=RunConfig)
    # generate a synthetic city into the output directory first
    synthesize: bool = False


class PipelineResult(BaseModel):
    """Output of the pipeline workflow."""

    pipeline_id: str
    summaries: list[StageSummary] = Field(default_factory=list)
