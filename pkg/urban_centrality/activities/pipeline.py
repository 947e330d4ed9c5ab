"""
Temporal activities, one per pipeline stage.

Stages are CPU bound, so the activities are synchronous and run on the
worker's thread pool.
"""

from temporalio import activity
from temporalio.exceptions import ApplicationError

from urban_centrality import stages
from urban_centrality.errors import CentralityError
from urban_centrality.schemas.config import RunConfig
from urban_centrality.schemas.pipeline import PipelineStage, StageSummary


class StageFailedError(ApplicationError):
    """
    A stage failed on its inputs. Retrying cannot help, so it is non-retryable.
    """


def _run(stage: PipelineStage, config: RunConfig) -> StageSummary:
    activity.logger.info("Running stage. stage=%s. out_dir=%s", stage, config.out_dir)
    try:
        summary = stages.STAGES[stage](config)
    except CentralityError as e:
        activity.logger.error("Stage failed. stage=%s. error=%s", stage, e)
        raise StageFailedError(
            f"centrality {stage}: {e}",
            e.exit_code,
            non_retryable=True,
            type=type(e).__name__,
        ) from e
    activity.logger.info("Stage finished. stage=%s. artifacts=%s", stage, ", ".join(summary.artifacts))
    return summary


@activity.defn
def run_synth_stage(config: RunConfig) -> StageSummary:
    """Generate a synthetic city into the output directory."""
    return _run(PipelineStage.SYNTH, config)


@activity.defn
def run_cluster_stage(config: RunConfig) -> StageSummary:
    return _run(PipelineStage.CLUSTER, config)


@activity.defn
def run_complexity_stage(config: RunConfig) -> StageSummary:
    return _run(PipelineStage.COMPLEXITY, config)


@activity.defn
def run_market_stage(config: RunConfig) -> StageSummary:
    return _run(PipelineStage.MARKET, config)


@activity.defn
def run_regress_stage(config: RunConfig) -> StageSummary:
    return _run(PipelineStage.REGRESS, config)


@activity.defn
def run_correlate_stage(config: RunConfig) -> StageSummary:
    return _run(PipelineStage.CORRELATE, config)


@activity.defn
def run_export_stage(config: RunConfig) -> StageSummary:
    """Write clusters.geojson."""
    return _run(PipelineStage.EXPORT_GEOJSON, config)


STAGE_ACTIVITIES = {
    PipelineStage.SYNTH: run_synth_stage,
    PipelineStage.CLUSTER: run_cluster_stage,
    PipelineStage.COMPLEXITY: run_complexity_stage,
    PipelineStage.MARKET: run_market_stage,
    PipelineStage.REGRESS: run_regress_stage,
    PipelineStage.CORRELATE: run_correlate_stage,
    PipelineStage.EXPORT_GEOJSON: run_export_stage,
}
