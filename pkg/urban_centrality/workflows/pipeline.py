"""
Centrality pipeline workflow.
"""

from datetime import timedelta

from temporalio import workflow
from temporalio.common import RetryPolicy

# Import activity, passing it through the sandbox without reloading the module
with workflow.unsafe.imports_passed_through():
    from urban_centrality.activities.pipeline import STAGE_ACTIVITIES
    from urban_centrality.schemas.pipeline import (
        PipelineInput,
        PipelineResult,
        PipelineStage,
        StageSummary,
    )

ANALYSIS_STAGES = [
    PipelineStage.CLUSTER,
    PipelineStage.COMPLEXITY,
    PipelineStage.MARKET,
    PipelineStage.REGRESS,
    PipelineStage.CORRELATE,
    PipelineStage.EXPORT_GEOJSON,
]


@workflow.defn
class CentralityPipelineWorkflow:
    """
    Runs the stages in order against one output directory.
    """

    @workflow.init
    def __init__(self, arg: PipelineInput) -> None:
        self.current_stage: PipelineStage | None = None

    @workflow.run
    async def run(self, arg: PipelineInput) -> PipelineResult:
        workflow.logger.info("Starting pipeline. pipeline_id=%s. out_dir=%s", arg.pipeline_id, arg.config.out_dir)
        stages = ([PipelineStage.SYNTH] if arg.synthesize else []) + ANALYSIS_STAGES
        summaries: list[StageSummary] = []
        for stage in stages:
            self.current_stage = stage
            summary: StageSummary = await workflow.execute_activity(
                STAGE_ACTIVITIES[stage],
                arg.config,
                start_to_close_timeout=timedelta(minutes=30),
                retry_policy=RetryPolicy(maximum_interval=timedelta(seconds=30), maximum_attempts=3),
            )
            summaries.append(summary)
            workflow.logger.info("Stage done. pipeline_id=%s. stage=%s", arg.pipeline_id, stage)
        self.current_stage = None
        return PipelineResult(pipeline_id=arg.pipeline_id, summaries=summaries)

    @workflow.query(name="current_stage")
    def query_current_stage(self) -> PipelineStage | None:
        """
        Returns the stage that is running, or None before the first and after the last.
        """
        return self.current_stage
