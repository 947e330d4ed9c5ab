"""
Workflow runner.

    uv run poe pipeline_workflow [--config run.toml] [--synthesize]
"""

import argparse
import asyncio
import uuid
from pathlib import Path

from common.python.client import connect
from common.python.constants import PIPELINE_TASK_QUEUE, PIPELINE_WORKFLOW_ID_PREFIX
from common.python.log import configure_logging
from urban_centrality.schemas.config import RunConfig
from urban_centrality.schemas.pipeline import PipelineInput
from urban_centrality.workflows.pipeline import CentralityPipelineWorkflow


async def main():
    parser = argparse.ArgumentParser(description="Start one centrality pipeline run.")
    parser.add_argument("--config", type=Path)
    parser.add_argument("--synthesize", action="store_true", help="generate a synthetic city first")
    args = parser.parse_args()
    log = configure_logging(app_name="urban-centrality-starter")

    client = await connect()

    # The worker reads and writes the output directory, so it must see the same path
    config = RunConfig.load(args.config)
    config = config.model_copy(update={"out_dir": config.out_dir.resolve()})
    pipeline_id = f"{PIPELINE_WORKFLOW_ID_PREFIX}-{uuid.uuid4()}"
    log.info("Starting pipeline", pipeline_id=pipeline_id, out_dir=str(config.out_dir))
    result = await client.execute_workflow(
        CentralityPipelineWorkflow.run,
        PipelineInput(pipeline_id=pipeline_id, config=config, synthesize=args.synthesize),
        id=pipeline_id,
        task_queue=PIPELINE_TASK_QUEUE,
    )

    for summary in result.summaries:
        print(f"{summary.stage}: {', '.join(summary.artifacts)}")


if __name__ == "__main__":
    asyncio.run(main())
