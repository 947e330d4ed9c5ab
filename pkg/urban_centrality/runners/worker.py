"""
Worker runner.
"""

import asyncio
from concurrent.futures import ThreadPoolExecutor

import structlog
from temporalio.worker import Worker

from common.python.client import connect
from common.python.constants import PIPELINE_TASK_QUEUE
from common.python.log import configure_logging
from urban_centrality.activities.pipeline import STAGE_ACTIVITIES
from urban_centrality.workflows.pipeline import CentralityPipelineWorkflow

log = structlog.get_logger(__name__)


async def main():
    configure_logging(app_name="urban-centrality-worker")

    client = await connect()

    with ThreadPoolExecutor(max_workers=4) as executor:
        worker = Worker(
            client,
            task_queue=PIPELINE_TASK_QUEUE,
            workflows=[CentralityPipelineWorkflow],
            activities=list(STAGE_ACTIVITIES.values()),
            activity_executor=executor,
        )
        log.info("Worker started, ctrl+c to exit", task_queue=PIPELINE_TASK_QUEUE)
        await worker.run()


if __name__ == "__main__":
    asyncio.run(main())
