PIPELINE_TASK_QUEUE = "urban-centrality-task-queue"
PIPELINE_WORKFLOW_ID_PREFIX = "urban-centrality-pipeline"
