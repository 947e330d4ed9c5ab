import pytest
from temporalio.exceptions import ApplicationError
from temporalio.testing import ActivityEnvironment

from urban_centrality.activities.pipeline import (
    STAGE_ACTIVITIES,
    StageFailedError,
    run_cluster_stage,
    run_complexity_stage,
    run_synth_stage,
)
from urban_centrality.schemas.config import RunConfig
from urban_centrality.schemas.pipeline import PipelineStage


@pytest.fixture
def blob_config(tmp_path) -> RunConfig:
    return RunConfig.load(overrides={"out_dir": str(tmp_path), "synth": {"kind": "blobs"}})


def test_every_stage_has_an_activity():
    assert set(STAGE_ACTIVITIES) == set(PipelineStage)


def test_stages_return_summaries(blob_config):
    env = ActivityEnvironment()
    synth = env.run(run_synth_stage, blob_config)
    assert synth.stage is PipelineStage.SYNTH
    assert synth.metrics["n_shops"] == 300
    clusters = env.run(run_cluster_stage, blob_config)
    assert clusters.metrics["n_clusters"] == 3
    assert "clusters.csv" in clusters.artifacts


def test_missing_input_is_not_retried(blob_config):
    with pytest.raises(ApplicationError) as info:
        ActivityEnvironment().run(run_cluster_stage, blob_config)
    assert isinstance(info.value, StageFailedError)
    assert info.value.non_retryable
    assert info.value.type == "InputError"
    assert info.value.details == (1,)


def test_degenerate_complexity_is_not_retried(blob_config):
    env = ActivityEnvironment()
    env.run(run_synth_stage, blob_config)
    env.run(run_cluster_stage, blob_config)
    with pytest.raises(StageFailedError) as info:
        env.run(run_complexity_stage, blob_config)
    assert info.value.non_retryable
    assert info.value.type == "ComputationError"
    assert "degenerate incidence" in str(info.value)
