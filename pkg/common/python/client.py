"""
Temporal connection for the pipeline worker and starter.
"""

import os

import structlog
from pydantic import BaseModel
from temporalio.client import Client
from temporalio.contrib.pydantic import pydantic_data_converter

log = structlog.get_logger(__name__)


class TemporalSettings(BaseModel):
    """
    Where to connect, read from the environment:

        TEMPORAL_ADDRESS    default localhost:7233
        TEMPORAL_NAMESPACE  default "default"
        TEMPORAL_API_KEY    enables TLS (Temporal Cloud) when set
    """

    address: str = "localhost:7233"
    namespace: str = "default"
    api_key: str | None = None

    @classmethod
    def from_env(cls) -> "TemporalSettings":
        values = {
            field: os.environ[f"TEMPORAL_{field.upper()}"]
            for field in cls.model_fields
            if f"TEMPORAL_{field.upper()}" in os.environ
        }
        return cls(**values)


async def connect(settings: TemporalSettings | None = None) -> Client:
    """Connect with the pydantic data converter so pipeline schemas cross the wire."""
    settings = settings or TemporalSettings.from_env()
    cloud = settings.api_key is not None
    log.info("connecting to temporal", address=settings.address, namespace=settings.namespace, cloud=cloud)
    return await Client.connect(
        settings.address,
        namespace=settings.namespace,
        api_key=settings.api_key,
        tls=cloud,
        data_converter=pydantic_data_converter,
    )
