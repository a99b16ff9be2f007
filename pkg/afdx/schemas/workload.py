"""
afd-explorer - Workload Schemas
"""
from pydantic import BaseModel, ConfigDict, Field

from afdx.schemas.units import Seconds


class Workload(BaseModel):
    """Request shape and latency SLOs of one serving use case."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(..., min_length=1)
    prefix: int = Field(0, ge=0)
    isl: int = Field(..., ge=1)
    osl: int = Field(..., ge=1)
    slo_ttft: Seconds | None = Field(None, gt=0)
    slo_tpot: Seconds | None = Field(None, gt=0)
