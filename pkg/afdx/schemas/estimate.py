"""
afd-explorer - Performance Estimate Schemas
"""
import enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from afdx.schemas.deployment import DeploymentConfig
from afdx.schemas.memory import MemoryFootprint
from afdx.schemas.pipeline import StageCosts
from afdx.schemas.placement import WorkerLayout


class InfeasibleReason(str, enum.Enum):
    SLO_VIOLATED = "SLO-violated"
    MEMORY_EXCEEDED = "memory-exceeded"
    INVALID_LAYOUT = "invalid-layout"


class EstimateDetail(BaseModel):
    """Intermediate quantities behind an estimate, kept for reports."""
    model_config = ConfigDict(frozen=True)

    prefill_time: float = 0.0
    decode_time: float = 0.0
    kv_transfer_time: float = 0.0
    tp_collective_time: float = 0.0
    prefill_stages: Optional[StageCosts] = None
    decode_stages: Optional[StageCosts] = None
    footprints: tuple[MemoryFootprint, ...] = ()
    layout: Optional[WorkerLayout] = None
    prefill_workers_needed: int = 0
    afd_transfers_per_layer: int = 0
    afd_transfers_per_request: int = 0
    kv_flows_per_request: int = 0
    notes: tuple[str, ...] = ()


class PerfEstimate(BaseModel):
    """End-to-end performance of one deployment at its reported concurrency."""
    model_config = ConfigDict(frozen=True)

    config: DeploymentConfig
    feasible: bool
    reason: Optional[InfeasibleReason] = None
    ttft: float = Field(float("inf"), ge=0)
    tpot: float = Field(float("inf"), ge=0)
    concurrency: int = Field(0, ge=0)
    per_user_rate: float = Field(0.0, ge=0)
    system_rate: float = Field(0.0, ge=0)
    detail: EstimateDetail = EstimateDetail()

    @property
    def point(self) -> tuple[float, float]:
        return (self.per_user_rate, self.system_rate)
