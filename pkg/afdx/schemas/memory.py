"""
afd-explorer - Memory Schemas
"""
import enum

from pydantic import BaseModel, ConfigDict, Field

from afdx.schemas.pipeline import Phase
from afdx.schemas.units import ByteSize


class MemoryRole(str, enum.Enum):
    SHARED = "shared"
    ATTN_SIDE = "attn_side"
    FFN_SIDE = "ffn_side"


class MemoryKnobs(BaseModel):
    """Tunable parts of the footprint model."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    runtime_overhead: ByteSize = Field(6 * 2**30, ge=0)
    buffer_factor: float = Field(2.0, ge=0)
    activation_factor: float = Field(2.0, ge=0)
    worst_case_decode: bool = False


class MemoryFootprint(BaseModel):
    """Per-GPU bytes of one role: weights, activations, KV, comm buffers, overhead."""
    model_config = ConfigDict(frozen=True)

    role: MemoryRole
    phase: Phase = Phase.DECODE
    weights: float = Field(..., ge=0)
    activations: float = Field(..., ge=0)
    kv_cache: float = Field(..., ge=0)
    comm_buffers: float = Field(..., ge=0)
    runtime_overhead: float = Field(..., ge=0)

    @property
    def total(self) -> float:
        return self.weights + self.activations + self.kv_cache + self.comm_buffers + self.runtime_overhead


class MemoryVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    fits: bool
    headroom: float
    peak: float
    binding_role: MemoryRole
