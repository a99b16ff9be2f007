"""
afd-explorer - Cluster Schemas
"""
import enum

from pydantic import BaseModel, ConfigDict, Field

from afdx.schemas.units import Bandwidth, ByteSize, FlopRate, Seconds


class Duplex(str, enum.Enum):
    """Link direction semantics."""
    FULL = "full"
    HALF = "half"


class Tier(str, enum.Enum):
    """Interconnect tier."""
    SCALEUP = "scaleup"
    SCALEOUT = "scaleout"


class GpuSpec(BaseModel):
    """Single accelerator type; capacities in bytes, rates per second."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(..., min_length=1)
    peak_flops: FlopRate = Field(..., gt=0)
    hbm_capacity: ByteSize = Field(..., gt=0)
    hbm_bandwidth: Bandwidth = Field(..., gt=0)


class ClusterSpec(BaseModel):
    """Homogeneous GPU cluster with a scale-up and an optional scale-out tier."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    gpu: GpuSpec
    num_gpus: int = Field(..., ge=1)
    scaleup_domain_size: int = Field(..., ge=1)
    scaleup_bw: Bandwidth = Field(..., gt=0)
    scaleout_bw: Bandwidth | None = Field(None, gt=0)
    scaleup_duplex: Duplex = Duplex.FULL
    scaleout_duplex: Duplex = Duplex.FULL
    link_latency: Seconds = Field(2e-6, ge=0)

    @property
    def num_nodes(self) -> int:
        return self.num_gpus // self.scaleup_domain_size

    def duplex_of(self, tier: Tier) -> Duplex:
        return self.scaleup_duplex if tier == Tier.SCALEUP else self.scaleout_duplex
