"""
afd-explorer - Network Schemas
"""
from pydantic import BaseModel, ConfigDict, Field, model_validator

from afdx.schemas.cluster import ClusterSpec, Duplex, Tier


class Topology(BaseModel):
    """Per-GPU tier capacities of a cluster; node n owns GPUs [n*S, (n+1)*S)."""
    model_config = ConfigDict(frozen=True)

    gpus: int
    domain_size: int
    scaleup_bw: float
    scaleout_bw: float | None
    scaleup_duplex: Duplex = Duplex.FULL
    scaleout_duplex: Duplex = Duplex.FULL
    latency_floor: float = 2e-6

    @classmethod
    def from_cluster(cls, cluster: ClusterSpec) -> "Topology":
        return cls(
            gpus=cluster.num_gpus,
            domain_size=cluster.scaleup_domain_size,
            scaleup_bw=cluster.scaleup_bw,
            scaleout_bw=cluster.scaleout_bw,
            scaleup_duplex=cluster.scaleup_duplex,
            scaleout_duplex=cluster.scaleout_duplex,
            latency_floor=cluster.link_latency,
        )

    def node_of(self, gpu: int) -> int:
        return gpu // self.domain_size

    def tier_between(self, src: int, dst: int) -> Tier:
        return Tier.SCALEUP if self.node_of(src) == self.node_of(dst) else Tier.SCALEOUT

    def capacity(self, tier: Tier) -> float | None:
        return self.scaleup_bw if tier == Tier.SCALEUP else self.scaleout_bw

    def duplex(self, tier: Tier) -> Duplex:
        return self.scaleup_duplex if tier == Tier.SCALEUP else self.scaleout_duplex

    def scaled(self, factor: float) -> "Topology":
        """Same topology with every capacity multiplied by `factor`."""
        return self.model_copy(update={
            "scaleup_bw": self.scaleup_bw * factor,
            "scaleout_bw": None if self.scaleout_bw is None else self.scaleout_bw * factor,
        })


class Flow(BaseModel):
    """Point-to-point transfer between two GPUs."""
    model_config = ConfigDict(frozen=True)

    flow_id: int = 0
    src: int = Field(..., ge=0)
    dst: int = Field(..., ge=0)
    bytes: float = Field(..., ge=0)

    @model_validator(mode="after")
    def distinct_endpoints(self):
        if self.src == self.dst:
            raise ValueError(f"flow {self.flow_id} has identical endpoints {self.src}")
        return self


class FlowTrace(BaseModel):
    """Completion record of one flow."""
    model_config = ConfigDict(frozen=True)

    flow_id: int
    src: int
    dst: int
    bytes: float
    start: float
    finish: float
    bottleneck: str


class SimResult(BaseModel):
    """Outcome of one flow-level simulation."""
    model_config = ConfigDict(frozen=True)

    per_flow_time: tuple[float, ...]
    makespan: float
    traces: tuple[FlowTrace, ...] = ()
