"""
afd-explorer - Deployment Schemas
"""
import enum

from pydantic import BaseModel, ConfigDict, Field


class ServingMode(str, enum.Enum):
    """Serving paradigm of a replica."""
    AGG_CHUNKED = "agg_chunked"
    AGG_AFD = "agg_afd"
    DISAGG_PD = "disagg_pd"
    DISAGG_AFD = "disagg_afd"

    @property
    def is_afd(self) -> bool:
        return self in (ServingMode.AGG_AFD, ServingMode.DISAGG_AFD)

    @property
    def is_disagg(self) -> bool:
        return self in (ServingMode.DISAGG_PD, ServingMode.DISAGG_AFD)


class Transport(str, enum.Enum):
    """A2F payload policy: full payload to every FFN rank, or pre-filtered."""
    DENSE = "dense"
    SPARSE = "sparse"


class WorkerPlan(BaseModel):
    """
    Parallelism plan of one worker.

    Non-AFD workers run attention over tp x dp GPUs and experts over ep of
    the same GPUs. AFD workers run attention on attn_gpus (= tp x dp) and
    experts on ffn_gpus (= ep).
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    gpus: int = Field(..., ge=1)
    tp: int = Field(1, ge=1)
    dp: int = Field(1, ge=1)
    ep: int = Field(1, ge=1)
    attn_gpus: int = Field(0, ge=0)
    ffn_gpus: int = Field(0, ge=0)
    microbatches: int = Field(1, ge=1)
    transport: Transport = Transport.SPARSE

    @property
    def is_afd(self) -> bool:
        return self.attn_gpus > 0 or self.ffn_gpus > 0

    def label(self) -> str:
        if self.is_afd:
            return f"{self.attn_gpus}A+{self.ffn_gpus}F(tp{self.tp},M{self.microbatches})"
        return f"{self.gpus}G(tp{self.tp},dp{self.dp},ep{self.ep})"


class DeploymentConfig(BaseModel):
    """
    One deployment of the model on the cluster.

    Aggregated modes use `worker` for every replica. Disaggregated modes use
    `prefill_worker` x prefill_workers and `worker` x decode_workers.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: ServingMode
    replicas: int = Field(1, ge=1)
    worker: WorkerPlan
    prefill_worker: WorkerPlan | None = None
    prefill_workers: int = Field(0, ge=0)
    decode_workers: int = Field(0, ge=0)
    chunk_size: int = Field(2048, ge=1)

    @property
    def gpus_per_replica(self) -> int:
        if self.mode.is_disagg:
            prefill = self.prefill_worker.gpus if self.prefill_worker else 0
            return self.prefill_workers * prefill + self.decode_workers * self.worker.gpus
        return self.worker.gpus

    @property
    def total_gpus(self) -> int:
        return self.replicas * self.gpus_per_replica

    @property
    def decode_plan(self) -> WorkerPlan:
        return self.worker

    @property
    def prefill_plan(self) -> WorkerPlan:
        return self.prefill_worker if self.mode.is_disagg and self.prefill_worker else self.worker

    def layout_label(self) -> str:
        if self.mode.is_disagg and self.prefill_worker is not None:
            body = (
                f"{self.prefill_workers}P[{self.prefill_worker.label()}]"
                f"+{self.decode_workers}D[{self.worker.label()}]"
            )
        else:
            body = self.worker.label()
        return f"{self.replicas}x{body}"
