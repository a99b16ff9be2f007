"""
afd-explorer - Placement Schemas
"""
import enum

from pydantic import BaseModel, ConfigDict, model_validator


class WorkerRole(str, enum.Enum):
    PREFILL = "prefill"
    DECODE = "decode"
    UNIFIED = "unified"


class PlacementPolicy(str, enum.Enum):
    SEGREGATED = "segregated"
    PAIRED = "paired"
    AUTO = "auto"


class PlacedWorker(BaseModel):
    """
    Physical GPUs of one worker.

    Non-AFD workers list all their GPUs in `attn_gpus` and leave `ffn_gpus`
    empty.
    """
    model_config = ConfigDict(frozen=True)

    name: str
    role: WorkerRole
    replica: int = 0
    attn_gpus: tuple[int, ...]
    ffn_gpus: tuple[int, ...] = ()
    node: int
    tier_degraded: bool = False

    @property
    def gpus(self) -> tuple[int, ...]:
        return self.attn_gpus + self.ffn_gpus

    @property
    def lead_gpu(self) -> int:
        return self.attn_gpus[0]


class WorkerLayout(BaseModel):
    model_config = ConfigDict(frozen=True)

    policy: PlacementPolicy
    workers: tuple[PlacedWorker, ...]

    @model_validator(mode="after")
    def disjoint_gpus(self):
        seen: set[int] = set()
        for worker in self.workers:
            overlap = seen.intersection(worker.gpus)
            if overlap:
                raise ValueError(f"{worker.name} reuses GPUs {sorted(overlap)}")
            seen.update(worker.gpus)
        return self

    @property
    def tier_degraded(self) -> bool:
        return any(w.tier_degraded for w in self.workers)

    def by_role(self, role: WorkerRole, replica: int | None = None) -> list[PlacedWorker]:
        return [
            w for w in self.workers
            if w.role == role and (replica is None or w.replica == replica)
        ]
