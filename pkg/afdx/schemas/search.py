"""
afd-explorer - Search Space Schemas
"""
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from afdx.schemas.deployment import ServingMode, Transport
from afdx.schemas.estimate import PerfEstimate


def _split_csv(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class SearchSpace(BaseModel):
    """Grid of deployments to enumerate, plus the sweep inputs of the studies."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    modes: tuple[ServingMode, ...] = tuple(ServingMode)
    replica_min: int = Field(2, ge=1)
    replica_max: int = Field(128, ge=1)
    tp_candidates: tuple[int, ...] = (1, 2, 4, 8)
    microbatches: tuple[int, ...] = (1, 3, 4)
    transports: tuple[Transport, ...] = (Transport.SPARSE,)
    worker_sizes: tuple[int, ...] = (1, 2, 4, 8)
    max_workers: int = Field(16, ge=1)
    concurrency_min: int = Field(1, ge=1)
    concurrency_max: int = Field(4096, ge=1)
    chunk_size: int = Field(2048, ge=1)
    rate_match: bool = True
    allow_uneven_experts: bool = False
    sweep_concurrency: bool = False
    breakdown_contexts: tuple[int, ...] = (1024, 4096, 16384, 65536, 262144)
    kv_sizes: tuple[float, ...] = (5e8, 1e9, 2e9, 3e9, 4e9)
    kv_study_attn: int = Field(2, ge=1)
    kv_study_ffn: int = Field(2, ge=1)
    kv_study_pairs: int = Field(2, ge=1)
    kv_study_baseline_ep: int = Field(4, ge=1)

    @field_validator("modes", "tp_candidates", "microbatches", "transports", "worker_sizes", "breakdown_contexts", "kv_sizes", mode="before")
    @classmethod
    def split_lists(cls, v):
        return _split_csv(v)

    @field_validator("microbatches")
    @classmethod
    def known_depths(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        bad = [m for m in v if m not in (1, 3, 4)]
        if bad:
            raise ValueError(f"microbatch depth must be 1, 3 or 4, got {bad}")
        return v

    @field_validator("tp_candidates", "worker_sizes")
    @classmethod
    def positive(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if any(x < 1 for x in v):
            raise ValueError("candidates must be positive")
        return tuple(sorted(set(v)))

    @model_validator(mode="after")
    def ordered_bounds(self):
        if self.replica_min > self.replica_max:
            raise ValueError("replica_min exceeds replica_max")
        if self.concurrency_min > self.concurrency_max:
            raise ValueError("concurrency_min exceeds concurrency_max")
        return self

    def replica_sizes(self, mode: ServingMode, num_gpus: int) -> range:
        low = max(self.replica_min, 2 if mode.is_afd else 1)
        return range(low, min(self.replica_max, num_gpus) + 1)


class SearchResult(BaseModel):
    """All evaluated points of a search and their Pareto frontier."""
    model_config = ConfigDict(frozen=True)

    points: tuple[PerfEstimate, ...] = ()
    frontier: tuple[PerfEstimate, ...] = ()
    enumerated: int = 0
    truncated: bool = False

    @property
    def feasible(self) -> list[PerfEstimate]:
        return [p for p in self.points if p.feasible]

    def reasons(self) -> dict[str, int]:
        """Histogram of infeasibility reasons."""
        counts: dict[str, int] = {}
        for p in self.points:
            if not p.feasible and p.reason is not None:
                counts[p.reason.value] = counts.get(p.reason.value, 0) + 1
        return dict(sorted(counts.items()))
