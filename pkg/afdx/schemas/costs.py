"""
afd-explorer - Operator Cost Schemas
"""
import enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from afdx.schemas.units import Seconds


class OpKind(str, enum.Enum):
    """Operators the cost model knows how to price."""
    ATTN_PREFILL = "attn_prefill"
    ATTN_DECODE = "attn_decode"
    MOE_FFN = "moe_ffn"
    DENSE_PROJ = "dense_proj"


class LayerKind(str, enum.Enum):
    """Which flavour of token mixer a layer runs."""
    FULL = "full"
    WINDOW = "window"
    MIXER = "mixer"


class CostSource(str, enum.Enum):
    """Where an operator time came from (and which lookup mode is active)."""
    ANALYTICAL = "analytical"
    TABLE = "table"
    HYBRID = "hybrid"


class EfficiencyKnobs(BaseModel):
    """Roofline efficiencies and the per-kernel launch overhead."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    eta_compute: float = Field(0.7, gt=0, le=1)
    eta_memory: float = Field(0.8, gt=0, le=1)
    kernel_overhead: Seconds = Field(5e-6, ge=0)
    source: CostSource = CostSource.ANALYTICAL
    allow_fallback: bool = False


class OpShape(BaseModel):
    """
    One operator invocation for one layer on one device group.

    `tokens` counts new tokens across all `batch` sequences; `context` is the
    KV length visible to each sequence.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    op: OpKind
    tokens: int = Field(..., ge=0)
    context: int = Field(0, ge=0)
    batch: int = Field(1, ge=1)
    parallel_degree: int = Field(1, ge=1)
    layer: LayerKind = LayerKind.FULL

    @model_validator(mode="after")
    def prefill_sees_its_tokens(self):
        if self.op == OpKind.ATTN_PREFILL and self.context * self.batch < self.tokens:
            raise ValueError("prefill context must cover the new tokens")
        return self

    @property
    def table_key(self) -> tuple:
        return (self.op.value, self.tokens, self.context, self.batch, self.parallel_degree)


class OpCost(BaseModel):
    """Per-device time, FLOPs and HBM traffic of one operator call."""
    model_config = ConfigDict(frozen=True)

    time: float
    flops: float
    hbm_bytes: float
    source: CostSource = CostSource.ANALYTICAL


class RuntimeBreakdown(BaseModel):
    """Attention/FFN time split and memory components at one context length."""
    model_config = ConfigDict(frozen=True)

    context: int
    attn_time_share: float
    ffn_time_share: float
    weight_bytes: float
    kv_bytes: float
    activation_bytes: float


class CalibrationTable(BaseModel):
    """Measured operator times keyed by (op, tokens, context, batch, parallel_degree)."""
    model_config = ConfigDict(frozen=True)

    entries: dict[tuple[str, int, int, int, int], float] = Field(default_factory=dict)

    def lookup(self, shape: OpShape) -> float | None:
        return self.entries.get(shape.table_key)

    def __len__(self) -> int:
        return len(self.entries)
