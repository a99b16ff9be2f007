"""
afd-explorer - Model Architecture Schemas
"""
import enum
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field


class AttentionTag(str, enum.Enum):
    """Attention / token-mixer families."""
    MHA = "mha"
    GQA = "gqa"
    SLIDING_WINDOW_GQA = "sliding_window_gqa"
    MLA = "mla"
    SPARSE_TOPK = "sparse_topk"
    MAMBA_HYBRID = "mamba_hybrid"


class _Attention(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class MHA(_Attention):
    kind: Literal[AttentionTag.MHA] = AttentionTag.MHA


class GQA(_Attention):
    kind: Literal[AttentionTag.GQA] = AttentionTag.GQA


class SlidingWindowGQA(_Attention):
    """Windowed GQA; with full_every = n every n-th layer attends the full context."""
    kind: Literal[AttentionTag.SLIDING_WINDOW_GQA] = AttentionTag.SLIDING_WINDOW_GQA
    window: int = Field(..., gt=0)
    full_every: int = Field(0, ge=0)


class MLA(_Attention):
    kind: Literal[AttentionTag.MLA] = AttentionTag.MLA
    latent_dim: int = Field(..., gt=0)


class SparseTopK(_Attention):
    """Top-k token selection over an MLA or GQA base."""
    kind: Literal[AttentionTag.SPARSE_TOPK] = AttentionTag.SPARSE_TOPK
    selected: int = Field(..., gt=0)
    base: Literal["mla", "gqa"] = "mla"
    latent_dim: int | None = Field(None, gt=0)


class MambaHybrid(_Attention):
    """
    Recurrent mixer layers with a GQA layer every `gqa_every` layers.

    `state_dim` counts recurrent-state elements per layer per sequence;
    gqa_every = 0 means no GQA layers at all.
    """
    kind: Literal[AttentionTag.MAMBA_HYBRID] = AttentionTag.MAMBA_HYBRID
    state_dim: int = Field(..., gt=0)
    gqa_every: int = Field(0, ge=0)


AttentionKind = Annotated[
    Union[MHA, GQA, SlidingWindowGQA, MLA, SparseTopK, MambaHybrid],
    Field(discriminator="kind"),
]


class ModelArch(BaseModel):
    """Transformer / MoE architecture description."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(..., min_length=1)
    approximate: bool = False
    layers: int = Field(..., ge=1)
    hidden_dim: int = Field(..., gt=0)
    q_heads: int = Field(..., gt=0)
    kv_heads: int = Field(..., gt=0)
    head_dim: int = Field(..., gt=0)
    attention: AttentionKind
    num_experts: int = Field(..., gt=0)
    top_k: int = Field(..., gt=0)
    expert_ffn_dim: int = Field(..., gt=0)
    shared_expert_dim: int = Field(0, ge=0)
    param_bytes_per_elem: float = Field(..., gt=0)
    kv_bytes_per_elem: float = Field(..., gt=0)

    @property
    def is_mla(self) -> bool:
        att = self.attention
        return isinstance(att, MLA) or (isinstance(att, SparseTopK) and att.base == "mla")

    @property
    def latent_dim(self) -> int:
        return getattr(self.attention, "latent_dim", None) or 0

    @property
    def uses_grouped_heads(self) -> bool:
        """Variants whose attention layers are GQA-shaped."""
        att = self.attention
        if isinstance(att, (GQA, SlidingWindowGQA, MambaHybrid)):
            return True
        return isinstance(att, SparseTopK) and att.base == "gqa"

    @property
    def act_bytes(self) -> float:
        """Hidden states travel at model precision."""
        return self.param_bytes_per_elem
