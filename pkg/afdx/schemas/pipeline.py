"""
afd-explorer - Pipeline Schemas
"""
import enum

from pydantic import BaseModel, ConfigDict, Field


class Phase(str, enum.Enum):
    PREFILL = "prefill"
    DECODE = "decode"


class StageCosts(BaseModel):
    """
    Per-microbatch cost of each AFD stage, summed over all layers.

    Half-duplex schedules fold both transfers into `a2f` and leave `f2a`
    at zero with `merged_comm` set. `transfers` counts the A2F/F2A phases
    that put flows on the network in each layer.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    attn: float = Field(..., ge=0)
    a2f: float = Field(..., ge=0)
    ffn: float = Field(..., ge=0)
    f2a: float = Field(..., ge=0)
    layers: int = Field(..., ge=1)
    microbatches: int = Field(..., ge=1)
    transfers: int = Field(0, ge=0)
    merged_comm: bool = False

    @property
    def stages(self) -> tuple[float, ...]:
        if self.merged_comm:
            return (self.attn, self.a2f + self.f2a, self.ffn)
        return (self.attn, self.a2f, self.ffn, self.f2a)

    def merged(self) -> "StageCosts":
        """Three-stage view used on half-duplex links."""
        if self.merged_comm:
            return self
        return self.model_copy(update={"a2f": self.a2f + self.f2a, "f2a": 0.0, "merged_comm": True})
