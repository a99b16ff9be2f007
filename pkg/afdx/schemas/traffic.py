"""
afd-explorer - Traffic Schemas
"""
import enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from afdx.schemas.deployment import Transport


class TrafficKind(str, enum.Enum):
    """MoE-Dispatch, MoE-Combine, or prefill-to-decode KV shipment."""
    A2F = "A2F"
    F2A = "F2A"
    KV = "KV"


class TrafficKnobs(BaseModel):
    """Widths of the routing metadata sent with each dispatched token."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    token_id_bytes: int = Field(4, ge=0)
    expert_id_bytes: int = Field(2, ge=0)
    expert_weight_bytes: int = Field(2, ge=0)

    def meta_bytes(self, top_k: int) -> int:
        return self.token_id_bytes + top_k * (self.expert_id_bytes + self.expert_weight_bytes)


class TrafficMatrix(BaseModel):
    """Bipartite sender x receiver payload matrix in bytes."""
    model_config = ConfigDict(frozen=True)

    kind: TrafficKind
    transport: Transport
    payload: tuple[tuple[float, ...], ...]

    @property
    def senders(self) -> int:
        return len(self.payload)

    @property
    def receivers(self) -> int:
        return len(self.payload[0]) if self.payload else 0

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.payload, dtype=float)

    def row_sums(self) -> np.ndarray:
        """Egress per sender."""
        return self.array.sum(axis=1)

    def column_sums(self) -> np.ndarray:
        """Ingress per receiver."""
        return self.array.sum(axis=0)


class KvFlow(BaseModel):
    """One request's KV cache shipped from a prefill to a decode worker."""
    model_config = ConfigDict(frozen=True)

    bytes: float = Field(..., ge=0)
    tokens: int = Field(..., ge=0)
