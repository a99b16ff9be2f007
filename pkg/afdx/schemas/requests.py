"""
afd-explorer - HTTP Request/Response Schemas
"""
from typing import Any, List, Optional

from pydantic import BaseModel, Field

from afdx.schemas.costs import RuntimeBreakdown
from afdx.schemas.deployment import DeploymentConfig
from afdx.schemas.estimate import PerfEstimate
from afdx.schemas.scenario import Diagnostic


class ScenarioRequest(BaseModel):
    """A scenario given inline as a mapping or as YAML text."""
    scenario: dict[str, Any] | str


class VerdictResponse(BaseModel):
    ok: bool
    diagnostics: List[Diagnostic] = []


class EvaluateRequest(ScenarioRequest):
    config: DeploymentConfig
    concurrency: Optional[int] = Field(None, ge=1)


class SearchRequest(ScenarioRequest):
    top: int = Field(20, ge=1)


class SearchResponse(BaseModel):
    enumerated: int
    feasible: int
    truncated: bool
    reasons: dict[str, int]
    frontier: List[PerfEstimate]


class BreakdownRequest(ScenarioRequest):
    contexts: Optional[List[int]] = None


class BreakdownResponse(BaseModel):
    model: str
    rows: List[RuntimeBreakdown]


class PlacementStudyRequest(ScenarioRequest):
    kv_sizes: Optional[List[float]] = None
    sharded: Optional[bool] = None


class KvLatencyRow(BaseModel):
    kv_bytes: float
    worker: str
    segregated_s: float
    paired_s: float
    ratio: float
