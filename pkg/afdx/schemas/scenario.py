"""
afd-explorer - Scenario Schemas

A scenario bundles one model, one workload, one cluster and the search grid,
plus optional engine tuning.
"""
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from afdx.schemas.cluster import ClusterSpec
from afdx.schemas.costs import CalibrationTable, EfficiencyKnobs
from afdx.schemas.memory import MemoryKnobs
from afdx.schemas.model import ModelArch
from afdx.schemas.placement import PlacementPolicy
from afdx.schemas.search import SearchSpace
from afdx.schemas.traffic import TrafficKnobs
from afdx.schemas.workload import Workload


class EngineOptions(BaseModel):
    """Evaluation knobs that are not part of the hardware or the model."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    efficiency: EfficiencyKnobs = EfficiencyKnobs()
    traffic: TrafficKnobs = TrafficKnobs()
    memory: MemoryKnobs = MemoryKnobs()
    placement: PlacementPolicy = PlacementPolicy.AUTO
    prefix_hit_rate: float = Field(1.0, ge=0, le=1)
    count_input_tokens: bool = False
    reference_batch: int = Field(32, ge=1)
    kv_sharded: bool = False


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelArch
    workload: Workload
    cluster: ClusterSpec
    search: SearchSpace = SearchSpace()
    engine: EngineOptions = EngineOptions()


class Diagnostic(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: str
    message: str


class Verdict(BaseModel):
    """Result of scenario validation; empty diagnostics means ok."""
    model_config = ConfigDict(frozen=True)

    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def messages(self) -> list[str]:
        return [d.message for d in self.diagnostics]


class EvalContext(BaseModel):
    """Everything `evaluate` needs besides the deployment itself."""
    model_config = ConfigDict(frozen=True)

    model: ModelArch
    workload: Workload
    cluster: ClusterSpec
    engine: EngineOptions = EngineOptions()
    table: Optional[CalibrationTable] = None

    @classmethod
    def from_scenario(cls, scenario: Scenario, table: CalibrationTable | None = None) -> "EvalContext":
        return cls(
            model=scenario.model,
            workload=scenario.workload,
            cluster=scenario.cluster,
            engine=scenario.engine,
            table=table,
        )

    @property
    def knobs(self) -> EfficiencyKnobs:
        return self.engine.efficiency
