"""
afd-explorer - Evaluation Endpoints

Single-config evaluation, frontier search and the two side studies. The
handlers are synchronous; FastAPI runs them in its threadpool.
"""
from fastapi import APIRouter

from afdx.api.deps import AppSettings, json_response, scenario_from
from afdx.schemas.estimate import PerfEstimate
from afdx.schemas.requests import (
    BreakdownRequest,
    BreakdownResponse,
    EvaluateRequest,
    KvLatencyRow,
    PlacementStudyRequest,
    SearchRequest,
    SearchResponse,
)
from afdx.services import scenario as scenarios, studies
from afdx.services.engine import evaluate, evaluate_at
from afdx.services.search import run_search

router = APIRouter()


@router.post("/evaluate", response_model=PerfEstimate)
def evaluate_config(request: EvaluateRequest, settings: AppSettings):
    scenario = scenario_from(request.scenario)
    ctx = scenarios.eval_context(scenario, settings.calibration_table)
    if request.concurrency is not None:
        return json_response(evaluate_at(request.config, ctx, request.concurrency))
    return json_response(
        evaluate(request.config, ctx, scenario.search.concurrency_min, scenario.search.concurrency_max)
    )


@router.post("/search", response_model=SearchResponse)
def search(request: SearchRequest, settings: AppSettings):
    """
    Run the design-space search and return the frontier.

    The top N frontier points by system throughput are returned.
    """
    scenario = scenario_from(request.scenario)
    ctx = scenarios.eval_context(scenario, settings.calibration_table)
    result = run_search(scenario.search, ctx, settings.threads, settings.max_configs)
    frontier = sorted(result.frontier, key=lambda p: -p.system_rate)[: request.top]
    return json_response(SearchResponse(
        enumerated=result.enumerated,
        feasible=len(result.feasible),
        truncated=result.truncated,
        reasons=result.reasons(),
        frontier=sorted(frontier, key=lambda p: p.per_user_rate),
    ))


@router.post("/breakdown", response_model=BreakdownResponse)
def breakdown(request: BreakdownRequest, settings: AppSettings):
    scenario = scenario_from(request.scenario)
    ctx = scenarios.eval_context(scenario, settings.calibration_table)
    rows = studies.breakdown_rows(scenario, request.contexts, ctx.table)
    return BreakdownResponse(model=scenario.model.name, rows=rows)


@router.post("/placement-study", response_model=list[KvLatencyRow])
def placement_study(request: PlacementStudyRequest):
    scenario = scenario_from(request.scenario)
    frame = studies.placement_study(scenario, request.kv_sizes, request.sharded)
    return frame.to_dict(orient="records")
