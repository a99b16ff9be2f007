"""
afd-explorer - API Dependencies

Common dependencies used across API endpoints.
"""
from typing import Annotated, Any

from fastapi import Depends, Response
from pydantic import BaseModel

from afdx.config import Settings, get_settings
from afdx.exceptions import ScenarioError
from afdx.schemas.scenario import Scenario
from afdx.services import scenario as scenarios

AppSettings = Annotated[Settings, Depends(get_settings)]


def scenario_from(payload: dict[str, Any] | str) -> Scenario:
    """
    Validated scenario from an inline mapping or YAML text.

    Raises:
        ScenarioError: the document is invalid
    """
    if isinstance(payload, str):
        return scenarios.parse_scenario(payload)
    scenario, verdict = scenarios.check_document(payload)
    if scenario is None:
        raise ScenarioError(verdict.diagnostics)
    return scenario


def json_response(body: BaseModel) -> Response:
    """Serialize with pydantic so infinite latencies of infeasible points become null."""
    return Response(content=body.model_dump_json(), media_type="application/json")
