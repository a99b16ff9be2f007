"""
afd-explorer - Scenario Endpoints
"""
import yaml
from fastapi import APIRouter

from afdx.api.deps import AppSettings
from afdx.schemas.requests import ScenarioRequest, VerdictResponse
from afdx.schemas.scenario import Diagnostic
from afdx.services import scenario as scenarios

router = APIRouter()


@router.post("/validate", response_model=VerdictResponse)
def validate(request: ScenarioRequest):
    """
    Validate a scenario without evaluating it.

    Always answers 200; problems come back as diagnostics.
    """
    document = request.scenario
    if isinstance(document, str):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as e:
            return VerdictResponse(ok=False, diagnostics=[Diagnostic(path="<root>", message=f"invalid YAML: {e}")])
    _, verdict = scenarios.check_document(document)
    return VerdictResponse(ok=verdict.ok, diagnostics=list(verdict.diagnostics))


@router.get("/presets")
def presets(settings: AppSettings):
    """Bundled model, workload and cluster preset names."""
    return scenarios.list_presets(settings.scenario_dir)
