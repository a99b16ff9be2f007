from pathlib import Path

import pytest

from afdx.schemas.cluster import ClusterSpec
from afdx.schemas.model import ModelArch
from afdx.schemas.scenario import EvalContext, Scenario
from afdx.services import scenario as scenarios
from tests.factories import toy_cluster, toy_context, toy_model, toy_scenario


@pytest.fixture
def ctx() -> EvalContext:
    return toy_context()


@pytest.fixture
def model() -> ModelArch:
    return toy_model()


@pytest.fixture
def cluster() -> ClusterSpec:
    return toy_cluster()


@pytest.fixture
def scenario_file(tmp_path):
    """Write a scenario (or raw YAML text) to disk and return its path."""

    def write(scenario: Scenario | None = None, name: str = "scenario.yaml", text: str | None = None) -> Path:
        path = tmp_path / name
        body = text if text is not None else scenarios.emit_scenario(scenario or toy_scenario())
        path.write_text(body, encoding="utf-8")
        return path

    return write
