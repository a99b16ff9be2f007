"""
afd-explorer - Scenario Service

Loads YAML scenario documents, resolves preset references, validates them
and emits them back as plain-number YAML.
"""
import logging
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import ValidationError

from afdx.config import get_settings
from afdx.exceptions import ScenarioError
from afdx.schemas.cluster import ClusterSpec
from afdx.schemas.costs import CostSource
from afdx.schemas.model import MHA, ModelArch, SparseTopK
from afdx.schemas.scenario import Diagnostic, EvalContext, Scenario, Verdict
from afdx.schemas.search import SearchSpace
from afdx.schemas.workload import Workload
from afdx.services import costdb

logger = logging.getLogger(__name__)

PRESET_SECTIONS = {"model": "models", "workload": "workloads", "cluster": "clusters"}


def validate_scenario(
    model: ModelArch,
    workload: Workload,
    cluster: ClusterSpec,
    search: Optional[SearchSpace] = None,
) -> Verdict:
    """
    Cross-field checks that single-field constraints cannot express.

    Returns:
        Verdict listing one diagnostic per violated rule
    """
    found: list[Diagnostic] = []

    def flag(path: str, message: str) -> None:
        found.append(Diagnostic(path=path, message=message))

    if model.top_k > model.num_experts:
        flag("model.top_k", "top_k exceeds num_experts")
    if isinstance(model.attention, MHA) and model.kv_heads != model.q_heads:
        flag("model.kv_heads", "MHA requires kv_heads equal to q_heads")
    if model.uses_grouped_heads and model.q_heads % model.kv_heads:
        flag("model.kv_heads", "q_heads not divisible by kv_heads")
    if isinstance(model.attention, SparseTopK) and model.attention.base == "mla" and not model.latent_dim:
        flag("model.attention.latent_dim", "sparse attention over MLA needs latent_dim")

    if cluster.num_gpus % cluster.scaleup_domain_size:
        flag("cluster.num_gpus", "cluster not divisible into scale-up domains")
    elif cluster.num_nodes > 1 and cluster.scaleout_bw is None:
        flag("cluster.scaleout_bw", "multi-node cluster needs a scale-out tier")

    if search is not None and search.replica_min > cluster.num_gpus:
        flag("search.replica_min", "replica_min exceeds num_gpus")

    return Verdict(diagnostics=tuple(found))


def _diagnostics_from(exc: ValidationError, prefix: str = "") -> list[Diagnostic]:
    out = []
    for error in exc.errors():
        loc = ".".join(str(part) for part in error["loc"])
        path = f"{prefix}.{loc}" if prefix and loc else (prefix or loc or "<root>")
        out.append(Diagnostic(path=path, message=error["msg"]))
    return out


def resolve_presets(document: dict, scenario_dir: Optional[Path] = None) -> tuple[dict, list[Diagnostic]]:
    """Replace string-valued model/workload/cluster sections with their preset files."""
    root = Path(scenario_dir or get_settings().scenario_dir)
    resolved = dict(document)
    problems: list[Diagnostic] = []
    for section, folder in PRESET_SECTIONS.items():
        value = resolved.get(section)
        if not isinstance(value, str):
            continue
        path = root / folder / f"{value}.yaml"
        if not path.is_file():
            problems.append(Diagnostic(path=section, message=f"unknown {section} preset {value!r}"))
            continue
        try:
            resolved[section] = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            problems.append(Diagnostic(path=section, message=f"preset {value!r} is not valid YAML: {e}"))
    return resolved, problems


def check_document(document: Any, scenario_dir: Optional[Path] = None) -> tuple[Optional[Scenario], Verdict]:
    """
    Validate a parsed scenario document without raising.

    Returns:
        Tuple of (scenario or None, verdict)
    """
    if not isinstance(document, dict):
        return None, Verdict(diagnostics=(Diagnostic(path="<root>", message="scenario must be a mapping"),))

    resolved, problems = resolve_presets(document, scenario_dir)
    if problems:
        return None, Verdict(diagnostics=tuple(problems))

    try:
        scenario = Scenario.model_validate(resolved)
    except ValidationError as e:
        return None, Verdict(diagnostics=tuple(_diagnostics_from(e)))

    verdict = validate_scenario(scenario.model, scenario.workload, scenario.cluster, scenario.search)
    return (scenario if verdict.ok else None), verdict


def parse_scenario(text: str, scenario_dir: Optional[Path] = None) -> Scenario:
    """Parse YAML text into a validated scenario or raise ScenarioError."""
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError([Diagnostic(path="<root>", message=f"invalid YAML: {e}")])
    scenario, verdict = check_document(document, scenario_dir)
    if scenario is None:
        raise ScenarioError(verdict.diagnostics)
    return scenario


def load_scenario(path: Path | str, scenario_dir: Optional[Path] = None) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError([Diagnostic(path="<file>", message=f"no such scenario file: {path}")])
    logger.debug("Loading scenario %s", path)
    return parse_scenario(path.read_text(encoding="utf-8"), scenario_dir)


def emit_scenario(scenario: Scenario) -> str:
    """Inline, plain-number YAML that parses back to an equal scenario."""
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False)


def list_presets(scenario_dir: Optional[Path] = None) -> dict[str, list[str]]:
    root = Path(scenario_dir or get_settings().scenario_dir)
    return {
        section: sorted(p.stem for p in (root / folder).glob("*.yaml"))
        for section, folder in PRESET_SECTIONS.items()
    }


def apply_overrides(scenario: Scenario, overrides: dict[str, Any]) -> Scenario:
    """
    Re-validate a scenario with dotted-path overrides applied,
    e.g. {"search.modes": "agg_afd", "engine.efficiency.source": "table"}.

    Raises:
        ScenarioError: an override produces an invalid scenario
    """
    if not overrides:
        return scenario
    document = scenario.model_dump(mode="json")
    for dotted, value in overrides.items():
        *parents, leaf = dotted.split(".")
        node = document
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    updated, verdict = check_document(document)
    if updated is None:
        raise ScenarioError(verdict.diagnostics)
    return updated


def eval_context(scenario: Scenario, calibration: Optional[Path] = None) -> EvalContext:
    """
    Evaluation context of a scenario, loading the calibration table when the
    cost source needs one.

    Raises:
        ScenarioError: table or hybrid costs requested without a calibration table
    """
    if scenario.engine.efficiency.source == CostSource.ANALYTICAL:
        return EvalContext.from_scenario(scenario)
    path = calibration or get_settings().calibration_table
    if path is None:
        raise ScenarioError([Diagnostic(
            path="engine.efficiency.source",
            message=f"{scenario.engine.efficiency.source.value} costs need a calibration table",
        )])
    try:
        table = costdb.load_calibration_table(path)
    except (OSError, ValueError) as e:
        raise ScenarioError([Diagnostic(path="calibration", message=str(e))])
    return EvalContext.from_scenario(scenario, table)
