"""
afd-explorer - Report Service

Tabular and JSON artifacts. CSVs are the canonical outputs; plots are
rendered from the same frames.
"""
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd

from afdx.schemas.costs import RuntimeBreakdown
from afdx.schemas.estimate import PerfEstimate
from afdx.schemas.scenario import Scenario
from afdx.schemas.search import SearchResult

logger = logging.getLogger(__name__)

FRONTIER_COLUMNS = [
    "mode", "layout", "A", "F", "tp", "ep", "M", "concurrency",
    "ttft_ms", "tpot_ms", "tokens_s_user", "system_tokens_s",
]

FLOAT_FORMAT = "%.6g"


def frontier_row(p: PerfEstimate) -> dict:
    plan = p.config.decode_plan
    return {
        "mode": p.config.mode.value,
        "layout": p.config.layout_label(),
        "A": plan.attn_gpus,
        "F": plan.ffn_gpus,
        "tp": plan.tp,
        "ep": plan.ep,
        "M": plan.microbatches,
        "concurrency": p.concurrency,
        "ttft_ms": p.ttft * 1e3,
        "tpot_ms": p.tpot * 1e3,
        "tokens_s_user": p.per_user_rate,
        "system_tokens_s": p.system_rate,
    }


def frontier_frame(points: Iterable[PerfEstimate]) -> pd.DataFrame:
    return pd.DataFrame([frontier_row(p) for p in points], columns=FRONTIER_COLUMNS)


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(df))
    return path


def write_jsonl(points: Iterable[PerfEstimate], path: Path) -> Path:
    """One per-config record per line: config, estimate, footprints, stages, layout."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for p in points:
            fh.write(p.model_dump_json())
            fh.write("\n")
    return path


def _brief(p: PerfEstimate | None) -> dict | None:
    if p is None:
        return None
    return {**frontier_row(p), "feasible": p.feasible, "reason": p.reason.value if p.reason else None}


def summary(result: SearchResult, scenario: Scenario) -> dict:
    """Headline numbers of a search: best throughput, best interactivity, reasons."""
    feasible = result.feasible
    best_tp = max(feasible, key=lambda p: (p.system_rate, p.per_user_rate), default=None)
    best_ui = max(feasible, key=lambda p: (p.per_user_rate, p.system_rate), default=None)
    per_mode: dict[str, dict[str, int]] = {}
    for p in result.points:
        entry = per_mode.setdefault(p.config.mode.value, {"evaluated": 0, "feasible": 0})
        entry["evaluated"] += 1
        entry["feasible"] += int(p.feasible)
    return {
        "model": scenario.model.name,
        "workload": scenario.workload.name,
        "gpus": scenario.cluster.num_gpus,
        "enumerated": result.enumerated,
        "truncated": result.truncated,
        "feasible": len(feasible),
        "frontier": len(result.frontier),
        "modes": dict(sorted(per_mode.items())),
        "infeasible_reasons": result.reasons(),
        "best_throughput": _brief(best_tp),
        "best_interactivity": _brief(best_ui),
    }


def write_json(data: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def breakdown_frame(model_name: str, rows: Sequence[RuntimeBreakdown]) -> pd.DataFrame:
    records = []
    for r in rows:
        memory_total = r.weight_bytes + r.kv_bytes + r.activation_bytes
        records.append({
            "model": model_name,
            "context": r.context,
            "attn_time_share": r.attn_time_share,
            "ffn_time_share": r.ffn_time_share,
            "weight_bytes": r.weight_bytes,
            "kv_bytes": r.kv_bytes,
            "activation_bytes": r.activation_bytes,
            "weight_share": r.weight_bytes / memory_total,
            "kv_share": r.kv_bytes / memory_total,
            "activation_share": r.activation_bytes / memory_total,
        })
    return pd.DataFrame(records)
