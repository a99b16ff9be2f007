"""
afd-explorer - Study Service

The two side studies next to the search: runtime/memory breakdown over
context length, and KV-transfer latency under the two P/D placements.
"""
import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from afdx.exceptions import ScenarioError
from afdx.schemas.costs import CalibrationTable, RuntimeBreakdown
from afdx.schemas.deployment import DeploymentConfig, ServingMode, WorkerPlan
from afdx.schemas.network import Topology
from afdx.schemas.placement import PlacementPolicy, WorkerRole
from afdx.schemas.scenario import Diagnostic, EvalContext, Scenario
from afdx.schemas.traffic import KvFlow, TrafficKind
from afdx.services import costdb, netsim, placement, traffic
from afdx.services.engine import request_kv_flow

logger = logging.getLogger(__name__)

POLICIES = (PlacementPolicy.SEGREGATED, PlacementPolicy.PAIRED)


def breakdown_rows(
    scenario: Scenario,
    contexts: Optional[Sequence[int]] = None,
    table: Optional[CalibrationTable] = None,
) -> list[RuntimeBreakdown]:
    contexts = contexts or scenario.search.breakdown_contexts
    return [
        costdb.runtime_memory_breakdown(
            scenario.cluster.gpu, scenario.model, int(c), scenario.engine.efficiency, table=table
        )
        for c in contexts
    ]


def study_configs(scenario: Scenario) -> dict[str, DeploymentConfig]:
    """
    xPyD deployments compared by the KV study: the AFD worker under test and
    a non-AFD expert-parallel baseline.

    Raises:
        ScenarioError: the scenario has no disaggregated mode
    """
    space = scenario.search
    if not any(m.is_disagg for m in space.modes):
        raise ScenarioError([Diagnostic(path="search.modes", message="placement study needs a disaggregated mode")])
    A, F = space.kv_study_attn, space.kv_study_ffn
    afd = WorkerPlan(gpus=A + F, tp=1, dp=A, ep=F, attn_gpus=A, ffn_gpus=F)
    ep = space.kv_study_baseline_ep
    baseline = WorkerPlan(gpus=ep, tp=1, dp=ep, ep=ep)
    pairs = space.kv_study_pairs
    return {
        f"{A}A{F}F": DeploymentConfig(mode=ServingMode.DISAGG_AFD, worker=afd, prefill_worker=afd,
                                      prefill_workers=pairs, decode_workers=pairs),
        f"EP{ep}": DeploymentConfig(mode=ServingMode.DISAGG_PD, worker=baseline, prefill_worker=baseline,
                                    prefill_workers=pairs, decode_workers=pairs),
    }


def placement_study(
    scenario: Scenario,
    kv_sizes: Optional[Sequence[float]] = None,
    sharded: Optional[bool] = None,
) -> pd.DataFrame:
    """
    P0 -> D0 KV latency per KV size, worker kind and placement policy.

    Columns: kv_bytes, worker, segregated_s, paired_s, ratio.
    """
    topo = Topology.from_cluster(scenario.cluster)
    sizes = kv_sizes or scenario.search.kv_sizes
    sharded = scenario.engine.kv_sharded if sharded is None else sharded
    rows = []
    for worker, config in study_configs(scenario).items():
        if config.total_gpus > topo.gpus:
            logger.warning("Skipping %s: needs %d GPUs", worker, config.total_gpus)
            continue
        layouts = {policy: placement.place(config, topo, policy) for policy in POLICIES}
        for size in sizes:
            flow = KvFlow(bytes=float(size), tokens=0)
            times = {
                policy: placement.kv_transfer_time(layouts[policy], flow, topo, sharded=sharded)
                for policy in POLICIES
            }
            seg, paired = times[PlacementPolicy.SEGREGATED], times[PlacementPolicy.PAIRED]
            rows.append({
                "kv_bytes": float(size),
                "worker": worker,
                "segregated_s": seg,
                "paired_s": paired,
                "ratio": seg / paired,
            })
    return pd.DataFrame(rows, columns=["kv_bytes", "worker", "segregated_s", "paired_s", "ratio"])


def linear_fit_r2(x: Sequence[float], y: Sequence[float]) -> float:
    """Coefficient of determination of a least-squares line through (x, y)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 3:
        return 1.0
    slope, intercept = np.polyfit(x, y, 1)
    residual = ((y - (slope * x + intercept)) ** 2).sum()
    total = ((y - y.mean()) ** 2).sum()
    return 1.0 if total == 0 else float(1 - residual / total)


def traffic_dump(config: DeploymentConfig, ctx: EvalContext, tokens: Optional[int] = None) -> pd.DataFrame:
    """
    Per-layer A2F/F2A matrices of one decode microbatch of an AFD worker,
    plus the per-request KV shipment of disaggregated modes.
    """
    plan = config.decode_plan
    frames = []
    if plan.is_afd:
        tokens = tokens or max(1, ctx.engine.reference_batch // plan.microbatches)
        A, F = plan.attn_gpus, plan.ffn_gpus
        a2f = traffic.build_a2f(tokens, ctx.model, A, F, plan.transport, ctx.engine.traffic, allow_uneven=True)
        f2a = traffic.build_f2a(tokens, ctx.model, A, F, plan.transport, allow_uneven=True)
        frames.append(traffic.to_frame([a2f, f2a]))
    if config.mode.is_disagg:
        flow = request_kv_flow(ctx)
        frames.append(pd.DataFrame([{"sender": 0, "receiver": 0, "bytes": flow.bytes, "kind": TrafficKind.KV.value}]))
    if not frames:
        return pd.DataFrame(columns=["sender", "receiver", "bytes", "kind"])
    return pd.concat(frames, ignore_index=True)


def flow_dump(config: DeploymentConfig, ctx: EvalContext, tokens: Optional[int] = None) -> pd.DataFrame:
    """Flow traces of one layer's dispatch and combine on the placed worker D0 (or W0)."""
    plan = config.decode_plan
    topo = Topology.from_cluster(ctx.cluster)
    if not plan.is_afd:
        return netsim.traces_frame(netsim.simulate([], topo))
    tokens = tokens or max(1, ctx.engine.reference_batch // plan.microbatches)
    layout = placement.place(config, topo, ctx.engine.placement)
    role = WorkerRole.DECODE if config.mode.is_disagg else WorkerRole.UNIFIED
    worker = layout.by_role(role, 0)[0]
    attn_ids, ffn_ids = list(worker.attn_gpus), list(worker.ffn_gpus)
    A, F = plan.attn_gpus, plan.ffn_gpus
    a2f = traffic.build_a2f(tokens, ctx.model, A, F, plan.transport, ctx.engine.traffic, allow_uneven=True)
    f2a = traffic.build_f2a(tokens, ctx.model, A, F, plan.transport, allow_uneven=True)
    dispatch = traffic.matrix_flows(a2f, attn_ids, ffn_ids)
    combine = traffic.matrix_flows(f2a, ffn_ids, attn_ids, start_id=len(dispatch))
    frames = [
        netsim.traces_frame(netsim.simulate(dispatch, topo)).assign(kind=TrafficKind.A2F.value),
        netsim.traces_frame(netsim.simulate(combine, topo)).assign(kind=TrafficKind.F2A.value),
    ]
    return pd.concat(frames, ignore_index=True)


def routing_sample(ctx: EvalContext, ranks: int, tokens: int, seed: int = 0) -> pd.DataFrame:
    """Expected against sampled tokens received per FFN rank under uniform top-k routing."""
    model = ctx.model
    probs = traffic.rank_probabilities(model.num_experts, model.top_k, ranks, allow_uneven=True)
    sampled = traffic.sample_deliveries(tokens, model.num_experts, model.top_k, ranks, seed)
    return pd.DataFrame({
        "rank": range(ranks),
        "expected": [float(p) * tokens for p in probs],
        "sampled": sampled.astype(int),
    })
