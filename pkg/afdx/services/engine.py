"""
afd-explorer - Evaluation Engine

Prices one deployment end to end: TTFT, TPOT, the largest concurrency that
fits memory and SLOs, and the resulting per-user and system token rates.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from afdx.exceptions import AfdxError
from afdx.schemas.cluster import Duplex
from afdx.schemas.costs import OpKind, OpShape
from afdx.schemas.deployment import DeploymentConfig, ServingMode, Transport, WorkerPlan
from afdx.schemas.estimate import EstimateDetail, InfeasibleReason, PerfEstimate
from afdx.schemas.memory import MemoryFootprint
from afdx.schemas.network import Topology
from afdx.schemas.pipeline import Phase, StageCosts
from afdx.schemas.placement import WorkerLayout
from afdx.schemas.scenario import EvalContext
from afdx.schemas.traffic import KvFlow
from afdx.services import costdb, memory, netsim, placement, traffic
from afdx.services.pipeline import afd_phase_latency, computed_prompt_tokens, decode_context

logger = logging.getLogger(__name__)


@dataclass
class StepMeasure:
    """Latencies and memory of a deployment at one concurrency."""
    ttft: float
    tpot: float
    prefill_time: float
    decode_time: float
    kv_time: float = 0.0
    kv_flows: int = 0
    tp_time: float = 0.0
    prefill_needed: float = 0
    prefill_stages: Optional[StageCosts] = None
    decode_stages: Optional[StageCosts] = None
    footprints: tuple[MemoryFootprint, ...] = ()
    fits: bool = True
    notes: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Layout checks
# ---------------------------------------------------------------------------

def _plan_problems(plan: WorkerPlan, ctx: EvalContext, who: str) -> list[str]:
    problems = []
    cluster, model = ctx.cluster, ctx.model
    if plan.is_afd:
        if plan.attn_gpus < 1 or plan.ffn_gpus < 1:
            problems.append(f"{who}: AFD needs A >= 1 and F >= 1")
        if plan.attn_gpus + plan.ffn_gpus != plan.gpus:
            problems.append(f"{who}: A + F must equal the worker size")
        if plan.tp * plan.dp != plan.attn_gpus:
            problems.append(f"{who}: tp x dp must equal A")
        if plan.ep != plan.ffn_gpus:
            problems.append(f"{who}: ep must equal F")
        duplex = cluster.duplex_of(placement.afd_tier(cluster, plan))
        if plan.microbatches == 4 and duplex != Duplex.FULL:
            problems.append(f"{who}: M=4 needs a full-duplex AFD tier")
        if plan.microbatches == 3 and duplex != Duplex.HALF:
            problems.append(f"{who}: M=3 needs a half-duplex AFD tier")
        if plan.microbatches not in (1, 3, 4):
            problems.append(f"{who}: M must be 1, 3 or 4")
    else:
        if plan.tp * plan.dp != plan.gpus:
            problems.append(f"{who}: tp x dp must equal the worker size")
        if plan.ep > plan.gpus:
            problems.append(f"{who}: ep exceeds the worker size")
        if plan.microbatches != 1:
            problems.append(f"{who}: microbatching needs an AFD worker")
    if plan.ep > model.num_experts:
        problems.append(f"{who}: more expert ranks than experts")
    if plan.tp > cluster.scaleup_domain_size:
        logger.warning("%s: TP group of %d spans nodes; collectives charged at scale-up bandwidth", who, plan.tp)
    return problems


def layout_problems(config: DeploymentConfig, ctx: EvalContext) -> list[str]:
    """Reasons the deployment cannot run on the cluster; empty when valid."""
    problems = []
    if config.total_gpus > ctx.cluster.num_gpus:
        problems.append(f"needs {config.total_gpus} GPUs, cluster has {ctx.cluster.num_gpus}")
    if config.mode.is_afd != config.decode_plan.is_afd:
        problems.append(f"{config.mode.value} worker plan does not match the mode")
    problems += _plan_problems(config.decode_plan, ctx, "decode" if config.mode.is_disagg else "worker")
    if config.mode.is_disagg:
        if config.prefill_worker is None or config.prefill_workers < 1 or config.decode_workers < 1:
            problems.append("disaggregated modes need prefill and decode workers")
        else:
            problems += _plan_problems(config.prefill_plan, ctx, "prefill")
            if config.prefill_plan.is_afd != config.mode.is_afd:
                problems.append("prefill worker plan does not match the mode")
    return problems


# ---------------------------------------------------------------------------
# Step latencies
# ---------------------------------------------------------------------------

def _shared_step(ctx: EvalContext, plan: WorkerPlan, dec_seqs: int, pre_tokens: int) -> tuple[float, float]:
    """
    One iteration of a non-AFD worker.

    Args:
        dec_seqs: Decoding sequences per DP rank
        pre_tokens: Prefill tokens per DP rank

    Returns:
        Tuple of (iteration time, share spent in TP all-reduce)
    """
    gpu, model, knobs, table = ctx.cluster.gpu, ctx.model, ctx.knobs, ctx.table
    topo = Topology.from_cluster(ctx.cluster)
    computed = computed_prompt_tokens(ctx)
    dec_ctx = decode_context(ctx)
    rank_tokens = dec_seqs + pre_tokens

    total = 0.0
    for kind, count in costdb.layer_groups(model):
        layer = 0.0
        if dec_seqs:
            shape = OpShape(op=OpKind.ATTN_DECODE, tokens=dec_seqs, context=dec_ctx, batch=dec_seqs,
                            parallel_degree=plan.tp, layer=kind)
            layer += costdb.op_cost(gpu, model, shape, knobs, table).time
        if pre_tokens:
            shape = OpShape(op=OpKind.ATTN_PREFILL, tokens=pre_tokens, context=computed,
                            batch=max(1, math.ceil(pre_tokens / computed)), parallel_degree=plan.tp, layer=kind)
            layer += costdb.op_cost(gpu, model, shape, knobs, table).time
        proj = OpShape(op=OpKind.DENSE_PROJ, tokens=rank_tokens, parallel_degree=plan.tp, layer=kind)
        layer += costdb.op_cost(gpu, model, proj, knobs, table).time
        total += count * layer

    group_tokens = rank_tokens * plan.dp
    moe = OpShape(op=OpKind.MOE_FFN, tokens=group_tokens, parallel_degree=plan.ep)
    total += model.layers * costdb.op_cost(gpu, model, moe, knobs, table).time

    if plan.ep > 1 and group_tokens > 0:
        ranks = list(range(plan.ep))
        a2f = traffic.build_a2f(group_tokens, model, plan.ep, plan.ep, Transport.SPARSE,
                                ctx.engine.traffic, allow_uneven=True)
        f2a = traffic.build_f2a(group_tokens, model, plan.ep, plan.ep, allow_uneven=True)
        for matrix in (a2f, f2a):
            total += model.layers * netsim.simulate(traffic.matrix_flows(matrix, ranks, ranks), topo).makespan

    reduce_bytes = rank_tokens * model.hidden_dim * model.act_bytes
    tp_time = 2 * model.layers * netsim.ring_allreduce_time(topo, plan.tp, reduce_bytes)
    return total + tp_time, tp_time


def prefill_workers_needed(decode_workers: int, concurrency: int, t_prefill: float, osl: int, tpot: float,
                           parallel_requests: int = 1) -> float:
    """
    Fewest prefill workers whose request rate covers the decode pool's completions.

    Infinite when prefill never finishes.
    """
    if tpot <= 0 or math.isinf(t_prefill):
        return math.inf
    demand = decode_workers * concurrency / (osl * tpot)
    return max(1, math.ceil(demand * t_prefill / parallel_requests - 1e-12))


def request_kv_flow(ctx: EvalContext) -> KvFlow:
    """KV cache plus recurrent state of one request, as shipped from prefill to decode."""
    model, wl = ctx.model, ctx.workload
    tokens = wl.prefix + wl.isl
    per_token = costdb.kv_cache_bytes(model, tokens) / tokens
    return traffic.kv_flow(wl, model, per_token, costdb.state_bytes(model))


def _kv_time(ctx: EvalContext, layout: WorkerLayout) -> tuple[float, int]:
    """Slowest shipment time and the number of KV flows one request issues."""
    shipped = [request_kv_flow(ctx)]
    topo = Topology.from_cluster(ctx.cluster)
    time = max(
        placement.worst_kv_transfer_time(layout, flow, topo, sharded=ctx.engine.kv_sharded) for flow in shipped
    )
    return time, len(shipped)


def measure(config: DeploymentConfig, ctx: EvalContext, concurrency: int,
            layout: Optional[WorkerLayout] = None) -> StepMeasure:
    """Latencies and footprints at `concurrency` decoding sequences per decode worker."""
    c = concurrency
    wl = ctx.workload
    computed = computed_prompt_tokens(ctx)
    plan = config.decode_plan
    footprints = memory.footprint(config, ctx, c)
    fits = memory.feasible(footprints, ctx.cluster.gpu).fits

    if config.mode == ServingMode.AGG_CHUNKED:
        chunk = memory.chunk_prefill_tokens(config, ctx, c)
        iter_time, tp_time = _shared_step(ctx, plan, math.ceil(c / plan.dp), math.ceil(chunk / plan.dp))
        ttft = math.ceil(computed / config.chunk_size) * iter_time
        return StepMeasure(ttft=ttft, tpot=iter_time, prefill_time=ttft, decode_time=iter_time,
                           tp_time=tp_time, footprints=footprints, fits=fits)

    if config.mode == ServingMode.AGG_AFD:
        chunk = memory.chunk_prefill_tokens(config, ctx, c)
        t_dec, dec_stages = afd_phase_latency(config, ctx, Phase.DECODE, c, 1)
        t_pre, pre_stages = (0.0, None)
        if chunk:
            t_pre, pre_stages = afd_phase_latency(config, ctx, Phase.PREFILL, 1, chunk)
        iter_time = t_dec + t_pre
        ttft = math.ceil(computed / config.chunk_size) * iter_time
        return StepMeasure(ttft=ttft, tpot=iter_time, prefill_time=ttft, decode_time=t_dec,
                           decode_stages=dec_stages, prefill_stages=pre_stages,
                           footprints=footprints, fits=fits)

    layout = layout or placement.place(config, Topology.from_cluster(ctx.cluster), ctx.engine.placement)
    kv_time, kv_flows = _kv_time(ctx, layout)
    pre_plan = config.prefill_plan

    if config.mode == ServingMode.DISAGG_PD:
        t_pre, _ = _shared_step(ctx, pre_plan, 0, computed)
        t_dec, tp_time = _shared_step(ctx, plan, math.ceil(c / plan.dp), 0)
        parallel = pre_plan.dp
        dec_stages = pre_stages = None
    else:
        t_pre, pre_stages = afd_phase_latency(config, ctx, Phase.PREFILL, 1, computed)
        t_dec, dec_stages = afd_phase_latency(config, ctx, Phase.DECODE, c, 1)
        tp_time = 0.0
        parallel = 1

    needed = prefill_workers_needed(config.decode_workers, c, t_pre, wl.osl, t_dec, parallel)
    return StepMeasure(
        ttft=t_pre + kv_time, tpot=t_dec, prefill_time=t_pre, decode_time=t_dec, kv_time=kv_time, kv_flows=kv_flows,
        tp_time=tp_time, prefill_needed=needed, prefill_stages=pre_stages, decode_stages=dec_stages,
        footprints=footprints, fits=fits,
    )


def _meets_slo(step: StepMeasure, ctx: EvalContext, config: DeploymentConfig) -> bool:
    wl = ctx.workload
    if wl.slo_ttft is not None and step.ttft > wl.slo_ttft:
        return False
    if wl.slo_tpot is not None and step.tpot > wl.slo_tpot:
        return False
    if config.mode.is_disagg and step.prefill_needed > config.prefill_workers:
        return False
    return True


def _afd_transfers_per_request(config: DeploymentConfig, ctx: EvalContext, step: StepMeasure) -> int:
    """A2F/F2A phases one request crosses: every layer of every decode step plus its prefill steps."""
    total = 0
    if step.decode_stages is not None:
        total += step.decode_stages.transfers * step.decode_stages.layers * ctx.workload.osl
    if step.prefill_stages is not None:
        steps = 1 if config.mode.is_disagg else math.ceil(computed_prompt_tokens(ctx) / config.chunk_size)
        total += step.prefill_stages.transfers * step.prefill_stages.layers * steps
    return total


def _estimate(config: DeploymentConfig, ctx: EvalContext, concurrency: int, step: StepMeasure,
              layout: Optional[WorkerLayout], reason: Optional[InfeasibleReason]) -> PerfEstimate:
    sequences = concurrency * (config.decode_workers if config.mode.is_disagg else 1)
    feasible = reason is None
    detail = EstimateDetail(
        prefill_time=step.prefill_time,
        decode_time=step.decode_time,
        kv_transfer_time=step.kv_time,
        tp_collective_time=step.tp_time,
        prefill_stages=step.prefill_stages,
        decode_stages=step.decode_stages,
        footprints=step.footprints,
        layout=layout,
        prefill_workers_needed=int(step.prefill_needed) if math.isfinite(step.prefill_needed) else 0,
        afd_transfers_per_layer=step.decode_stages.transfers if step.decode_stages else 0,
        afd_transfers_per_request=_afd_transfers_per_request(config, ctx, step),
        kv_flows_per_request=step.kv_flows,
        notes=tuple(step.notes),
    )
    if not feasible:
        return PerfEstimate(config=config, feasible=False, reason=reason, ttft=step.ttft, tpot=step.tpot,
                            detail=detail)
    rate = sequences / step.tpot
    if ctx.engine.count_input_tokens:
        rate *= 1 + ctx.workload.isl / ctx.workload.osl
    return PerfEstimate(
        config=config,
        feasible=True,
        ttft=step.ttft,
        tpot=step.tpot,
        concurrency=sequences,
        per_user_rate=1 / step.tpot,
        system_rate=config.replicas * rate,
        detail=detail,
    )


def _invalid(config: DeploymentConfig, problems: list[str]) -> PerfEstimate:
    return PerfEstimate(
        config=config,
        feasible=False,
        reason=InfeasibleReason.INVALID_LAYOUT,
        detail=EstimateDetail(notes=tuple(problems)),
    )


def _layout_for(config: DeploymentConfig, ctx: EvalContext) -> Optional[WorkerLayout]:
    return placement.place(config, Topology.from_cluster(ctx.cluster), ctx.engine.placement)


def evaluate_at(config: DeploymentConfig, ctx: EvalContext, concurrency: int) -> PerfEstimate:
    """Estimate at a fixed concurrency per decode worker."""
    problems = layout_problems(config, ctx)
    if problems:
        return _invalid(config, problems)
    try:
        layout = _layout_for(config, ctx)
        step = measure(config, ctx, concurrency, layout)
    except AfdxError as e:
        return _invalid(config, [str(e)])
    reason = None
    if not step.fits:
        reason = InfeasibleReason.MEMORY_EXCEEDED
    elif not _meets_slo(step, ctx, config):
        reason = InfeasibleReason.SLO_VIOLATED
    return _estimate(config, ctx, concurrency, step, layout, reason)


def evaluate(config: DeploymentConfig, ctx: EvalContext, concurrency_min: int = 1,
             concurrency_max: int = 4096) -> PerfEstimate:
    """
    Largest concurrency in [concurrency_min, concurrency_max] that fits memory
    and meets the SLOs, found by binary search.

    Never raises for infeasibility: an infeasible lower bound yields a
    verdict with memory-exceeded taking precedence over SLO-violated.
    """
    problems = layout_problems(config, ctx)
    if problems:
        return _invalid(config, problems)
    layout: Optional[WorkerLayout] = None

    def step_at(c: int) -> StepMeasure:
        return measure(config, ctx, c, layout)

    try:
        layout = _layout_for(config, ctx)
        first = step_at(concurrency_min)
        if not first.fits:
            return _estimate(config, ctx, concurrency_min, first, layout, InfeasibleReason.MEMORY_EXCEEDED)
        if not _meets_slo(first, ctx, config):
            return _estimate(config, ctx, concurrency_min, first, layout, InfeasibleReason.SLO_VIOLATED)

        best, best_step = concurrency_min, first
        low, high = concurrency_min + 1, concurrency_max
        while low <= high:
            mid = (low + high) // 2
            step = step_at(mid)
            if step.fits and _meets_slo(step, ctx, config):
                best, best_step = mid, step
                low = mid + 1
            else:
                high = mid - 1
    except AfdxError as e:
        return _invalid(config, [str(e)])

    logger.debug("%s %s: concurrency %d", config.mode.value, config.layout_label(), best)
    return _estimate(config, ctx, best, best_step, layout, None)
