"""
afd-explorer - Microbatch Pipeline Service

Splits a step's token budget into microbatches and prices the overlapped
attention -> dispatch -> FFN -> combine schedule.
"""
import logging
import math
from typing import Optional, Sequence

import simpy

from afdx.exceptions import EmptyMicrobatchError, InvalidLayoutError
from afdx.schemas.cluster import Duplex
from afdx.schemas.costs import OpKind, OpShape
from afdx.schemas.deployment import DeploymentConfig, WorkerPlan
from afdx.schemas.network import Topology
from afdx.schemas.pipeline import Phase, StageCosts
from afdx.schemas.scenario import EvalContext
from afdx.services import costdb, netsim, traffic
from afdx.services.placement import afd_tier

logger = logging.getLogger(__name__)


def partition_budget(batch: int, isl: int, M: int) -> list[int]:
    """
    Split batch * isl tokens into M microbatches, larger ones first.

    Raises:
        EmptyMicrobatchError: M exceeds the token budget
    """
    if M < 1:
        raise ValueError("microbatch count must be at least 1")
    budget = batch * isl
    if M > budget:
        raise EmptyMicrobatchError(f"empty microbatch: {M} microbatches for {budget} tokens")
    return traffic.split_tokens(budget, M)


def pipelined_latency(c: StageCosts) -> float:
    """M * s_max plus one fill/drain slice s_i / L of every non-bottleneck stage."""
    stages = c.stages
    s_max = max(stages)
    fill = sum(s for s in stages if s != s_max)
    return c.microbatches * s_max + fill / c.layers


def simulate_pipeline(c: StageCosts) -> float:
    """
    Discrete-event makespan of the same schedule.

    Every stage is a FIFO server; each microbatch visits the stages in order
    once per layer, spending s_i / L in stage i.
    """
    env = simpy.Environment()
    stages = c.stages
    servers = [simpy.Resource(env, capacity=1) for _ in stages]
    per_layer = [s / c.layers for s in stages]

    def microbatch(env):
        for _ in range(c.layers):
            for server, cost in zip(servers, per_layer):
                with server.request() as req:
                    yield req
                    yield env.timeout(cost)

    for _ in range(c.microbatches):
        env.process(microbatch(env))
    env.run()
    return env.now


def merge_for_duplex(c: StageCosts, duplex: Duplex) -> StageCosts:
    return c.merged() if duplex == Duplex.HALF else c


def _attention_time(ctx: EvalContext, plan: WorkerPlan, phase: Phase, tokens: int, sequences: int,
                    context: int) -> float:
    """Attention side of one microbatch on one DP rank, all layers, TP collectives included."""
    gpu, model, knobs = ctx.cluster.gpu, ctx.model, ctx.knobs
    op = OpKind.ATTN_PREFILL if phase == Phase.PREFILL else OpKind.ATTN_DECODE
    tokens_rank = math.ceil(tokens / plan.dp)
    seqs_rank = max(1, math.ceil(sequences / plan.dp))
    total = 0.0
    for kind, count in costdb.layer_groups(model):
        core = OpShape(op=op, tokens=tokens_rank, context=context, batch=seqs_rank,
                       parallel_degree=plan.tp, layer=kind)
        proj = OpShape(op=OpKind.DENSE_PROJ, tokens=tokens_rank, batch=seqs_rank,
                       parallel_degree=plan.tp, layer=kind)
        total += count * (
            costdb.op_cost(gpu, model, core, knobs, ctx.table).time
            + costdb.op_cost(gpu, model, proj, knobs, ctx.table).time
        )
    topo = Topology.from_cluster(ctx.cluster)
    reduce_bytes = tokens_rank * model.hidden_dim * model.act_bytes
    total += model.layers * netsim.ring_allreduce_time(topo, plan.tp, reduce_bytes)
    return total


def _ffn_time(ctx: EvalContext, tokens: int, ep: int) -> float:
    shape = OpShape(op=OpKind.MOE_FFN, tokens=tokens, parallel_degree=ep)
    return ctx.model.layers * costdb.op_cost(ctx.cluster.gpu, ctx.model, shape, ctx.knobs, ctx.table).time


def phase_shape(ctx: EvalContext, phase: Phase, tokens: int) -> tuple[int, int]:
    """(sequences, per-sequence context) seen by a microbatch of `tokens` tokens."""
    computed = computed_prompt_tokens(ctx)
    if phase == Phase.PREFILL:
        return max(1, math.ceil(tokens / computed)), computed
    return tokens, decode_context(ctx)


def computed_prompt_tokens(ctx: EvalContext) -> int:
    """Prompt tokens that prefill actually computes (cached prefix is skipped)."""
    wl = ctx.workload
    recomputed = round(wl.prefix * (1 - ctx.engine.prefix_hit_rate))
    return wl.isl + recomputed


def decode_context(ctx: EvalContext) -> int:
    """Average (or worst-case) KV length visible to a decoding sequence."""
    wl = ctx.workload
    generated = wl.osl if ctx.engine.memory.worst_case_decode else wl.osl // 2
    return wl.prefix + wl.isl + generated


def stage_costs_for(
    config: DeploymentConfig,
    ctx: EvalContext,
    phase: Phase,
    microbatch_tokens: int,
    attn_gpus: Optional[Sequence[int]] = None,
    ffn_gpus: Optional[Sequence[int]] = None,
    sequences: Optional[int] = None,
) -> StageCosts:
    """
    Stage costs of the largest microbatch of an AFD worker.

    Args:
        config: AFD deployment
        ctx: Evaluation context
        phase: Prefill or decode
        microbatch_tokens: Tokens in the largest microbatch
        attn_gpus, ffn_gpus: Placed GPU ids (packed from GPU 0 when omitted)
        sequences: Sequences in the microbatch, if not derivable from tokens

    Returns:
        StageCosts summed over all layers; merged on half-duplex AFD tiers
    """
    plan = config.prefill_plan if phase == Phase.PREFILL else config.decode_plan
    if not plan.is_afd:
        raise InvalidLayoutError(f"{config.mode.value} worker has no attention/FFN split")
    A, F = plan.attn_gpus, plan.ffn_gpus
    attn_ids = list(attn_gpus) if attn_gpus is not None else list(range(A))
    ffn_ids = list(ffn_gpus) if ffn_gpus is not None else list(range(A, A + F))

    seqs, context = phase_shape(ctx, phase, microbatch_tokens)
    if sequences is not None:
        seqs = sequences

    s_attn = _attention_time(ctx, plan, phase, microbatch_tokens, seqs, context)
    s_ffn = _ffn_time(ctx, microbatch_tokens, F)

    topo = Topology.from_cluster(ctx.cluster)
    model = ctx.model
    a2f = traffic.build_a2f(microbatch_tokens, model, A, F, plan.transport, ctx.engine.traffic, allow_uneven=True)
    f2a = traffic.build_f2a(microbatch_tokens, model, A, F, plan.transport, allow_uneven=True)
    dispatch = traffic.matrix_flows(a2f, attn_ids, ffn_ids)
    combine = traffic.matrix_flows(f2a, ffn_ids, attn_ids)
    s_a2f = model.layers * netsim.simulate(dispatch, topo).makespan
    s_f2a = model.layers * netsim.simulate(combine, topo).makespan

    costs = StageCosts(
        attn=s_attn, a2f=s_a2f, ffn=s_ffn, f2a=s_f2a,
        layers=model.layers, microbatches=plan.microbatches,
        transfers=sum(1 for flows in (dispatch, combine) if flows),
    )
    return merge_for_duplex(costs, ctx.cluster.duplex_of(afd_tier(ctx.cluster, plan)))


def afd_phase_latency(config: DeploymentConfig, ctx: EvalContext, phase: Phase, batch: int, isl: int,
                      sequences: Optional[int] = None) -> tuple[float, StageCosts]:
    """Pipelined latency of one step whose token budget is batch * isl."""
    plan = config.prefill_plan if phase == Phase.PREFILL else config.decode_plan
    M = min(plan.microbatches, batch * isl)
    parts = partition_budget(batch, isl, M)
    seqs = None if sequences is None else max(1, math.ceil(sequences / M))
    costs = stage_costs_for(config, ctx, phase, parts[0], sequences=seqs)
    costs = costs.model_copy(update={"microbatches": M})
    return pipelined_latency(costs), costs
