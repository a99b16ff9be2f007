"""
afd-explorer - Memory Footprint Service

Per-GPU accounting of weights (W), activations (A), KV cache (K),
communication buffers (N) and runtime overhead (O).
"""
import math

from afdx.schemas.cluster import GpuSpec
from afdx.schemas.deployment import DeploymentConfig, ServingMode, Transport, WorkerPlan
from afdx.schemas.memory import MemoryFootprint, MemoryRole, MemoryVerdict
from afdx.schemas.pipeline import Phase
from afdx.schemas.scenario import EvalContext
from afdx.services import costdb, traffic
from afdx.services.pipeline import computed_prompt_tokens, decode_context


def chunk_prefill_tokens(config: DeploymentConfig, ctx: EvalContext, concurrency: int) -> int:
    """Steady-state prefill tokens riding along each aggregated decode iteration."""
    if concurrency <= 0:
        return 0
    demand = math.ceil(concurrency * computed_prompt_tokens(ctx) / ctx.workload.osl)
    return min(config.chunk_size, demand)


def attention_weights(ctx: EvalContext, tp: int) -> float:
    return ctx.model.layers * costdb.attention_weight_bytes(ctx.model) / tp


def expert_weights(ctx: EvalContext, ep: int) -> float:
    model = ctx.model
    hosted = math.ceil(model.num_experts / ep)
    return model.layers * (hosted * costdb.expert_weight_bytes(model) + costdb.shared_expert_bytes(model) / ep)


def kv_per_sequence(ctx: EvalContext, tp: int, resident: int) -> float:
    """KV plus recurrent state one sequence pins on one GPU of a TP group."""
    model = ctx.model
    shards = 1 if model.is_mla else min(tp, model.kv_heads)
    return costdb.kv_cache_bytes(model, resident) / shards + costdb.state_bytes(model) / tp


def _hidden(ctx: EvalContext, tokens: float) -> float:
    return tokens * ctx.model.hidden_dim * ctx.model.act_bytes * ctx.engine.memory.activation_factor


def worker_footprint(ctx: EvalContext, plan: WorkerPlan, sequences: int, resident: int, step_tokens: int,
                     phase: Phase) -> list[MemoryFootprint]:
    """Footprints of one worker: one shared role, or attention and FFN sides."""
    knobs = ctx.engine.memory
    model = ctx.model
    kv = math.ceil(sequences / plan.dp) * kv_per_sequence(ctx, plan.tp, resident)

    if not plan.is_afd:
        buffers = 0.0
        if plan.ep > 1 and step_tokens > 0:
            a2f = traffic.build_a2f(step_tokens, model, plan.ep, plan.ep, Transport.SPARSE,
                                    ctx.engine.traffic, allow_uneven=True)
            f2a = traffic.build_f2a(step_tokens, model, plan.ep, plan.ep, allow_uneven=True)
            buffers = knobs.buffer_factor * max(
                a2f.row_sums().max(), a2f.column_sums().max(), f2a.row_sums().max(), f2a.column_sums().max()
            )
        return [MemoryFootprint(
            role=MemoryRole.SHARED,
            phase=phase,
            weights=attention_weights(ctx, plan.tp) + expert_weights(ctx, plan.ep),
            activations=_hidden(ctx, math.ceil(step_tokens / plan.dp)),
            kv_cache=kv,
            comm_buffers=float(buffers),
            runtime_overhead=knobs.runtime_overhead,
        )]

    A, F = plan.attn_gpus, plan.ffn_gpus
    mb = math.ceil(step_tokens / plan.microbatches)
    attn_buf = ffn_buf = 0.0
    peak_p = 0.0
    if mb > 0:
        a2f = traffic.build_a2f(mb, model, A, F, plan.transport, ctx.engine.traffic, allow_uneven=True)
        f2a = traffic.build_f2a(mb, model, A, F, plan.transport, allow_uneven=True)
        attn_buf = knobs.buffer_factor * max(a2f.row_sums().max(), f2a.column_sums().max())
        ffn_buf = knobs.buffer_factor * max(a2f.column_sums().max(), f2a.row_sums().max())
        probs = traffic.rank_probabilities(model.num_experts, model.top_k, F, allow_uneven=True)
        peak_p = 1.0 if plan.transport == Transport.DENSE else float(max(probs))
    return [
        MemoryFootprint(
            role=MemoryRole.ATTN_SIDE,
            phase=phase,
            weights=attention_weights(ctx, plan.tp),
            activations=_hidden(ctx, math.ceil(mb / plan.dp)),
            kv_cache=kv,
            comm_buffers=float(attn_buf),
            runtime_overhead=knobs.runtime_overhead,
        ),
        MemoryFootprint(
            role=MemoryRole.FFN_SIDE,
            phase=phase,
            weights=expert_weights(ctx, F),
            activations=_hidden(ctx, mb * peak_p),
            kv_cache=0.0,
            comm_buffers=float(ffn_buf),
            runtime_overhead=knobs.runtime_overhead,
        ),
    ]


def footprint(config: DeploymentConfig, ctx: EvalContext, concurrency: int) -> tuple[MemoryFootprint, ...]:
    """
    Per-GPU footprints of every distinct GPU role in one replica.

    `concurrency` counts decoding sequences per decode worker. Disaggregated
    modes add the prefill worker, which holds one prompt per DP rank.
    """
    resident = decode_context(ctx)
    step = concurrency
    if config.mode in (ServingMode.AGG_CHUNKED, ServingMode.AGG_AFD):
        step += chunk_prefill_tokens(config, ctx, concurrency)
    out = worker_footprint(ctx, config.decode_plan, concurrency, resident, step, Phase.DECODE)

    if config.mode.is_disagg:
        plan = config.prefill_plan
        wl = ctx.workload
        in_flight = plan.dp if concurrency > 0 else 0
        out += worker_footprint(ctx, plan, in_flight, wl.prefix + wl.isl, in_flight * computed_prompt_tokens(ctx),
                                Phase.PREFILL)
    return tuple(out)


def combined(attn: MemoryFootprint, ffn: MemoryFootprint) -> MemoryFootprint:
    """One GPU holding both sides of an AFD pair, as a shared deployment would."""
    return MemoryFootprint(
        role=MemoryRole.SHARED,
        phase=attn.phase,
        weights=attn.weights + ffn.weights,
        activations=max(attn.activations, ffn.activations),
        kv_cache=attn.kv_cache + ffn.kv_cache,
        comm_buffers=max(attn.comm_buffers, ffn.comm_buffers),
        runtime_overhead=max(attn.runtime_overhead, ffn.runtime_overhead),
    )


def feasible(footprints: tuple[MemoryFootprint, ...] | MemoryFootprint, gpu: GpuSpec) -> MemoryVerdict:
    """Largest per-GPU total against HBM capacity; headroom = capacity - peak."""
    if isinstance(footprints, MemoryFootprint):
        footprints = (footprints,)
    worst = max(footprints, key=lambda f: f.total)
    headroom = gpu.hbm_capacity - worst.total
    return MemoryVerdict(fits=headroom >= 0, headroom=headroom, peak=worst.total, binding_role=worst.role)
