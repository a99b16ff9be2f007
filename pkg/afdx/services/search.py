"""
afd-explorer - Design-Space Search Service

Enumerates deployments over replica sizes and parallelism plans, sizes
attention pools by rate matching, and reduces evaluations to the Pareto
frontier of (tokens/s/user, system tokens/s).
"""
import itertools
import logging
from typing import Iterable, Iterator, Optional

from afdx.config import get_settings
from afdx.exceptions import InfeasibleConfigError, UnmatchableSplitError
from afdx.schemas.cluster import Duplex
from afdx.schemas.deployment import DeploymentConfig, ServingMode, WorkerPlan
from afdx.schemas.estimate import PerfEstimate
from afdx.schemas.memory import MemoryRole
from afdx.schemas.pipeline import Phase
from afdx.schemas.scenario import EvalContext
from afdx.schemas.search import SearchResult, SearchSpace
from afdx.services import memory
from afdx.services.engine import measure, prefill_workers_needed
from afdx.services.pipeline import decode_context, stage_costs_for
from afdx.services.placement import afd_tier
from afdx.workers.pool import evaluate_many, sweep_many

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Worker plans
# ---------------------------------------------------------------------------

def _experts_fit(E: int, ranks: int, allow_uneven: bool) -> bool:
    return ranks <= E and (allow_uneven or E % ranks == 0)


def shared_plans(g: int, space: SearchSpace, ctx: EvalContext) -> list[WorkerPlan]:
    """Non-AFD plans of size g: tp from the candidates, dp = g / tp, ep = g."""
    if not _experts_fit(ctx.model.num_experts, g, space.allow_uneven_experts):
        return []
    return [
        WorkerPlan(gpus=g, tp=tp, dp=g // tp, ep=g)
        for tp in space.tp_candidates
        if g % tp == 0
    ]


def depth_candidates(space: SearchSpace, ctx: EvalContext, gpus: int) -> list[int]:
    """Microbatch depths allowed on the tier that carries this worker's AFD traffic."""
    sample = WorkerPlan(gpus=gpus, attn_gpus=1, ffn_gpus=max(1, gpus - 1))
    duplex = ctx.cluster.duplex_of(afd_tier(ctx.cluster, sample))
    allowed = {1, 4} if duplex == Duplex.FULL else {1, 3}
    return [m for m in space.microbatches if m in allowed]


def afd_plans(g: int, space: SearchSpace, ctx: EvalContext, attn_sizes: Optional[Iterable[int]] = None) -> list[WorkerPlan]:
    """AFD plans of size g over every A (or the given A values), tp | A, ep = F."""
    plans = []
    E = ctx.model.num_experts
    depths = depth_candidates(space, ctx, g)
    for A in (range(1, g) if attn_sizes is None else attn_sizes):
        F = g - A
        if not _experts_fit(E, F, space.allow_uneven_experts):
            continue
        for tp, M, transport in itertools.product(space.tp_candidates, depths, space.transports):
            if A % tp:
                continue
            plans.append(WorkerPlan(
                gpus=g, tp=tp, dp=A // tp, ep=F, attn_gpus=A, ffn_gpus=F,
                microbatches=M, transport=transport,
            ))
    return plans


# ---------------------------------------------------------------------------
# Rate matching
# ---------------------------------------------------------------------------

def split_tp(A: int, ctx: EvalContext) -> int:
    """Largest power of two dividing A, capped at the scale-up domain."""
    tp = A & -A
    while tp > ctx.cluster.scaleup_domain_size:
        tp //= 2
    return tp


def split_plan(A: int, g: int, ctx: EvalContext) -> WorkerPlan:
    tp = split_tp(A, ctx)
    return WorkerPlan(gpus=g, tp=tp, dp=A // tp, ep=g - A, attn_gpus=A, ffn_gpus=g - A)


def split_balance(A: int, g: int, ctx: EvalContext) -> tuple[float, float, bool]:
    """
    Decode attention and FFN stage costs of an A/(g-A) split at the reference
    batch, and whether the attention side fits in memory.
    """
    plan = split_plan(A, g, ctx)
    config = DeploymentConfig(mode=ServingMode.AGG_AFD, worker=plan)
    batch = ctx.engine.reference_batch
    costs = stage_costs_for(config, ctx, Phase.DECODE, batch)
    footprints = memory.worker_footprint(ctx, plan, batch, decode_context(ctx), batch, Phase.DECODE)
    attn = [f for f in footprints if f.role == MemoryRole.ATTN_SIDE]
    fits = memory.feasible(tuple(attn), ctx.cluster.gpu).fits
    return costs.attn, costs.ffn, fits


def rate_match_split(g: int, ctx: EvalContext, allow_uneven: bool = False) -> tuple[int, int]:
    """
    Smallest attention pool whose decode stage keeps pace with the FFN pool.

    Raises:
        UnmatchableSplitError: no A satisfies both rate and memory
    """
    if g < 2:
        raise UnmatchableSplitError(f"cannot split {g} GPU(s) into attention and FFN")
    E = ctx.model.num_experts
    for A in range(1, g):
        if not _experts_fit(E, g - A, allow_uneven):
            continue
        s_attn, s_ffn, fits = split_balance(A, g, ctx)
        if s_attn <= s_ffn and fits:
            return A, g - A
    raise UnmatchableSplitError(f"unmatchable: no attention/FFN split of {g} GPUs keeps pace")


def rate_match_pd(
    ctx: EvalContext,
    decode_workers: int,
    prefill_plan: WorkerPlan,
    decode_plan: WorkerPlan,
    concurrency: Optional[int] = None,
) -> int:
    """
    Fewest prefill workers that keep `decode_workers` decode workers fed.

    Raises:
        InfeasibleConfigError: the matched pool does not fit the cluster
    """
    num_gpus = ctx.cluster.num_gpus
    if prefill_plan.gpus + decode_workers * decode_plan.gpus > num_gpus:
        raise InfeasibleConfigError(f"1P{decode_workers}D does not fit {num_gpus} GPUs")
    mode = ServingMode.DISAGG_AFD if decode_plan.is_afd else ServingMode.DISAGG_PD
    trial = DeploymentConfig(
        mode=mode, worker=decode_plan, prefill_worker=prefill_plan,
        prefill_workers=1, decode_workers=decode_workers,
    )
    c = concurrency or ctx.engine.reference_batch
    step = measure(trial, ctx, c)
    parallel = 1 if prefill_plan.is_afd else prefill_plan.dp
    needed = prefill_workers_needed(decode_workers, c, step.prefill_time, ctx.workload.osl, step.decode_time, parallel)
    total = needed * prefill_plan.gpus + decode_workers * decode_plan.gpus
    if total > num_gpus:
        raise InfeasibleConfigError(f"{needed}P{decode_workers}D needs {total} GPUs, cluster has {num_gpus}")
    return int(needed)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def _disagg_worker_plans(space: SearchSpace, ctx: EvalContext, afd: bool) -> list[WorkerPlan]:
    plans: list[WorkerPlan] = []
    for w in space.worker_sizes:
        if w > ctx.cluster.num_gpus:
            continue
        if not afd:
            plans += shared_plans(w, space, ctx)
            continue
        if w < 2:
            continue
        sizes = None
        if space.rate_match:
            try:
                sizes = [rate_match_split(w, ctx, space.allow_uneven_experts)[0]]
            except UnmatchableSplitError:
                logger.debug("No rate-matched split of %d GPUs; scanning all", w)
        plans += afd_plans(w, space, ctx, sizes)
    return plans


def _disagg_configs(mode: ServingMode, g: int, replicas: int, plans: list[WorkerPlan],
                    space: SearchSpace) -> Iterator[DeploymentConfig]:
    for p_plan, d_plan in itertools.product(plans, plans):
        if mode.is_afd and (p_plan.microbatches, p_plan.transport) != (d_plan.microbatches, d_plan.transport):
            continue
        for x in range(1, space.max_workers + 1):
            rest = g - x * p_plan.gpus
            if rest < d_plan.gpus:
                break
            if rest % d_plan.gpus:
                continue
            y = rest // d_plan.gpus
            if y > space.max_workers:
                continue
            yield DeploymentConfig(
                mode=mode, replicas=replicas, worker=d_plan, prefill_worker=p_plan,
                prefill_workers=x, decode_workers=y, chunk_size=space.chunk_size,
            )


def _configs(space: SearchSpace, ctx: EvalContext) -> Iterator[DeploymentConfig]:
    num_gpus = ctx.cluster.num_gpus
    disagg_plans = {
        mode: _disagg_worker_plans(space, ctx, mode.is_afd)
        for mode in space.modes if mode.is_disagg
    }
    for mode in space.modes:
        for g in space.replica_sizes(mode, num_gpus):
            replicas = num_gpus // g
            if mode.is_disagg:
                yield from _disagg_configs(mode, g, replicas, disagg_plans[mode], space)
                continue
            plans = afd_plans(g, space, ctx) if mode.is_afd else shared_plans(g, space, ctx)
            for plan in plans:
                yield DeploymentConfig(mode=mode, replicas=replicas, worker=plan, chunk_size=space.chunk_size)


def enumerate_configs(space: SearchSpace, ctx: EvalContext, max_configs: Optional[int] = None) -> tuple[list[DeploymentConfig], bool]:
    """
    Every deployment on the declared grid, in deterministic order.

    Returns:
        Tuple of (configs, truncated)
    """
    limit = max_configs or get_settings().max_configs
    configs = list(itertools.islice(_configs(space, ctx), limit + 1))
    truncated = len(configs) > limit
    if truncated:
        logger.warning("Search space exceeds %d configs; keeping the first %d", limit, limit)
        configs = configs[:limit]
    return configs, truncated


# ---------------------------------------------------------------------------
# Frontier
# ---------------------------------------------------------------------------

def dominates(a: PerfEstimate, b: PerfEstimate) -> bool:
    return (
        a.per_user_rate >= b.per_user_rate
        and a.system_rate >= b.system_rate
        and (a.per_user_rate > b.per_user_rate or a.system_rate > b.system_rate)
    )


def pareto(points: Iterable[PerfEstimate]) -> list[PerfEstimate]:
    """
    Feasible points not dominated on (per_user_rate, system_rate).

    Points equal on both axes are all kept. Sorted by per_user_rate.
    """
    ranked = sorted(
        (p for p in points if p.feasible),
        key=lambda p: (-p.per_user_rate, -p.system_rate, p.config.mode.value, p.config.layout_label()),
    )
    kept: list[PerfEstimate] = []
    best: Optional[PerfEstimate] = None
    for p in ranked:
        if best is None or p.system_rate > best.system_rate:
            kept.append(p)
            best = p
        elif p.point == best.point:
            kept.append(p)
    return sorted(kept, key=lambda p: (p.per_user_rate, -p.system_rate, p.config.mode.value, p.config.layout_label()))


def merge_frontiers(*frontiers: Iterable[PerfEstimate]) -> list[PerfEstimate]:
    return pareto(itertools.chain(*frontiers))


def _sweep_levels(estimate: PerfEstimate) -> list[int]:
    per_worker = estimate.concurrency // (estimate.config.decode_workers if estimate.config.mode.is_disagg else 1)
    return [1 << i for i in range(per_worker.bit_length()) if (1 << i) < per_worker]


def run_search(space: SearchSpace, ctx: EvalContext, threads: Optional[int] = None,
               max_configs: Optional[int] = None) -> SearchResult:
    """Enumerate, evaluate and reduce to the frontier."""
    configs, truncated = enumerate_configs(space, ctx, max_configs)
    logger.info("Enumerated %d configs over modes %s", len(configs), ",".join(m.value for m in space.modes))
    points = evaluate_many(configs, ctx, space.concurrency_min, space.concurrency_max, threads)

    if space.sweep_concurrency:
        extra = [
            (p.config, level)
            for p in points if p.feasible
            for level in _sweep_levels(p)
            if level >= space.concurrency_min
        ]
        points = points + [p for p in sweep_many(extra, ctx, threads) if p.feasible]

    return SearchResult(
        points=tuple(points),
        frontier=tuple(pareto(points)),
        enumerated=len(configs),
        truncated=truncated,
    )
