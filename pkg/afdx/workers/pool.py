"""
afd-explorer - Evaluation Pool

Fans deployment evaluations out over worker processes. Results come back in
input order so downstream artifacts stay deterministic.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Sequence

from afdx.config import get_settings
from afdx.schemas.deployment import DeploymentConfig
from afdx.schemas.estimate import PerfEstimate
from afdx.schemas.scenario import EvalContext
from afdx.services.engine import evaluate, evaluate_at

logger = logging.getLogger(__name__)


def _evaluate_one(config: DeploymentConfig, ctx: EvalContext, concurrency_min: int, concurrency_max: int) -> PerfEstimate:
    return evaluate(config, ctx, concurrency_min, concurrency_max)


def _evaluate_fixed(config: DeploymentConfig, concurrency: int, ctx: EvalContext) -> PerfEstimate:
    return evaluate_at(config, ctx, concurrency)


def evaluate_many(
    configs: Sequence[DeploymentConfig],
    ctx: EvalContext,
    concurrency_min: int = 1,
    concurrency_max: int = 4096,
    threads: int | None = None,
) -> list[PerfEstimate]:
    """
    Evaluate every config, in parallel when more than one worker is allowed.

    Args:
        configs: Deployments to price
        ctx: Shared, immutable evaluation context
        concurrency_min, concurrency_max: Concurrency search bounds
        threads: Worker processes (defaults to AFDX_THREADS)

    Returns:
        One estimate per config, in input order
    """
    threads = threads or get_settings().threads
    job = partial(_evaluate_one, ctx=ctx, concurrency_min=concurrency_min, concurrency_max=concurrency_max)
    if threads <= 1 or len(configs) < 2:
        return [job(config) for config in configs]

    logger.info("Evaluating %d configs on %d workers", len(configs), threads)
    chunksize = max(1, len(configs) // (threads * 8))
    with ProcessPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(job, configs, chunksize=chunksize))


def sweep_many(
    points: Sequence[tuple[DeploymentConfig, int]],
    ctx: EvalContext,
    threads: int | None = None,
) -> list[PerfEstimate]:
    """Evaluate (config, concurrency) pairs at fixed concurrency, in input order."""
    threads = threads or get_settings().threads
    if threads <= 1 or len(points) < 2:
        return [evaluate_at(config, ctx, c) for config, c in points]
    configs, levels = zip(*points)
    with ProcessPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(partial(_evaluate_fixed, ctx=ctx), configs, levels))
