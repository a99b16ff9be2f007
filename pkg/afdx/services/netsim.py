"""
afd-explorer - Flow-Level Network Simulation

Fluid model of concurrent GPU-to-GPU transfers. Each GPU exposes an egress
and an ingress port per tier (one shared port on half-duplex tiers); rates
follow max-min fairness via progressive filling and are recomputed whenever
a flow finishes.
"""
import logging
import math
from functools import lru_cache
from typing import Hashable, Iterable, Sequence

import pandas as pd

from afdx.exceptions import UnreachableEndpointError
from afdx.schemas.cluster import Duplex, Tier
from afdx.schemas.network import Flow, FlowTrace, SimResult, Topology

logger = logging.getLogger(__name__)

_EPS = 1e-12

Resource = tuple[int, str, str]


def flow_resources(flow: Flow, topo: Topology) -> tuple[Resource, Resource]:
    """Ports a flow occupies: sender side first, receiver side second."""
    if max(flow.src, flow.dst) >= topo.gpus:
        raise UnreachableEndpointError(f"flow {flow.flow_id} endpoint outside a {topo.gpus}-GPU topology")
    tier = topo.tier_between(flow.src, flow.dst)
    if topo.capacity(tier) is None:
        raise UnreachableEndpointError(
            f"unreachable endpoint: GPU {flow.src} -> {flow.dst} crosses nodes without a scale-out tier"
        )
    if topo.duplex(tier) == Duplex.HALF:
        return (flow.src, tier.value, "duplex"), (flow.dst, tier.value, "duplex")
    return (flow.src, tier.value, "egress"), (flow.dst, tier.value, "ingress")


def max_min_rates(
    resources: Sequence[Iterable[Hashable]],
    capacities: dict[Hashable, float],
) -> tuple[list[float], list[Hashable]]:
    """
    Max-min fair rates by progressive filling.

    Args:
        resources: Resource keys used by each flow
        capacities: Capacity per resource key (may be math.inf)

    Returns:
        Tuple of (rate per flow, binding resource per flow)
    """
    uses = [tuple(sorted(set(r), key=str)) for r in resources]
    rates = [0.0] * len(uses)
    binding: list[Hashable] = [None] * len(uses)
    remaining = dict(capacities)
    unfrozen = set(range(len(uses)))

    while unfrozen:
        load: dict[Hashable, list[int]] = {}
        for i in sorted(unfrozen):
            for res in uses[i]:
                load.setdefault(res, []).append(i)

        best_share, best_res = math.inf, None
        for res in sorted(load, key=str):
            share = max(remaining[res], 0.0) / len(load[res])
            if share < best_share:
                best_share, best_res = share, res

        if best_res is None or math.isinf(best_share):
            for i in unfrozen:
                rates[i] = math.inf
            break

        frozen = [
            i for i in sorted(unfrozen)
            if any(
                max(remaining[res], 0.0) / len(load[res]) <= best_share * (1 + 1e-12)
                for res in uses[i]
            )
        ]
        for i in frozen:
            rates[i] = best_share
            binding[i] = next(
                res for res in uses[i]
                if max(remaining[res], 0.0) / len(load[res]) <= best_share * (1 + 1e-12)
            )
            for res in uses[i]:
                remaining[res] -= best_share
            unfrozen.discard(i)
    return rates, binding


def _label(res: Hashable) -> str:
    if res is None:
        return "none"
    gpu, tier, port = res
    return f"gpu{gpu}.{tier}.{port}"


@lru_cache(maxsize=4096)
def _simulate(flows: tuple[Flow, ...], topo: Topology) -> SimResult:
    ordered = sorted(flows, key=lambda f: f.flow_id)
    uses = [flow_resources(f, topo) for f in ordered]
    capacities: dict[Resource, float] = {}
    for pair in uses:
        for res in pair:
            cap = topo.capacity(Tier(res[1]))
            capacities[res] = math.inf if cap is None else cap

    left = [f.bytes for f in ordered]
    done = [0.0 if f.bytes <= 0 else None for f in ordered]
    last_binding: list[Hashable] = [None] * len(ordered)
    now = 0.0

    while True:
        active = [i for i, t in enumerate(done) if t is None]
        if not active:
            break
        rates, binding = max_min_rates([uses[i] for i in active], capacities)
        step = math.inf
        for i, rate in zip(active, rates):
            step = min(step, 0.0 if math.isinf(rate) else left[i] / rate)
        for i, rate, res in zip(active, rates, binding):
            last_binding[i] = res
            if math.isinf(rate):
                left[i] = 0.0
            else:
                left[i] -= rate * step
        now += step
        for i in active:
            if left[i] <= _EPS * max(ordered[i].bytes, 1.0):
                done[i] = now

    per_flow = tuple(t + topo.latency_floor for t in done)
    traces = tuple(
        FlowTrace(
            flow_id=f.flow_id,
            src=f.src,
            dst=f.dst,
            bytes=f.bytes,
            start=0.0,
            finish=per_flow[i],
            bottleneck=_label(last_binding[i]),
        )
        for i, f in enumerate(ordered)
    )
    return SimResult(per_flow_time=per_flow, makespan=max(per_flow, default=0.0), traces=traces)


def simulate(flows: Iterable[Flow], topo: Topology) -> SimResult:
    """
    Completion time of every flow, all starting together.

    Per-flow times are reported in flow-id order and include the topology's
    latency floor.

    Raises:
        UnreachableEndpointError: a flow needs a tier the topology lacks
    """
    return _simulate(tuple(flows), topo)


def traces_frame(result: SimResult) -> pd.DataFrame:
    return pd.DataFrame(
        [t.model_dump() for t in result.traces],
        columns=["flow_id", "src", "dst", "bytes", "start", "finish", "bottleneck"],
    )


def ring_allreduce_time(topo: Topology, group: int, size: float) -> float:
    """Ring all-reduce of `size` bytes over `group` ranks on the scale-up tier."""
    if group <= 1 or size <= 0:
        return 0.0
    steps = 2 * (group - 1)
    return steps * (size / group) / topo.scaleup_bw + steps * topo.latency_floor
