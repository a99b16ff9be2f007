"""
afd-explorer - Placement Service

Maps workers onto physical GPUs. AFD groups are kept inside one scale-up
domain so per-layer dispatch/combine stays on the fast tier; P/D pairs
share a node under the paired policy so the KV shipment does too.
"""
import logging
from typing import Optional

from afdx.exceptions import InvalidLayoutError
from afdx.schemas.cluster import ClusterSpec, Tier
from afdx.schemas.deployment import DeploymentConfig, WorkerPlan
from afdx.schemas.network import Flow, Topology
from afdx.schemas.placement import PlacedWorker, PlacementPolicy, WorkerLayout, WorkerRole
from afdx.schemas.traffic import KvFlow
from afdx.services import netsim

logger = logging.getLogger(__name__)


def afd_tier(cluster: ClusterSpec, plan: WorkerPlan) -> Tier:
    """Tier carrying a worker's dispatch/combine traffic under node-aligned placement."""
    return Tier.SCALEUP if plan.gpus <= cluster.scaleup_domain_size else Tier.SCALEOUT


def assign_tiers(patterns: dict[str, float], tiers: dict[str, float]) -> dict[str, str]:
    """
    Greedy frequency-to-bandwidth assignment.

    Args:
        patterns: Communication pattern -> transfers per request
        tiers: Tier name -> bandwidth

    Returns:
        Pattern -> tier; the i-th most frequent pattern gets the i-th fastest
        tier, extra patterns share the slowest.
    """
    if not tiers:
        return {}
    by_freq = sorted(patterns, key=lambda p: (-patterns[p], p))
    by_bw = sorted(tiers, key=lambda t: (-tiers[t], t))
    return {p: by_bw[min(i, len(by_bw) - 1)] for i, p in enumerate(by_freq)}


class _Allocator:
    """Node-aligned first-fit over dense GPU ids."""

    def __init__(self, topo: Topology):
        self.topo = topo
        self.free = [topo.domain_size] * (topo.gpus // topo.domain_size)

    def _take(self, node: int, count: int) -> list[int]:
        start = node * self.topo.domain_size + (self.topo.domain_size - self.free[node])
        self.free[node] -= count
        return list(range(start, start + count))

    def take(self, count: int, prefer: Optional[int] = None) -> tuple[list[int], int, bool]:
        """Allocate `count` GPUs; returns (ids, node, spans_nodes)."""
        order = list(range(len(self.free)))
        if prefer is not None:
            order.remove(prefer)
            order.insert(0, prefer)
        for node in order:
            if self.free[node] >= count:
                return self._take(node, count), node, False

        if count > sum(self.free):
            raise InvalidLayoutError(f"cannot place {count} GPUs: only {sum(self.free)} free")
        ids: list[int] = []
        first = None
        for node in range(len(self.free)):
            if self.free[node] == 0:
                continue
            grab = min(self.free[node], count - len(ids))
            first = node if first is None else first
            ids.extend(self._take(node, grab))
            if len(ids) == count:
                break
        return ids, first, True


def _place_worker(alloc: _Allocator, plan: WorkerPlan, name: str, role: WorkerRole, replica: int,
                  prefer: Optional[int] = None) -> PlacedWorker:
    ids, node, spans = alloc.take(plan.gpus, prefer)
    if spans:
        logger.warning("%s spans nodes; its groups leave the scale-up tier (tier-degraded)", name)
    split = plan.attn_gpus if plan.is_afd else plan.gpus
    return PlacedWorker(
        name=name,
        role=role,
        replica=replica,
        attn_gpus=tuple(ids[:split]),
        ffn_gpus=tuple(ids[split:]),
        node=node,
        tier_degraded=spans,
    )


def place(config: DeploymentConfig, topo: Topology, policy: PlacementPolicy = PlacementPolicy.AUTO) -> WorkerLayout:
    """
    Assign every worker of every replica to GPUs.

    Segregated places all prefill workers before all decode workers; paired
    interleaves P_i with D_i so each pair lands on a shared node when it fits.
    AUTO resolves to paired for disaggregated modes and packed otherwise.

    Raises:
        InvalidLayoutError: the deployment needs more GPUs than the topology has
    """
    if config.total_gpus > topo.gpus:
        raise InvalidLayoutError(f"deployment needs {config.total_gpus} GPUs, topology has {topo.gpus}")
    if policy == PlacementPolicy.AUTO:
        policy = PlacementPolicy.PAIRED if config.mode.is_disagg else PlacementPolicy.SEGREGATED

    alloc = _Allocator(topo)
    workers: list[PlacedWorker] = []
    for replica in range(config.replicas):
        if not config.mode.is_disagg:
            workers.append(_place_worker(alloc, config.worker, f"R{replica}.W0", WorkerRole.UNIFIED, replica))
            continue

        prefill = [(f"R{replica}.P{i}", WorkerRole.PREFILL, config.prefill_plan) for i in range(config.prefill_workers)]
        decode = [(f"R{replica}.D{i}", WorkerRole.DECODE, config.decode_plan) for i in range(config.decode_workers)]
        if policy == PlacementPolicy.SEGREGATED:
            for name, role, plan in prefill + decode:
                workers.append(_place_worker(alloc, plan, name, role, replica))
            continue

        for i in range(max(len(prefill), len(decode))):
            anchor = None
            for entry in (prefill[i] if i < len(prefill) else None, decode[i] if i < len(decode) else None):
                if entry is None:
                    continue
                name, role, plan = entry
                placed = _place_worker(alloc, plan, name, role, replica, prefer=anchor)
                anchor = placed.node if anchor is None else anchor
                workers.append(placed)

    return WorkerLayout(policy=policy, workers=tuple(workers))


def kv_transfer_time(
    layout: WorkerLayout,
    flow: KvFlow,
    topo: Topology,
    prefill_index: int = 0,
    decode_index: Optional[int] = None,
    replica: int = 0,
    sharded: bool = False,
) -> float:
    """
    Time to ship one request's KV cache from prefill worker P_i to decode worker D_j.

    By default the decode worker is D_{i mod y}. With `sharded` the cache is
    split evenly across the attention GPUs of both workers, rank to rank.
    """
    prefill = layout.by_role(WorkerRole.PREFILL, replica)
    decode = layout.by_role(WorkerRole.DECODE, replica)
    if not prefill or not decode:
        raise InvalidLayoutError("KV transfer needs a disaggregated layout")
    src = prefill[prefill_index % len(prefill)]
    dst = decode[(prefill_index if decode_index is None else decode_index) % len(decode)]

    if not sharded:
        pairs = [(src.lead_gpu, dst.lead_gpu)]
    else:
        ranks = min(len(src.attn_gpus), len(dst.attn_gpus))
        pairs = list(zip(src.attn_gpus[:ranks], dst.attn_gpus[:ranks]))
    flows = [
        Flow(flow_id=i, src=s, dst=d, bytes=flow.bytes / len(pairs))
        for i, (s, d) in enumerate(pairs)
    ]
    return netsim.simulate(flows, topo).makespan


def worst_kv_transfer_time(layout: WorkerLayout, flow: KvFlow, topo: Topology, sharded: bool = False) -> float:
    """Slowest P_i -> D_{i mod y} shipment of replica 0."""
    prefill = layout.by_role(WorkerRole.PREFILL, 0)
    return max(
        kv_transfer_time(layout, flow, topo, prefill_index=i, sharded=sharded)
        for i in range(len(prefill))
    )
