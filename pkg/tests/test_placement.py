import pytest

from afdx.exceptions import InvalidLayoutError
from afdx.schemas.cluster import Tier
from afdx.schemas.deployment import DeploymentConfig, ServingMode, WorkerPlan
from afdx.schemas.network import Topology
from afdx.schemas.placement import PlacementPolicy, WorkerRole
from afdx.schemas.traffic import KvFlow
from afdx.services import placement
from tests.factories import afd_config, shared_config, toy_cluster

TOPO = Topology.from_cluster(toy_cluster())


def two_by_two(mode=ServingMode.DISAGG_AFD):
    return afd_config(2, 2, mode=mode, prefill_workers=2, decode_workers=2)


def worker(layout, name):
    return next(w for w in layout.workers if w.name == name)


class TestPolicies:
    def test_segregated(self):
        layout = placement.place(two_by_two(), TOPO, PlacementPolicy.SEGREGATED)
        p0, d0 = worker(layout, "R0.P0"), worker(layout, "R0.D0")
        assert (p0.attn_gpus, p0.ffn_gpus, p0.node) == ((0, 1), (2, 3), 0)
        assert (d0.attn_gpus, d0.ffn_gpus, d0.node) == ((8, 9), (10, 11), 1)
        assert not layout.tier_degraded

    def test_paired(self):
        layout = placement.place(two_by_two(), TOPO, PlacementPolicy.PAIRED)
        p0, d0 = worker(layout, "R0.P0"), worker(layout, "R0.D0")
        assert p0.node == d0.node == 0
        assert d0.attn_gpus == (4, 5)
        assert worker(layout, "R0.P1").node == worker(layout, "R0.D1").node == 1

    def test_auto_resolves_by_mode(self):
        assert placement.place(two_by_two(), TOPO).policy == PlacementPolicy.PAIRED
        assert placement.place(afd_config(2, 2), TOPO).policy == PlacementPolicy.SEGREGATED

    def test_replicas_get_disjoint_gpus(self):
        layout = placement.place(shared_config(4, replicas=4), TOPO)
        gpus = [g for w in layout.workers for g in w.gpus]
        assert sorted(gpus) == list(range(16))
        assert [w.role for w in layout.workers] == [WorkerRole.UNIFIED] * 4

    def test_oversized_deployment(self):
        with pytest.raises(InvalidLayoutError):
            placement.place(shared_config(4, replicas=5), TOPO)

    def test_worker_wider_than_a_node_is_tier_degraded(self):
        config = DeploymentConfig(mode=ServingMode.AGG_CHUNKED, worker=WorkerPlan(gpus=12, tp=4, dp=3, ep=4))
        layout = placement.place(config, TOPO)
        assert layout.tier_degraded
        assert layout.workers[0].gpus == tuple(range(12))

    def test_by_role(self):
        layout = placement.place(two_by_two(), TOPO)
        assert [w.name for w in layout.by_role(WorkerRole.DECODE, 0)] == ["R0.D0", "R0.D1"]


class TestKvTransfer:
    flow = KvFlow(bytes=1e9, tokens=1000)

    def test_paired_stays_on_the_fast_tier(self):
        seg = placement.kv_transfer_time(placement.place(two_by_two(), TOPO, PlacementPolicy.SEGREGATED),
                                         self.flow, TOPO)
        paired = placement.kv_transfer_time(placement.place(two_by_two(), TOPO, PlacementPolicy.PAIRED),
                                            self.flow, TOPO)
        assert seg == pytest.approx(1e9 / 50e9 + 2e-6)
        assert paired == pytest.approx(1e9 / 400e9 + 2e-6)

    def test_sharding_splits_over_attention_ranks(self):
        layout = placement.place(two_by_two(), TOPO, PlacementPolicy.SEGREGATED)
        whole = placement.kv_transfer_time(layout, self.flow, TOPO)
        sharded = placement.kv_transfer_time(layout, self.flow, TOPO, sharded=True)
        assert sharded == pytest.approx(0.5e9 / 50e9 + 2e-6)
        assert sharded < whole

    def test_worst_pair(self):
        layout = placement.place(two_by_two(), TOPO, PlacementPolicy.PAIRED)
        assert placement.worst_kv_transfer_time(layout, self.flow, TOPO) == pytest.approx(1e9 / 400e9 + 2e-6)

    def test_needs_a_disaggregated_layout(self):
        layout = placement.place(afd_config(2, 2), TOPO)
        with pytest.raises(InvalidLayoutError):
            placement.kv_transfer_time(layout, self.flow, TOPO)


def test_afd_tier_follows_worker_width():
    cluster = toy_cluster()
    assert placement.afd_tier(cluster, WorkerPlan(gpus=8, attn_gpus=2, ffn_gpus=6)) == Tier.SCALEUP
    assert placement.afd_tier(cluster, WorkerPlan(gpus=16, attn_gpus=8, ffn_gpus=8)) == Tier.SCALEOUT


def test_assign_tiers_matches_frequency_to_bandwidth():
    patterns = {"kv": 1.0, "a2f": 2 * 94.0, "f2a": 2 * 94.0}
    tiers = {"scaleout": 50e9, "scaleup": 900e9}
    assert placement.assign_tiers(patterns, tiers) == {"a2f": "scaleup", "f2a": "scaleout", "kv": "scaleout"}
    assert placement.assign_tiers({"kv": 1.0, "a2f": 188.0}, tiers) == {"a2f": "scaleup", "kv": "scaleout"}
    assert placement.assign_tiers(patterns, {}) == {}
