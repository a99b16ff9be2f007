import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afdx.exceptions import InfeasibleConfigError, UnmatchableSplitError
from afdx.schemas.deployment import ServingMode, WorkerPlan
from afdx.schemas.estimate import InfeasibleReason, PerfEstimate
from afdx.schemas.scenario import EvalContext
from afdx.schemas.search import SearchSpace
from afdx.services import search
from tests.factories import load_bundled, shared_config, toy_cluster, toy_context, toy_model, toy_scenario, toy_workload

CONFIG = shared_config(2)


def point(per_user: float, system: float, feasible: bool = True) -> PerfEstimate:
    if not feasible:
        return PerfEstimate(config=CONFIG, feasible=False, reason=InfeasibleReason.SLO_VIOLATED)
    return PerfEstimate(config=CONFIG, feasible=True, per_user_rate=per_user, system_rate=system)


def coords(points):
    return sorted(p.point for p in points)


class TestPareto:
    def test_incomparable_points_all_survive(self):
        front = search.pareto([point(1, 10), point(2, 5), point(1.5, 7)])
        assert [p.point for p in front] == [(1, 10), (1.5, 7), (2, 5)]

    def test_dominated_point_dropped(self):
        assert coords(search.pareto([point(1, 10), point(1, 9)])) == [(1, 10)]

    def test_ties_are_kept(self):
        assert coords(search.pareto([point(1, 10), point(1, 10), point(0.5, 5)])) == [(1, 10), (1, 10)]

    def test_infeasible_points_ignored(self):
        assert coords(search.pareto([point(1, 1), point(0, 0, feasible=False)])) == [(1, 1)]
        assert search.pareto([point(0, 0, feasible=False)]) == []


grid_points = st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), max_size=200)


@settings(max_examples=100, deadline=None)
@given(raw=grid_points)
def test_pareto_matches_quadratic_oracle(raw):
    points = [point(u, s) for u, s in raw]
    expected = [p for p in points if not any(search.dominates(q, p) for q in points)]
    assert coords(search.pareto(points)) == coords(expected)


@settings(max_examples=50, deadline=None)
@given(a=grid_points, b=grid_points)
def test_merging_frontiers_equals_frontier_of_union(a, b):
    left, right = [point(*x) for x in a], [point(*x) for x in b]
    merged = search.merge_frontiers(search.pareto(left), search.pareto(right))
    assert coords(merged) == coords(search.pareto(left + right))


class TestEnumeration:
    def test_closed_form_count(self, ctx):
        space = SearchSpace(modes=("agg_chunked",), replica_min=1, replica_max=8, tp_candidates=(1, 2, 4, 8))
        configs, truncated = search.enumerate_configs(space, ctx)
        # g in {1, 2, 4, 8} divides 8 experts; tp | g gives 1 + 2 + 3 + 4 plans
        assert len(configs) == 10
        assert not truncated
        assert all(c.replicas == 16 // c.worker.gpus for c in configs)

    def test_truncation(self, ctx):
        space = SearchSpace(modes=("agg_chunked",), replica_min=1, replica_max=8, tp_candidates=(1, 2, 4, 8))
        configs, truncated = search.enumerate_configs(space, ctx, max_configs=3)
        assert len(configs) == 3
        assert truncated

    def test_order_is_deterministic(self, ctx):
        space = toy_scenario().search
        first, _ = search.enumerate_configs(space, ctx)
        again, _ = search.enumerate_configs(space, ctx)
        assert first == again

    def test_afd_replicas_need_two_gpus(self, ctx):
        space = SearchSpace(modes=("agg_afd",), replica_min=1, replica_max=4, tp_candidates=(1,), microbatches=(1,))
        configs, _ = search.enumerate_configs(space, ctx)
        assert configs
        assert min(c.worker.gpus for c in configs) == 2
        assert all(c.worker.attn_gpus + c.worker.ffn_gpus == c.worker.gpus for c in configs)

    def test_depths_follow_duplex(self, ctx):
        space = SearchSpace(microbatches=(1, 3, 4))
        assert search.depth_candidates(space, ctx, 4) == [1, 4]
        half = toy_context(cluster=toy_cluster(scaleup_duplex="half"))
        assert search.depth_candidates(space, half, 4) == [1, 3]

    def test_disaggregated_pools_fill_the_replica(self, ctx):
        space = SearchSpace(modes=("disagg_pd",), replica_min=4, replica_max=4, tp_candidates=(1,), worker_sizes=(1, 2))
        configs, _ = search.enumerate_configs(space, ctx)
        assert configs
        for c in configs:
            assert c.gpus_per_replica == 4
            assert 1 <= c.prefill_workers <= space.max_workers
            assert 1 <= c.decode_workers <= space.max_workers

    def test_single_node_cluster_gets_single_node_layouts(self):
        ctx = toy_context(cluster=toy_cluster(num_gpus=8))
        space = SearchSpace(modes=("agg_chunked",), replica_min=8, replica_max=8)
        configs, _ = search.enumerate_configs(space, ctx)
        assert [c.worker.tp for c in configs] == [1, 2, 4, 8]
        assert all(c.replicas == 1 and c.worker.gpus == 8 for c in configs)

    def test_symmetric_split_is_enumerated(self):
        ctx = toy_context(model=toy_model(num_experts=16), cluster=toy_cluster(num_gpus=32))
        space = SearchSpace(tp_candidates=(1,), microbatches=(1,))
        splits = {(p.attn_gpus, p.ffn_gpus) for p in search.afd_plans(32, space, ctx)}
        assert (16, 16) in splits
        assert (8, 24) not in splits

    def test_uneven_expert_pool_when_allowed(self):
        ctx = toy_context(model=toy_model(num_experts=256), cluster=toy_cluster(num_gpus=128))
        uneven = SearchSpace(tp_candidates=(1,), microbatches=(1,), allow_uneven_experts=True)
        assert (2, 126) in {(p.attn_gpus, p.ffn_gpus) for p in search.afd_plans(128, uneven, ctx)}
        even = uneven.model_copy(update={"allow_uneven_experts": False})
        assert (2, 126) not in {(p.attn_gpus, p.ffn_gpus) for p in search.afd_plans(128, even, ctx)}

    def test_uneven_experts_need_opt_in(self, ctx):
        assert search.shared_plans(3, SearchSpace(), ctx) == []
        assert search.shared_plans(3, SearchSpace(allow_uneven_experts=True, tp_candidates=(1,)), ctx)


class TestRateMatchSplit:
    @pytest.mark.parametrize("g", range(2, 9))
    def test_smallest_balanced_split(self, ctx, g):
        def balanced(A):
            if 8 % (g - A):
                return False
            s_attn, s_ffn, fits = search.split_balance(A, g, ctx)
            return s_attn <= s_ffn and fits

        expected = next((A for A in range(1, g) if balanced(A)), None)
        if expected is None:
            with pytest.raises(UnmatchableSplitError):
                search.rate_match_split(g, ctx)
        else:
            assert search.rate_match_split(g, ctx) == (expected, g - expected)

    def test_one_gpu_cannot_split(self, ctx):
        with pytest.raises(UnmatchableSplitError):
            search.rate_match_split(1, ctx)

    def test_cheap_attention_keeps_the_pool_small(self):
        ctx = EvalContext.from_scenario(load_bundled("desk/mla-sparse-split.yaml"))
        A, F = search.rate_match_split(16, ctx, allow_uneven=True)
        assert A + F == 16
        assert A / 16 <= 0.25

    def test_long_prefix_hybrid_turns_attention_heavy(self):
        ctx = EvalContext.from_scenario(load_bundled("desk/mamba-split.yaml"))
        A, _ = search.rate_match_split(16, ctx, allow_uneven=True)
        assert A / 16 >= 0.5

    def test_split_tp_is_a_power_of_two(self, ctx):
        assert search.split_tp(12, ctx) == 4
        assert search.split_tp(7, ctx) == 1
        assert search.split_tp(16, ctx) == 8


class TestRateMatchPd:
    plan = WorkerPlan(gpus=4, tp=1, dp=4, ep=4)

    def test_long_outputs_need_one_prefill_worker(self):
        ctx = toy_context(workload=toy_workload(osl=10**6))
        assert search.rate_match_pd(ctx, 1, self.plan, self.plan) == 1

    def test_decode_pool_larger_than_cluster(self, ctx):
        with pytest.raises(InfeasibleConfigError):
            search.rate_match_pd(ctx, 4, self.plan, self.plan)

    def test_matched_pool_too_large(self):
        ctx = toy_context(workload=toy_workload(isl=8192, osl=1))
        with pytest.raises(InfeasibleConfigError):
            search.rate_match_pd(ctx, 3, self.plan, self.plan)


class TestRunSearch:
    def test_frontier_is_non_dominated(self):
        scenario = toy_scenario(modes=("agg_chunked", "agg_afd", "disagg_pd"), concurrency_max=64)
        ctx = EvalContext.from_scenario(scenario)
        result = search.run_search(scenario.search, ctx, threads=1)
        assert result.enumerated == len(result.points)
        assert result.frontier
        for p in result.frontier:
            assert p.feasible
            assert p in result.points
            assert not any(search.dominates(q, p) for q in result.feasible)
        rates = [p.per_user_rate for p in result.frontier]
        assert rates == sorted(rates)

    def test_concurrency_sweep_adds_points(self):
        scenario = toy_scenario(modes=("agg_chunked",), concurrency_max=64)
        ctx = EvalContext.from_scenario(scenario)
        plain = search.run_search(scenario.search, ctx, threads=1)
        swept = search.run_search(scenario.search.model_copy(update={"sweep_concurrency": True}), ctx, threads=1)
        assert len(swept.points) > len(plain.points)
        assert len(swept.frontier) >= len(plain.frontier)

    def test_memory_flip_only_split_layout_fits(self):
        scenario = load_bundled("desk/memory-flip.yaml")
        result = search.run_search(scenario.search, EvalContext.from_scenario(scenario), threads=1)
        assert result.feasible
        assert {p.config.mode for p in result.feasible} == {ServingMode.AGG_AFD}
        assert result.reasons().get(InfeasibleReason.MEMORY_EXCEEDED.value, 0) > 0
