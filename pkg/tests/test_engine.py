import math

import pytest

from afdx.schemas.deployment import ServingMode, WorkerPlan
from afdx.schemas.estimate import InfeasibleReason
from afdx.services import engine, pipeline
from tests.factories import afd_config, shared_config, toy_cluster, toy_context, toy_model, toy_workload


class TestLayoutRules:
    def test_valid_layouts(self, ctx):
        assert engine.layout_problems(afd_config(2, 2), ctx) == []
        assert engine.layout_problems(shared_config(4, mode=ServingMode.DISAGG_PD), ctx) == []

    def test_afd_split_must_add_up(self, ctx):
        config = afd_config(2, 2).model_copy(update={
            "worker": WorkerPlan(gpus=4, tp=2, dp=2, ep=2, attn_gpus=2, ffn_gpus=2),
        })
        assert "worker: tp x dp must equal A" in engine.layout_problems(config, ctx)

    def test_depth_follows_duplex(self, ctx):
        assert engine.layout_problems(afd_config(2, 2, M=4), ctx) == []
        assert "worker: M=3 needs a half-duplex AFD tier" in engine.layout_problems(afd_config(2, 2, M=3), ctx)
        half = toy_context(cluster=toy_cluster(scaleup_duplex="half"))
        assert engine.layout_problems(afd_config(2, 2, M=3), half) == []
        assert "worker: M=4 needs a full-duplex AFD tier" in engine.layout_problems(afd_config(2, 2, M=4), half)

    def test_mode_and_plan_must_agree(self, ctx):
        config = shared_config(4).model_copy(update={"mode": ServingMode.AGG_AFD})
        assert engine.layout_problems(config, ctx)

    def test_disaggregated_modes_need_both_pools(self, ctx):
        config = shared_config(4, mode=ServingMode.DISAGG_PD, prefill_workers=0)
        assert "disaggregated modes need prefill and decode workers" in engine.layout_problems(config, ctx)

    def test_invalid_layout_verdict(self, ctx):
        estimate = engine.evaluate(shared_config(4, replicas=8), ctx)
        assert not estimate.feasible
        assert estimate.reason == InfeasibleReason.INVALID_LAYOUT
        assert estimate.detail.notes


class TestEvaluate:
    def test_feasible_estimate(self, ctx):
        estimate = engine.evaluate(afd_config(2, 2), ctx, 1, 256)
        assert estimate.feasible
        assert estimate.reason is None
        assert estimate.per_user_rate == pytest.approx(1 / estimate.tpot)
        assert estimate.system_rate == pytest.approx(estimate.concurrency / estimate.tpot)
        assert estimate.detail.decode_stages is not None
        assert estimate.detail.afd_transfers_per_layer == 2
        assert estimate.detail.kv_flows_per_request == 0

    @pytest.mark.parametrize("config", [
        shared_config(4),
        afd_config(2, 2),
        shared_config(4, mode=ServingMode.DISAGG_PD),
        afd_config(2, 2, mode=ServingMode.DISAGG_AFD),
    ], ids=lambda c: c.mode.value)
    def test_doubling_replicas_on_a_doubled_cluster(self, config):
        one = engine.evaluate(config, toy_context(), 1, 256)
        doubled = config.model_copy(update={"replicas": 2 * config.replicas})
        two = engine.evaluate(doubled, toy_context(cluster=toy_cluster(num_gpus=32)), 1, 256)
        assert one.feasible and two.feasible
        assert two.per_user_rate == pytest.approx(one.per_user_rate)
        assert two.system_rate == pytest.approx(2 * one.system_rate)

    def test_replicas_add_up(self, ctx):
        one = engine.evaluate(shared_config(4), ctx, 1, 256)
        three = engine.evaluate(shared_config(4, replicas=3), ctx, 1, 256)
        assert three.per_user_rate == pytest.approx(one.per_user_rate)
        assert three.system_rate == pytest.approx(3 * one.system_rate)

    def test_deterministic(self, ctx):
        config = afd_config(2, 2, mode=ServingMode.DISAGG_AFD)
        assert engine.evaluate(config, ctx, 1, 128) == engine.evaluate(config, ctx, 1, 128)

    def test_concurrency_ceiling_when_nothing_binds(self, ctx):
        assert engine.evaluate(shared_config(4), ctx, 1, 64).concurrency == 64

    def test_tpot_slo_bounds_concurrency(self):
        loose = toy_context()
        low = engine.evaluate_at(shared_config(4), loose, 1).tpot
        high = engine.evaluate_at(shared_config(4), loose, 64).tpot
        assert low < high
        slo = (low + high) / 2
        tight = toy_context(workload=toy_workload(slo_tpot=slo))
        estimate = engine.evaluate(shared_config(4), tight, 1, 64)
        assert estimate.feasible
        assert estimate.concurrency < 64
        assert estimate.tpot <= slo

    def test_relaxing_the_slo_never_lowers_concurrency(self):
        base = engine.evaluate_at(shared_config(4), toy_context(), 16).tpot
        found = [
            engine.evaluate(shared_config(4), toy_context(workload=toy_workload(slo_tpot=base * f)), 1, 256).concurrency
            for f in (1.0, 1.5, 3.0)
        ]
        assert found == sorted(found)

    @pytest.mark.parametrize("config", [afd_config(2, 2, M=4), shared_config(4)], ids=["afd", "shared"])
    def test_more_bandwidth_never_slows_a_step(self, config):
        slow = engine.evaluate_at(config, toy_context(), 32)
        fast = engine.evaluate_at(config, toy_context(cluster=toy_cluster(scaleup_bw=800e9)), 32)
        assert fast.tpot <= slow.tpot
        assert fast.ttft <= slow.ttft

    def test_slo_violated(self):
        ctx = toy_context(workload=toy_workload(slo_tpot=1e-9))
        estimate = engine.evaluate(afd_config(2, 2), ctx)
        assert not estimate.feasible
        assert estimate.reason == InfeasibleReason.SLO_VIOLATED
        assert estimate.system_rate == 0

    def test_memory_wins_over_slo(self):
        tiny = toy_cluster(gpu={"name": "tiny", "peak_flops": 1e14, "hbm_capacity": 2**30, "hbm_bandwidth": 1e12})
        ctx = toy_context(workload=toy_workload(slo_tpot=1e-9), cluster=tiny)
        estimate = engine.evaluate(afd_config(2, 2), ctx)
        assert estimate.reason == InfeasibleReason.MEMORY_EXCEEDED

    def test_input_tokens_can_count_toward_throughput(self):
        plain = engine.evaluate_at(shared_config(4), toy_context(), 16)
        counted = engine.evaluate_at(shared_config(4), toy_context(count_input_tokens=True), 16)
        assert counted.system_rate == pytest.approx(plain.system_rate * (1 + 128 / 64))
        assert counted.per_user_rate == pytest.approx(plain.per_user_rate)

    @pytest.mark.parametrize("M", [1, 4])
    @pytest.mark.parametrize("c", [8, 64, 256])
    def test_split_never_beats_aggregation_without_limits(self, c, M):
        unlimited = toy_context(cluster=toy_cluster(
            gpu={"name": "roomy", "peak_flops": 1e14, "hbm_capacity": 2**50, "hbm_bandwidth": 1e12},
            scaleup_bw=1e18, scaleout_bw=1e18,
        ))
        split = engine.evaluate_at(afd_config(2, 2, M=M), unlimited, c)
        aggregated = engine.evaluate_at(shared_config(4), unlimited, c)
        assert split.feasible and aggregated.feasible
        assert split.system_rate <= aggregated.system_rate * (1 + 1e-9)


class TestModes:
    def test_chunked_ttft_counts_chunks(self):
        ctx = toy_context()
        config = shared_config(4).model_copy(update={"chunk_size": 64})
        estimate = engine.evaluate_at(config, ctx, 8)
        assert estimate.ttft == pytest.approx(math.ceil(128 / 64) * estimate.tpot)

    def test_disaggregated_ttft_includes_kv_shipment(self, ctx):
        estimate = engine.evaluate_at(shared_config(4, mode=ServingMode.DISAGG_PD), ctx, 8)
        detail = estimate.detail
        assert detail.kv_transfer_time > 0
        assert estimate.ttft == pytest.approx(detail.prefill_time + detail.kv_transfer_time)
        assert estimate.tpot == pytest.approx(detail.decode_time)
        assert detail.kv_flows_per_request == 1
        assert detail.layout is not None

    def test_disaggregated_concurrency_counts_every_decode_worker(self, ctx):
        config = shared_config(2, mode=ServingMode.DISAGG_PD, prefill_workers=2, decode_workers=2)
        estimate = engine.evaluate_at(config, ctx, 8)
        assert estimate.feasible
        assert estimate.concurrency == 16

    def test_prefill_starvation_is_an_slo_violation(self):
        ctx = toy_context(workload=toy_workload(isl=8192, osl=1))
        config = shared_config(2, mode=ServingMode.DISAGG_PD, decode_workers=4)
        estimate = engine.evaluate_at(config, ctx, 64)
        assert estimate.detail.prefill_workers_needed > 1
        assert estimate.reason == InfeasibleReason.SLO_VIOLATED

    @pytest.mark.parametrize("mode", [ServingMode.DISAGG_PD, ServingMode.DISAGG_AFD])
    def test_prefill_time_ignores_cached_prefix(self, mode):
        config = afd_config(2, 2, mode=mode) if mode.is_afd else shared_config(4, mode=mode)
        short = engine.evaluate_at(config, toy_context(workload=toy_workload(prefix=0)), 4)
        long = engine.evaluate_at(config, toy_context(workload=toy_workload(prefix=8192)), 4)
        assert long.detail.prefill_time == pytest.approx(short.detail.prefill_time)
        assert long.detail.kv_transfer_time > short.detail.kv_transfer_time

    def test_afd_decode_pipelines_microbatches(self, ctx):
        deep = engine.evaluate_at(afd_config(2, 2, M=4), ctx, 64)
        detail = deep.detail
        assert detail.decode_stages.microbatches == 4
        assert detail.decode_time == pytest.approx(pipeline.pipelined_latency(detail.decode_stages))
        shallow = engine.evaluate_at(afd_config(2, 2, M=4), ctx, 2)
        assert shallow.detail.decode_stages.microbatches == 2

    def test_aggregated_afd_step_carries_a_prefill_chunk(self, ctx):
        estimate = engine.evaluate_at(afd_config(2, 2, M=4), ctx, 64)
        detail = estimate.detail
        riding = pipeline.pipelined_latency(detail.prefill_stages)
        assert riding > 0
        assert estimate.tpot == pytest.approx(detail.decode_time + riding)
        assert estimate.ttft == pytest.approx(math.ceil(128 / 2048) * estimate.tpot)

    def test_disaggregated_afd_step_is_decode_only(self, ctx):
        estimate = engine.evaluate_at(afd_config(2, 2, M=4, mode=ServingMode.DISAGG_AFD), ctx, 64)
        detail = estimate.detail
        assert estimate.tpot == pytest.approx(pipeline.pipelined_latency(detail.decode_stages))
        assert estimate.tpot == pytest.approx(detail.decode_time)


class TestFlowCounts:
    @pytest.mark.parametrize("mode", [ServingMode.AGG_AFD, ServingMode.DISAGG_AFD])
    def test_afd_traffic_grows_with_depth_kv_does_not(self, mode):
        shallow = engine.evaluate_at(afd_config(2, 2, mode=mode), toy_context(model=toy_model(layers=4)), 8)
        deep = engine.evaluate_at(afd_config(2, 2, mode=mode), toy_context(model=toy_model(layers=40)), 8)
        for estimate in (shallow, deep):
            assert estimate.detail.afd_transfers_per_layer == 2
            assert estimate.detail.kv_flows_per_request == (1 if mode.is_disagg else 0)
        assert deep.detail.afd_transfers_per_request == 10 * shallow.detail.afd_transfers_per_request

    def test_per_request_count_covers_every_step(self, ctx):
        estimate = engine.evaluate_at(afd_config(2, 2, mode=ServingMode.DISAGG_AFD), ctx, 8)
        # 64 decode steps plus one prefill step, 4 layers, A2F and F2A each
        assert estimate.detail.afd_transfers_per_request == 2 * 4 * (64 + 1)

    def test_half_duplex_still_issues_both_transfers(self):
        half = toy_context(cluster=toy_cluster(scaleup_duplex="half"))
        estimate = engine.evaluate_at(afd_config(2, 2, M=3), half, 8)
        assert estimate.detail.decode_stages.merged_comm
        assert estimate.detail.afd_transfers_per_layer == 2

    def test_shared_workers_issue_no_afd_traffic(self, ctx):
        estimate = engine.evaluate_at(shared_config(4, mode=ServingMode.DISAGG_PD), ctx, 8)
        assert estimate.detail.afd_transfers_per_layer == 0
        assert estimate.detail.afd_transfers_per_request == 0
        assert estimate.detail.kv_flows_per_request == 1


def test_request_kv_flow(ctx):
    flow = engine.request_kv_flow(ctx)
    assert flow.tokens == 128
    assert flow.bytes == pytest.approx(128 * 4 * 2 * 2 * 64 * 2)


def test_prefill_workers_needed():
    assert engine.prefill_workers_needed(4, 32, 0.1, 100, 0.01) == 13
    assert engine.prefill_workers_needed(4, 32, 0.2, 100, 0.01) == 26
    assert engine.prefill_workers_needed(4, 32, 0.1, 10**9, 0.01) == 1
    assert engine.prefill_workers_needed(4, 32, 0.1, 100, 0.01, parallel_requests=4) == 4
    assert engine.prefill_workers_needed(4, 32, math.inf, 100, 0.01) == math.inf
    assert engine.prefill_workers_needed(4, 32, 0.1, 100, 0.0) == math.inf
