import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from afdx.exceptions import UnreachableEndpointError
from afdx.schemas.cluster import Duplex
from afdx.schemas.network import Flow, Topology
from afdx.services import netsim
from tests.factories import toy_cluster

TOPO = Topology.from_cluster(toy_cluster())
NO_FLOOR = TOPO.model_copy(update={"latency_floor": 0.0})


def water_filling(n1: int, n2: int, n12: int, c1: float, c2: float) -> tuple[float, float, float]:
    """Closed-form max-min rates of r1-only, r2-only and shared flows on two resources."""
    share1 = c1 / (n1 + n12) if n1 + n12 else math.inf
    share2 = c2 / (n2 + n12) if n2 + n12 else math.inf
    if share1 <= share2:
        rest = (c2 - n12 * share1) / n2 if n2 else math.inf
        return share1, rest, share1
    rest = (c1 - n12 * share2) / n1 if n1 else math.inf
    return rest, share2, share2


@settings(max_examples=200, deadline=None)
@given(
    n1=st.integers(0, 4),
    n2=st.integers(0, 4),
    n12=st.integers(0, 4),
    c1=st.floats(1.0, 1000.0),
    c2=st.floats(1.0, 1000.0),
)
def test_two_resource_instances_match_water_filling(n1, n2, n12, c1, c2):
    assume(n1 + n2 + n12 > 0)
    resources = [["r1"]] * n1 + [["r2"]] * n2 + [["r1", "r2"]] * n12
    rates, _ = netsim.max_min_rates(resources, {"r1": c1, "r2": c2})
    only1, only2, both = water_filling(n1, n2, n12, c1, c2)
    expected = [only1] * n1 + [only2] * n2 + [both] * n12
    assert rates == pytest.approx(expected, rel=1e-9)


def test_unconstrained_flows_are_infinite():
    rates, binding = netsim.max_min_rates([["r"]], {"r": math.inf})
    assert rates == [math.inf]
    assert binding == [None]


def test_single_flow_time():
    result = netsim.simulate([Flow(src=0, dst=1, bytes=4e9)], TOPO)
    assert result.makespan == pytest.approx(4e9 / 400e9 + 2e-6)
    assert result.traces[0].bottleneck == "gpu0.scaleup.egress"


def test_cross_node_flow_uses_scale_out():
    result = netsim.simulate([Flow(src=0, dst=8, bytes=1e9)], TOPO)
    assert result.makespan == pytest.approx(1e9 / 50e9 + 2e-6)
    assert "scaleout" in result.traces[0].bottleneck


def test_scale_up_is_eighteen_times_faster():
    topo = NO_FLOOR.model_copy(update={"scaleup_bw": 450e9, "scaleout_bw": 25e9})
    slow = netsim.simulate([Flow(src=0, dst=8, bytes=4e9)], topo).makespan
    fast = netsim.simulate([Flow(src=0, dst=1, bytes=4e9)], topo).makespan
    assert slow == pytest.approx(0.16)
    assert fast == pytest.approx(8.888889e-3)
    assert slow / fast == pytest.approx(18)


def test_equal_flows_halve_a_shared_egress():
    flows = [Flow(flow_id=i, src=0, dst=d, bytes=1e9) for i, d in enumerate((1, 2))]
    times = netsim.simulate(flows, NO_FLOOR).per_flow_time
    assert list(times) == pytest.approx([2e9 / 400e9] * 2)


def test_fan_out_is_bound_by_sender_egress():
    flows = [Flow(flow_id=i, src=0, dst=d, bytes=1e9) for i, d in enumerate(range(1, 5))]
    assert netsim.simulate(flows, NO_FLOOR).makespan == pytest.approx(4e9 / 400e9)


def test_zero_byte_flow_costs_the_latency_floor():
    assert netsim.simulate([Flow(src=0, dst=1, bytes=0)], TOPO).makespan == pytest.approx(2e-6)


@settings(max_examples=50, deadline=None)
@given(specs=st.lists(
    st.tuples(st.integers(0, 7), st.integers(0, 7), st.floats(1e3, 1e9)).filter(lambda t: t[0] != t[1]),
    min_size=1,
    max_size=10,
))
def test_makespan_respects_the_busiest_port(specs):
    flows = [Flow(flow_id=i, src=s, dst=d, bytes=b) for i, (s, d, b) in enumerate(specs)]
    out, into = [0.0] * 8, [0.0] * 8
    for s, d, b in specs:
        out[s] += b
        into[d] += b
    bound = max(out + into) / 400e9
    assert netsim.simulate(flows, NO_FLOOR).makespan >= bound * (1 - 1e-9)


def test_short_flow_frees_capacity_for_long_one():
    flows = [Flow(flow_id=0, src=0, dst=1, bytes=1e9), Flow(flow_id=1, src=0, dst=2, bytes=3e9)]
    times = netsim.simulate(flows, NO_FLOOR).per_flow_time
    assert times[0] == pytest.approx(1e9 / 200e9)
    assert times[1] == pytest.approx(1e9 / 200e9 + 2e9 / 400e9)


def test_half_duplex_shares_one_port():
    flows = [Flow(flow_id=0, src=0, dst=1, bytes=1e9), Flow(flow_id=1, src=1, dst=2, bytes=1e9)]
    full = netsim.simulate(flows, NO_FLOOR).makespan
    half = netsim.simulate(flows, NO_FLOOR.model_copy(update={"scaleup_duplex": Duplex.HALF})).makespan
    assert full == pytest.approx(1e9 / 400e9)
    assert half == pytest.approx(1e9 / 200e9)


flow_lists = st.lists(
    st.tuples(st.integers(0, 15), st.integers(0, 15), st.floats(1e3, 1e9)).filter(lambda t: t[0] != t[1]),
    min_size=1,
    max_size=8,
)


@settings(max_examples=50, deadline=None)
@given(specs=flow_lists, factor=st.floats(0.1, 10.0))
def test_capacity_scaling_rescales_times(specs, factor):
    flows = [Flow(flow_id=i, src=s, dst=d, bytes=b) for i, (s, d, b) in enumerate(specs)]
    base = netsim.simulate(flows, NO_FLOOR).per_flow_time
    scaled = netsim.simulate(flows, NO_FLOOR.scaled(factor)).per_flow_time
    assert [t * factor for t in scaled] == pytest.approx(list(base), rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(specs=flow_lists)
def test_every_flow_finishes_no_faster_than_alone(specs):
    flows = [Flow(flow_id=i, src=s, dst=d, bytes=b) for i, (s, d, b) in enumerate(specs)]
    together = netsim.simulate(flows, TOPO).per_flow_time
    for flow, t in zip(flows, together):
        alone = netsim.simulate([flow], TOPO).makespan
        assert t >= alone * (1 - 1e-9)


def test_missing_scale_out_tier():
    topo = TOPO.model_copy(update={"scaleout_bw": None})
    with pytest.raises(UnreachableEndpointError):
        netsim.simulate([Flow(src=0, dst=9, bytes=1.0)], topo)


def test_endpoint_outside_topology():
    with pytest.raises(UnreachableEndpointError):
        netsim.simulate([Flow(src=0, dst=16, bytes=1.0)], TOPO)


def test_flows_need_distinct_endpoints():
    with pytest.raises(ValueError):
        Flow(src=3, dst=3, bytes=1.0)


def test_traces_frame():
    result = netsim.simulate([Flow(flow_id=0, src=0, dst=1, bytes=1e6), Flow(flow_id=1, src=2, dst=3, bytes=1e6)], TOPO)
    df = netsim.traces_frame(result)
    assert list(df["flow_id"]) == [0, 1]
    assert list(df.columns) == ["flow_id", "src", "dst", "bytes", "start", "finish", "bottleneck"]


def test_ring_allreduce():
    assert netsim.ring_allreduce_time(TOPO, 1, 1e6) == 0.0
    expected = 2 * 3 * (4e6 / 4) / 400e9 + 2 * 3 * 2e-6
    assert netsim.ring_allreduce_time(TOPO, 4, 4e6) == pytest.approx(expected)
