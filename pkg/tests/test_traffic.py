import itertools
from fractions import Fraction

import numpy as np
import pytest

from afdx.exceptions import InvalidLayoutError, UnbalancedHostingError
from afdx.schemas.deployment import Transport
from afdx.schemas.network import Topology
from afdx.schemas.traffic import TrafficKind, TrafficKnobs
from afdx.services import netsim, traffic
from tests.factories import toy_cluster, toy_model, toy_workload


def enumerated_probability(E: int, k: int, N: int) -> Fraction:
    """Share of all top-k expert sets that touch rank 0's experts."""
    rank0 = set(range(E // N))
    sets = list(itertools.combinations(range(E), k))
    return Fraction(sum(1 for s in sets if rank0 & set(s)), len(sets))


ROUTING_GRID = [
    (E, k, N)
    for E in range(1, 17)
    for N in range(1, E + 1)
    if E % N == 0
    for k in range(1, min(4, E) + 1)
]


@pytest.mark.parametrize("E, k, N", ROUTING_GRID)
def test_activation_probability_matches_enumeration(E, k, N):
    assert traffic.activation_probability(E, k, N) == enumerated_probability(E, k, N)


@pytest.mark.parametrize("E, k, N", [(8, 8, 2), (12, 6, 4), (16, 6, 8)])
def test_wide_top_k_matches_enumeration(E, k, N):
    assert traffic.activation_probability(E, k, N) == enumerated_probability(E, k, N)


def test_known_probability():
    assert traffic.activation_probability(8, 2, 4) == Fraction(13, 28)
    assert traffic.activation_probability(8, 2, 1) == 1


def test_unbalanced_hosting_is_rejected():
    with pytest.raises(UnbalancedHostingError):
        traffic.activation_probability(8, 2, 3)
    with pytest.raises(UnbalancedHostingError):
        traffic.rank_probabilities(8, 2, 3)


def test_uneven_hosting_uses_per_rank_counts():
    assert traffic.hosted_counts(8, 3) == [3, 3, 2]
    probs = traffic.rank_probabilities(8, 2, 3, allow_uneven=True)
    assert probs[0] == probs[1] == traffic.hosting_probability(8, 2, 3)
    assert probs[2] == traffic.hosting_probability(8, 2, 2) < probs[0]


def test_large_uneven_split_is_admitted():
    probs = traffic.rank_probabilities(256, 8, 126, allow_uneven=True)
    assert len(probs) == 126
    assert sum(traffic.hosted_counts(256, 126)) == 256


def test_split_tokens_gives_remainder_to_low_ranks():
    assert traffic.split_tokens(10, 4) == [3, 3, 2, 2]
    assert traffic.split_tokens(2, 4) == [1, 1, 0, 0]


class TestMatrices:
    model = toy_model()
    per_token = 512 * 2 + TrafficKnobs().meta_bytes(2)

    def test_dense_dispatch_sends_everything_everywhere(self):
        m = traffic.build_a2f(64, self.model, 2, 4, Transport.DENSE)
        assert m.kind == TrafficKind.A2F
        assert (m.senders, m.receivers) == (2, 4)
        assert np.allclose(m.array, 32 * self.per_token)

    def test_sparse_dispatch_scales_by_activation(self):
        m = traffic.build_a2f(64, self.model, 2, 4, Transport.SPARSE)
        p = float(Fraction(13, 28))
        assert np.allclose(m.column_sums(), 64 * self.per_token * p)
        assert m.array.sum() == pytest.approx(float(traffic.expected_deliveries(64, 8, 2, 4)) * self.per_token)

    def test_combine_is_transposed_without_metadata(self):
        a2f = traffic.build_a2f(64, self.model, 2, 4, Transport.SPARSE)
        f2a = traffic.build_f2a(64, self.model, 2, 4)
        assert f2a.kind == TrafficKind.F2A
        assert (f2a.senders, f2a.receivers) == (4, 2)
        assert f2a.array.sum() < a2f.array.sum()
        assert np.allclose(f2a.array.T * self.per_token, a2f.array * 512 * 2)

    def test_layouts_need_both_sides(self):
        with pytest.raises(InvalidLayoutError):
            traffic.build_a2f(8, self.model, 0, 4, Transport.SPARSE)
        with pytest.raises(InvalidLayoutError):
            traffic.build_f2a(8, self.model, 2, 0)

    def test_frame_dump(self):
        m = traffic.build_a2f(16, self.model, 2, 4, Transport.SPARSE)
        df = traffic.to_frame([m])
        assert list(df.columns) == ["sender", "receiver", "bytes", "kind"]
        assert len(df) == 8
        assert set(df["kind"]) == {"A2F"}

    def test_matrix_flows_require_matching_groups(self):
        m = traffic.build_a2f(16, self.model, 2, 4, Transport.SPARSE)
        flows = traffic.matrix_flows(m, [0, 1], [2, 3, 4, 5], start_id=10)
        assert [f.flow_id for f in flows] == list(range(10, 18))
        with pytest.raises(InvalidLayoutError):
            traffic.matrix_flows(m, [0], [2, 3, 4, 5])


class TestBottleneckSide:
    """Few attention ranks choke on egress; few FFN ranks choke on ingress."""
    model = toy_model()
    topo = Topology.from_cluster(toy_cluster())

    def bottlenecks(self, A, F, tokens=256):
        m = traffic.build_a2f(tokens, self.model, A, F, Transport.SPARSE)
        flows = traffic.matrix_flows(m, list(range(A)), list(range(A, A + F)))
        return {t.bottleneck for t in netsim.simulate(flows, self.topo).traces}

    def test_fan_out(self):
        assert self.bottlenecks(1, 4) == {"gpu0.scaleup.egress"}

    def test_fan_in(self):
        assert self.bottlenecks(4, 1) == {"gpu4.scaleup.ingress"}

    def test_matrix_sums_show_the_same_asymmetry(self):
        fan_out = traffic.build_a2f(256, self.model, 1, 4, Transport.SPARSE)
        assert fan_out.row_sums().max() > fan_out.column_sums().max()
        fan_in = traffic.build_a2f(256, self.model, 4, 1, Transport.SPARSE)
        assert fan_in.column_sums().max() > fan_in.row_sums().max()


def test_sampled_routes_match_expectation():
    tokens = 20_000
    counts = traffic.sample_deliveries(tokens, 8, 2, 4, seed=7)
    expected = tokens * 13 / 28
    assert counts.shape == (4,)
    assert np.all(np.abs(counts - expected) < 0.03 * expected)


def test_sampling_is_seeded():
    a = traffic.sample_deliveries(500, 16, 4, 4, seed=3)
    b = traffic.sample_deliveries(500, 16, 4, 4, seed=3)
    assert np.array_equal(a, b)


def test_kv_flow_counts_prefix_and_prompt():
    wl = toy_workload(prefix=1000, isl=128)
    flow = traffic.kv_flow(wl, toy_model(), bytes_per_token=2048, state=100)
    assert flow.tokens == 1128
    assert flow.bytes == 1128 * 2048 + 100
