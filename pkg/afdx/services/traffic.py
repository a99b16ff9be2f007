"""
afd-explorer - Traffic Service

Bipartite MoE-Dispatch (A2F) and MoE-Combine (F2A) matrices under uniform
top-k routing, plus the per-request KV shipment of P/D disaggregation.
"""
import math
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from afdx.exceptions import InvalidLayoutError, UnbalancedHostingError
from afdx.schemas.deployment import Transport
from afdx.schemas.model import ModelArch
from afdx.schemas.network import Flow
from afdx.schemas.traffic import KvFlow, TrafficKind, TrafficKnobs, TrafficMatrix
from afdx.schemas.workload import Workload


def hosting_probability(E: int, k: int, hosted: int) -> Fraction:
    """Chance that a uniform top-k set touches at least one of `hosted` experts."""
    if k > E:
        raise ValueError(f"top_k {k} exceeds num_experts {E}")
    if hosted <= 0:
        return Fraction(0)
    return 1 - Fraction(math.comb(E - hosted, k), math.comb(E, k))


def activation_probability(E: int, k: int, N: int) -> Fraction:
    """
    Probability that a token's top-k experts hit a given rank of N hosting E/N each.

    Raises:
        UnbalancedHostingError: N does not divide E
    """
    if N <= 0 or E % N:
        raise UnbalancedHostingError(f"unbalanced expert hosting: {E} experts on {N} ranks")
    return hosting_probability(E, k, E // N)


def hosted_counts(E: int, N: int) -> list[int]:
    """Experts per rank; the first E mod N ranks host one extra."""
    base, extra = divmod(E, N)
    return [base + (1 if r < extra else 0) for r in range(N)]


def rank_probabilities(E: int, k: int, N: int, allow_uneven: bool = False) -> list[Fraction]:
    if E % N == 0:
        return [activation_probability(E, k, N)] * N
    if not allow_uneven:
        raise UnbalancedHostingError(f"unbalanced expert hosting: {E} experts on {N} ranks")
    return [hosting_probability(E, k, h) for h in hosted_counts(E, N)]


def split_tokens(tokens: int, senders: int) -> list[int]:
    """Even split with the remainder going to the lowest ranks."""
    base, extra = divmod(tokens, senders)
    return [base + (1 if s < extra else 0) for s in range(senders)]


def _check_layout(A: int, F: int) -> None:
    if A < 1 or F < 1:
        raise InvalidLayoutError(f"AFD layout needs A >= 1 and F >= 1, got A={A} F={F}")


def build_a2f(
    tokens: int,
    model: ModelArch,
    A: int,
    F: int,
    transport: Transport,
    knobs: Optional[TrafficKnobs] = None,
    allow_uneven: bool = False,
) -> TrafficMatrix:
    """Dispatch matrix: hidden state plus routing metadata, A senders by F receivers."""
    _check_layout(A, F)
    knobs = knobs or TrafficKnobs()
    per_token = model.hidden_dim * model.act_bytes + knobs.meta_bytes(model.top_k)
    probs = rank_probabilities(model.num_experts, model.top_k, F, allow_uneven)
    payload = tuple(
        tuple(
            float(n * per_token * (1 if transport == Transport.DENSE else p))
            for p in probs
        )
        for n in split_tokens(tokens, A)
    )
    return TrafficMatrix(kind=TrafficKind.A2F, transport=transport, payload=payload)


def build_f2a(
    tokens: int,
    model: ModelArch,
    A: int,
    F: int,
    transport: Transport = Transport.SPARSE,
    allow_uneven: bool = False,
) -> TrafficMatrix:
    """Combine matrix: one reduced hidden state per token back to its owner, F x A."""
    _check_layout(A, F)
    per_token = model.hidden_dim * model.act_bytes
    probs = rank_probabilities(model.num_experts, model.top_k, F, allow_uneven)
    owned = split_tokens(tokens, A)
    payload = tuple(
        tuple(
            float(n * per_token * (1 if transport == Transport.DENSE else p))
            for n in owned
        )
        for p in probs
    )
    return TrafficMatrix(kind=TrafficKind.F2A, transport=transport, payload=payload)


def expected_deliveries(tokens: int, E: int, k: int, N: int, allow_uneven: bool = False) -> Fraction:
    """Expected (token, receiving rank) pairs produced by `tokens` dispatched tokens."""
    return tokens * sum(rank_probabilities(E, k, N, allow_uneven), Fraction(0))


def sample_deliveries(tokens: int, E: int, k: int, N: int, seed: int = 0) -> np.ndarray:
    """
    Draw uniform top-k routes and count the tokens each rank receives.

    Returns:
        Array of length N with per-rank token counts
    """
    rng = np.random.default_rng(seed)
    experts = rng.random((tokens, E)).argsort(axis=1)[:, :k]
    owner = np.repeat(np.arange(N), hosted_counts(E, N))
    hits = np.zeros((tokens, N), dtype=bool)
    rows = np.repeat(np.arange(tokens), k)
    hits[rows, owner[experts.ravel()]] = True
    return hits.sum(axis=0)


def kv_flow(workload: Workload, model: ModelArch, bytes_per_token: float, state: float = 0.0) -> KvFlow:
    """KV cache of one request (cached prefix plus prompt) shipped once to decode."""
    tokens = workload.prefix + workload.isl
    return KvFlow(bytes=tokens * bytes_per_token + state, tokens=tokens)


def matrix_flows(matrix: TrafficMatrix, senders: list[int], receivers: list[int], start_id: int = 0) -> list[Flow]:
    """Place a matrix on physical GPUs; empty cells and self-transfers carry no flow."""
    if len(senders) != matrix.senders or len(receivers) != matrix.receivers:
        raise InvalidLayoutError("traffic matrix does not match the placed GPU groups")
    flows = []
    for s, row in zip(senders, matrix.payload):
        for r, size in zip(receivers, row):
            if size > 0 and s != r:
                flows.append(Flow(flow_id=start_id + len(flows), src=s, dst=r, bytes=size))
    return flows


def to_frame(matrices: Iterable[TrafficMatrix]) -> pd.DataFrame:
    """Long-format dump: sender, receiver, bytes, kind."""
    rows = [
        {"sender": s, "receiver": r, "bytes": size, "kind": m.kind.value}
        for m in matrices
        for s, row in enumerate(m.payload)
        for r, size in enumerate(row)
    ]
    return pd.DataFrame(rows, columns=["sender", "receiver", "bytes", "kind"])
