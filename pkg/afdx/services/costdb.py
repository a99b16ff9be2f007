"""
afd-explorer - Operator Cost Service

Roofline estimates of per-layer, per-device operator time, optionally
replaced by measured times from a calibration table.

    time = max(flops / (peak * eta_c), bytes / (bw * eta_m)) + c0
"""
import logging
import math
from pathlib import Path
from typing import Optional

import pandas as pd

from afdx.exceptions import UncoveredShapeError
from afdx.schemas.cluster import GpuSpec
from afdx.schemas.costs import (
    CalibrationTable,
    CostSource,
    EfficiencyKnobs,
    LayerKind,
    OpCost,
    OpKind,
    OpShape,
    RuntimeBreakdown,
)
from afdx.schemas.model import MambaHybrid, ModelArch, SlidingWindowGQA, SparseTopK
from afdx.services.traffic import activation_probability

logger = logging.getLogger(__name__)

CALIBRATION_COLUMNS = ["op", "tokens", "context", "batch", "parallel_degree", "time_us"]


# ---------------------------------------------------------------------------
# Model geometry
# ---------------------------------------------------------------------------

def layer_groups(model: ModelArch) -> list[tuple[LayerKind, int]]:
    """
    Split the layer stack into (kind, count) groups.

    Sliding-window stacks with full_every = n run every n-th layer with full
    attention; Mamba hybrids with gqa_every = n run every n-th layer as GQA
    and the rest as recurrent mixers.
    """
    att = model.attention
    L = model.layers
    if isinstance(att, SlidingWindowGQA):
        full = L // att.full_every if att.full_every else 0
        groups = [(LayerKind.FULL, full), (LayerKind.WINDOW, L - full)]
    elif isinstance(att, MambaHybrid):
        full = L // att.gqa_every if att.gqa_every else 0
        groups = [(LayerKind.FULL, full), (LayerKind.MIXER, L - full)]
    else:
        groups = [(LayerKind.FULL, L)]
    return [(kind, count) for kind, count in groups if count > 0]


def attention_cap(model: ModelArch, layer: LayerKind) -> Optional[int]:
    """Most KV positions one query attends to, or None for unbounded."""
    att = model.attention
    if layer == LayerKind.WINDOW and isinstance(att, SlidingWindowGQA):
        return att.window
    if isinstance(att, SparseTopK):
        return att.selected
    return None


def kv_bytes_per_token_layer(model: ModelArch, layer: LayerKind = LayerKind.FULL) -> float:
    """Stored KV bytes of one token in one layer (unsharded)."""
    if layer == LayerKind.MIXER:
        return 0.0
    if model.is_mla:
        return model.latent_dim * model.kv_bytes_per_elem
    return 2 * model.kv_heads * model.head_dim * model.kv_bytes_per_elem


def kv_cache_bytes(model: ModelArch, tokens: int) -> float:
    """KV cache of one sequence holding `tokens` positions, all layers, unsharded."""
    total = 0.0
    for kind, count in layer_groups(model):
        stored = tokens
        if kind == LayerKind.WINDOW:
            stored = min(tokens, model.attention.window)
        total += count * kv_bytes_per_token_layer(model, kind) * stored
    return total


def state_bytes(model: ModelArch) -> float:
    """Recurrent state of one sequence across all mixer layers."""
    if not isinstance(model.attention, MambaHybrid):
        return 0.0
    mixers = sum(count for kind, count in layer_groups(model) if kind == LayerKind.MIXER)
    return mixers * model.attention.state_dim * model.kv_bytes_per_elem


def projection_flops_per_token(model: ModelArch) -> float:
    d, hd = model.hidden_dim, model.head_dim
    flops = 2 * d * (model.q_heads + 2 * model.kv_heads) * hd + 2 * d * model.q_heads * hd
    if model.is_mla:
        flops += 2 * d * model.latent_dim
    return flops


def attention_weight_bytes(model: ModelArch) -> float:
    """Attention-side parameters of one layer."""
    return projection_flops_per_token(model) / 2 * model.param_bytes_per_elem


def expert_weight_bytes(model: ModelArch) -> float:
    """One routed expert of one layer (gate, up and down matrices)."""
    return 3 * model.hidden_dim * model.expert_ffn_dim * model.param_bytes_per_elem


def shared_expert_bytes(model: ModelArch) -> float:
    return 3 * model.hidden_dim * model.shared_expert_dim * model.param_bytes_per_elem


def _visible_positions(prior: float, new: float, cap: Optional[int]) -> float:
    """Sum over the new tokens of the positions each one attends to (causal)."""
    if cap is None:
        return new * prior + new * (new + 1) / 2
    uncapped = min(max(cap - prior, 0.0), new)
    return uncapped * prior + uncapped * (uncapped + 1) / 2 + (new - uncapped) * cap


# ---------------------------------------------------------------------------
# Analytical operator model
# ---------------------------------------------------------------------------

def _dense_proj(model: ModelArch, shape: OpShape) -> tuple[float, float]:
    t, p = shape.tokens, shape.parallel_degree
    flops = t * projection_flops_per_token(model) / p
    act = 2 * t * model.hidden_dim * model.act_bytes
    return flops, attention_weight_bytes(model) / p + act


def _kv_shards(model: ModelArch, p: int) -> int:
    return 1 if model.is_mla else min(p, model.kv_heads)


def _mixer(model: ModelArch, shape: OpShape) -> tuple[float, float]:
    state_dim = model.attention.state_dim
    p = shape.parallel_degree
    flops = shape.tokens * 4 * state_dim / p
    hbm = shape.batch * 2 * state_dim * model.kv_bytes_per_elem / p
    return flops, hbm


def _attn_decode(model: ModelArch, shape: OpShape) -> tuple[float, float]:
    if shape.layer == LayerKind.MIXER:
        return _mixer(model, shape)
    cap = attention_cap(model, shape.layer)
    ctx = shape.context if cap is None else min(shape.context, cap)
    p = shape.parallel_degree
    flops = shape.tokens * 4 * model.q_heads * model.head_dim * ctx / p
    kv = shape.batch * kv_bytes_per_token_layer(model) * ctx / _kv_shards(model, p)
    return flops, kv


def _attn_prefill(model: ModelArch, shape: OpShape) -> tuple[float, float]:
    if shape.layer == LayerKind.MIXER:
        return _mixer(model, shape)
    cap = attention_cap(model, shape.layer)
    new = shape.tokens / shape.batch
    prior = shape.context - new
    p = shape.parallel_degree
    positions = shape.batch * _visible_positions(prior, new, cap)
    flops = 4 * model.q_heads * model.head_dim * positions / p
    visible = shape.context if cap is None else min(shape.context, cap)
    per_token = kv_bytes_per_token_layer(model)
    kv = (shape.batch * visible + shape.tokens) * per_token / _kv_shards(model, p)
    return flops, kv


def _moe_ffn(model: ModelArch, shape: OpShape) -> tuple[float, float]:
    t, ep = shape.tokens, shape.parallel_degree
    E, k, d = model.num_experts, model.top_k, model.hidden_dim
    hosted = math.ceil(E / ep)
    routed_pairs = t * k * hosted / E
    flops = routed_pairs * 6 * d * model.expert_ffn_dim + t * 6 * d * model.shared_expert_dim / ep

    p_expert = float(activation_probability(E, k, E))
    active = hosted * (1 - (1 - p_expert) ** t)
    weights = active * expert_weight_bytes(model) + shared_expert_bytes(model) / ep
    act = 2 * routed_pairs * d * model.act_bytes
    return flops, weights + act


_ANALYTICAL = {
    OpKind.DENSE_PROJ: _dense_proj,
    OpKind.ATTN_DECODE: _attn_decode,
    OpKind.ATTN_PREFILL: _attn_prefill,
    OpKind.MOE_FFN: _moe_ffn,
}


def analytical_cost(gpu: GpuSpec, model: ModelArch, shape: OpShape, knobs: EfficiencyKnobs) -> OpCost:
    if shape.tokens == 0:
        return OpCost(time=knobs.kernel_overhead, flops=0.0, hbm_bytes=0.0)
    flops, hbm = _ANALYTICAL[shape.op](model, shape)
    compute = flops / (gpu.peak_flops * knobs.eta_compute)
    memory = hbm / (gpu.hbm_bandwidth * knobs.eta_memory)
    return OpCost(time=max(compute, memory) + knobs.kernel_overhead, flops=flops, hbm_bytes=hbm)


def op_cost(
    gpu: GpuSpec,
    model: ModelArch,
    shape: OpShape,
    knobs: EfficiencyKnobs,
    table: Optional[CalibrationTable] = None,
) -> OpCost:
    """
    Price one operator call.

    Args:
        gpu: Device executing the call
        model: Model architecture
        shape: Operator and its sizes
        knobs: Efficiencies, kernel overhead and lookup mode
        table: Calibration table for table/hybrid lookup

    Returns:
        OpCost with per-device time, FLOPs and HBM bytes
    """
    analytical = analytical_cost(gpu, model, shape, knobs)
    if knobs.source == CostSource.ANALYTICAL:
        return analytical

    measured = table.lookup(shape) if table is not None else None
    if measured is not None:
        return analytical.model_copy(update={"time": measured, "source": CostSource.TABLE})

    if knobs.source == CostSource.TABLE and not knobs.allow_fallback:
        raise UncoveredShapeError(f"uncovered shape: {shape.table_key}")
    logger.debug("Calibration miss for %s, using roofline", shape.table_key)
    return analytical.model_copy(update={"source": CostSource.HYBRID})


# ---------------------------------------------------------------------------
# Calibration tables
# ---------------------------------------------------------------------------

def load_calibration_table(path: Path | str) -> CalibrationTable:
    """
    Read a calibration CSV (op, tokens, context, batch, parallel_degree, time_us).
    """
    df = pd.read_csv(path)
    missing = [c for c in CALIBRATION_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"calibration table {path} lacks columns {missing}")
    entries = {}
    for row in df[CALIBRATION_COLUMNS].itertuples(index=False):
        op = OpKind(str(row.op).strip()).value
        key = (op, int(row.tokens), int(row.context), int(row.batch), int(row.parallel_degree))
        entries[key] = float(row.time_us) * 1e-6
    logger.info("Loaded %d calibration entries from %s", len(entries), path)
    return CalibrationTable(entries=entries)


# ---------------------------------------------------------------------------
# Runtime / memory breakdown
# ---------------------------------------------------------------------------

def runtime_memory_breakdown(
    gpu: GpuSpec,
    model: ModelArch,
    context: int,
    knobs: Optional[EfficiencyKnobs] = None,
    batch: int = 1,
    table: Optional[CalibrationTable] = None,
) -> RuntimeBreakdown:
    """Attention vs. FFN share of one decode step and the memory components at `context`."""
    if context < 1:
        raise ValueError("context must be at least 1")
    knobs = knobs or EfficiencyKnobs()

    attn_time = 0.0
    for kind, count in layer_groups(model):
        decode = OpShape(op=OpKind.ATTN_DECODE, tokens=batch, context=context, batch=batch, layer=kind)
        proj = OpShape(op=OpKind.DENSE_PROJ, tokens=batch, batch=batch, layer=kind)
        attn_time += count * (
            op_cost(gpu, model, decode, knobs, table).time + op_cost(gpu, model, proj, knobs, table).time
        )
    ffn = OpShape(op=OpKind.MOE_FFN, tokens=batch, batch=batch)
    ffn_time = model.layers * op_cost(gpu, model, ffn, knobs, table).time

    total = attn_time + ffn_time
    weights = model.layers * (
        attention_weight_bytes(model)
        + model.num_experts * expert_weight_bytes(model)
        + shared_expert_bytes(model)
    )
    return RuntimeBreakdown(
        context=context,
        attn_time_share=attn_time / total,
        ffn_time_share=ffn_time / total,
        weight_bytes=weights,
        kv_bytes=batch * (kv_cache_bytes(model, context) + state_bytes(model)),
        activation_bytes=2 * batch * model.hidden_dim * model.act_bytes,
    )
