"""Model/batch description and per-operation data sizes and FLOP counts.

A decoder layer is split into four operation units:

    0  QKV projection
    1  attention (prefill or one decode step)
    2  output projection
    3  expert FFN, accounted per activated expert

For each unit ``op_cost`` reports the byte sizes of the two matrix operands
(``d_x`` for the streaming activation operand, ``d_y`` for the stationary
operand: weights, or K/V in attention) plus the FLOP count, per micro-batch of
``m`` sequences.  The expert unit is the exception: it runs coalesced over the
full batch and its costs are quoted per activated expert, so callers pass the
full batch size as ``m`` there.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

# Operation unit indices.
OP_QKV = 0
OP_ATTN = 1
OP_OUT_PROJ = 2
OP_EXPERT = 3

NON_EXPERT_OPS = (OP_QKV, OP_ATTN, OP_OUT_PROJ)


class PhaseKind(Enum):
    PREFILL = "prefill"
    DECODE = "decode"


@dataclass(frozen=True)
class ModelConfig:
    """Decoder stack shape: N layers, hidden dim, expert dim, expert pool, top-k."""

    num_layers: int
    hidden_dim: int
    expert_dim: int
    experts_per_layer: int
    top_k: int
    dtype_bytes: int = 2

    def __post_init__(self) -> None:
        for field in ("num_layers", "hidden_dim", "expert_dim", "experts_per_layer"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1")
        if not (1 <= self.top_k <= self.experts_per_layer):
            raise ValueError("top_k must satisfy 1 <= top_k <= experts_per_layer")
        if self.dtype_bytes not in (1, 2, 4):
            raise ValueError("dtype_bytes must be one of 1, 2, 4")


@dataclass(frozen=True)
class BatchConfig:
    """Inference workload: B sequences, prompt length, generated length."""

    batch_size: int
    input_len: int
    output_len: int

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.input_len < 1:
            raise ValueError("input_len must be >= 1")
        if self.output_len < 0:
            raise ValueError("output_len must be >= 0")


@dataclass(frozen=True)
class Phase:
    """One evaluation point: prefill over ``seq_len`` tokens, or a single decode
    step attending over ``kv_len`` cached positions."""

    kind: PhaseKind
    seq_len: int
    kv_len: int

    def __post_init__(self) -> None:
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        if self.kv_len < 0:
            raise ValueError("kv_len must be >= 0")
        if self.kind is PhaseKind.DECODE and self.seq_len != 1:
            raise ValueError("a decode step processes exactly one token per sequence")

    @classmethod
    def prefill(cls, input_len: int) -> "Phase":
        return cls(PhaseKind.PREFILL, seq_len=input_len, kv_len=0)

    @classmethod
    def decode_step(cls, input_len: int, step: int) -> "Phase":
        """Decode step ``step`` (1-based): attends over input_len + step - 1 positions."""
        if step < 1:
            raise ValueError("decode steps are numbered from 1")
        return cls(PhaseKind.DECODE, seq_len=1, kv_len=input_len + step - 1)

    @property
    def attended_positions(self) -> int:
        """Positions each query token attends over (score-matrix width)."""
        return self.seq_len if self.kind is PhaseKind.PREFILL else self.kv_len


@dataclass(frozen=True)
class OpCost:
    """Operand byte sizes and FLOPs of one operation unit (per micro-batch)."""

    d_x: float
    d_y: float
    flops: float

    def __post_init__(self) -> None:
        if self.d_x < 0 or self.d_y < 0 or self.flops < 0:
            raise ValueError("OpCost fields must be non-negative")

    @property
    def total_bytes(self) -> float:
        return self.d_x + self.d_y


def op_cost(
    op_index: int,
    phase: Phase,
    model: ModelConfig,
    m: int,
    num_activated_experts: int | None = None,
) -> OpCost:
    """Cost of one operation unit at micro-batch size ``m``.

    For ``op_index == 3`` the costs are per activated expert under a uniform
    token split across ``num_activated_experts``, and ``m`` must be the full
    (coalesced) batch size.
    """
    if m < 1:
        raise ValueError("micro-batch size m must be >= 1")
    dt = float(model.dtype_bytes)
    d_h = float(model.hidden_dim)
    L = float(phase.seq_len)

    if op_index == OP_QKV:
        return OpCost(d_x=dt * m * L * d_h, d_y=3.0 * dt * d_h * d_h, flops=6.0 * m * L * d_h * d_h)
    if op_index == OP_ATTN:
        if phase.kind is PhaseKind.PREFILL:
            return OpCost(d_x=dt * m * L * d_h, d_y=2.0 * dt * m * L * d_h, flops=4.0 * m * L * L * d_h)
        L_kv = float(phase.kv_len)
        # Decode: the single-token query streams against the cached K/V.
        return OpCost(d_x=dt * m * d_h, d_y=2.0 * dt * m * L_kv * d_h, flops=4.0 * m * L_kv * d_h)
    if op_index == OP_OUT_PROJ:
        return OpCost(d_x=dt * m * L * d_h, d_y=dt * d_h * d_h, flops=2.0 * m * L * d_h * d_h)
    if op_index == OP_EXPERT:
        if num_activated_experts is None or num_activated_experts < 1:
            raise ValueError("op 3 requires num_activated_experts >= 1")
        d_e = float(model.expert_dim)
        E = float(num_activated_experts)
        return OpCost(
            d_x=dt * m * L * d_h / E,
            d_y=3.0 * dt * d_h * d_e,
            flops=6.0 * m * L * d_h * d_e / E,
        )
    raise ValueError(f"op_index must be in 0..3, got {op_index}")


def kv_store_bytes(model: ModelConfig, m: int, seq_len: int) -> float:
    """Bytes of K and V generated per micro-batch (two m x seq_len x d_h tensors)."""
    if m < 1 or seq_len < 1:
        raise ValueError("m and seq_len must be >= 1")
    return 2.0 * model.dtype_bytes * m * seq_len * model.hidden_dim


@dataclass(frozen=True)
class WeightFootprint:
    non_expert_per_layer: float
    per_expert: float


def weight_bytes(model: ModelConfig) -> WeightFootprint:
    """Static weight bytes per layer: QKV + output projection, and one expert FFN."""
    dt = float(model.dtype_bytes)
    d_h = float(model.hidden_dim)
    return WeightFootprint(
        non_expert_per_layer=4.0 * dt * d_h * d_h,
        per_expert=3.0 * dt * d_h * model.expert_dim,
    )


def _op_output_bytes(op_index: int, phase: Phase, model: ModelConfig, m: int) -> float:
    dt = float(model.dtype_bytes)
    token_bytes = dt * m * phase.seq_len * model.hidden_dim
    if op_index == OP_QKV:
        return 3.0 * token_bytes  # Q, K, V
    return token_bytes


def intermediate_bytes(
    model: ModelConfig,
    batch: BatchConfig,
    phase: Phase,
    m: int,
    gpu_ops: Iterable[int] = NON_EXPERT_OPS,
) -> float:
    """Peak activation-buffer footprint on the GPU for one layer at micro-batch m.

    The max over the GPU-placed non-expert ops of (both operands + output), plus
    the attention score matrix when attention itself runs on the GPU.  Ops kept
    off the GPU contribute nothing; kernel workspace is budgeted separately.
    """
    if m < 1:
        raise ValueError("micro-batch size m must be >= 1")
    ops = set(gpu_ops)
    peak = 0.0
    for i in ops:
        if i not in NON_EXPERT_OPS:
            raise ValueError("gpu_ops may only contain non-expert op indices 0..2")
        cost = op_cost(i, phase, model, m)
        peak = max(peak, cost.d_x + cost.d_y + _op_output_bytes(i, phase, model, m))
    if OP_ATTN in ops:
        peak += float(model.dtype_bytes) * m * phase.seq_len * phase.attended_positions
    return peak
