"""Per-layer and end-to-end latency of an allocation strategy, plus the VRAM budget.

The model is deliberately sequential: a layer's latency is the sum over its
four operation units of load + compute + store, where

  * load is the PCIe transfer of the streaming operand whenever the execution
    device changes between consecutive units (and, for the expert unit, the
    coalesced batch activations plus any migrated expert weights);
  * compute is the roofline time on the unit's device, times the number of
    micro-batches for the non-expert units;
  * store is the KV-cache push to host memory incurred exactly when QKV runs
    on the GPU and attention runs on the CPU, plus the expert unit's
    CPU-partial-output return traffic.

Transfer/compute overlap is the simulator's job (`moeplan.sim`); this module
is the analytical upper bound the planner minimizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eas import ActivationMap
from .hardware import Device, SystemSpec, roofline_time, transfer_time
from .workload import (
    OP_ATTN,
    OP_OUT_PROJ,
    OP_QKV,
    NON_EXPERT_OPS,
    BatchConfig,
    ModelConfig,
    OpCost,
    Phase,
    PhaseKind,
    intermediate_bytes,
    kv_store_bytes,
    op_cost,
    weight_bytes,
)


@dataclass(frozen=True)
class AllocationStrategy:
    """One point in the search space.

    ``placement`` holds the devices of the QKV / attention / output-projection
    units.  The expert pool is partitioned into ``exp_r`` GPU-resident,
    ``exp_m`` migrated-per-pass, and ``exp_c`` CPU-computed experts; the three
    must sum to the activated expert count.  ``m`` is the micro-batch size for
    the non-expert units; the expert unit always runs coalesced over the full
    batch (``coalesced_expert_batch`` is fixed true; a micro-batched expert
    mode exists only as an analysis mode on `expert_stage_time`).
    """

    placement: tuple[Device, Device, Device]
    exp_r: int
    exp_m: int
    exp_c: int
    m: int
    coalesced_expert_batch: bool = True

    def __post_init__(self) -> None:
        if len(self.placement) != 3:
            raise ValueError("placement must cover ops 0..2")
        if min(self.exp_r, self.exp_m, self.exp_c) < 0:
            raise ValueError("expert partition counts must be >= 0")
        if self.m < 1:
            raise ValueError("micro-batch size m must be >= 1")
        if not self.coalesced_expert_batch:
            raise ValueError("expert execution is always coalesced; see expert_stage_time")

    @property
    def num_gpu_experts(self) -> int:
        return self.exp_r + self.exp_m

    @property
    def expert_total(self) -> int:
        return self.exp_r + self.exp_m + self.exp_c

    @property
    def expert_stage_device(self) -> Device:
        """Where the merged expert output lands (chains into the next layer)."""
        return Device.GPU if self.num_gpu_experts > 0 else Device.CPU

    def num_micro_batches(self, batch: BatchConfig) -> int:
        return math.ceil(batch.batch_size / self.m)


def _check_partition(strategy: AllocationStrategy, model: ModelConfig) -> None:
    if strategy.expert_total != model.experts_per_layer:
        raise ValueError(
            f"expert partition {strategy.exp_r}+{strategy.exp_m}+{strategy.exp_c} "
            f"does not cover the {model.experts_per_layer} activated experts"
        )


@dataclass(frozen=True)
class OpLatency:
    t_load: float
    t_comp: float
    t_store: float

    @property
    def total(self) -> float:
        return self.t_load + self.t_comp + self.t_store


@dataclass(frozen=True)
class LayerCost:
    """Load/compute/store seconds for the four units of one layer, one phase."""

    ops: tuple[OpLatency, OpLatency, OpLatency, OpLatency]
    total: float

    @classmethod
    def from_ops(cls, ops: tuple[OpLatency, OpLatency, OpLatency, OpLatency]) -> "LayerCost":
        total = 0.0
        for op in ops:
            total = total + op.t_load + op.t_comp + op.t_store
        return cls(ops=ops, total=total)


def _non_expert_cost(i: int, strategy: AllocationStrategy, phase: Phase, model: ModelConfig) -> OpCost:
    return op_cost(i, phase, model, strategy.m)


def op_load_time(
    i: int,
    strategy: AllocationStrategy,
    phase: Phase,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
) -> float:
    """Activation transfer for a non-expert unit: fires when its device differs
    from the previous unit's (op 0 chains from the previous layer's expert
    stage)."""
    if i not in NON_EXPERT_OPS:
        raise ValueError("op_load_time covers ops 0..2; the expert load is in expert_stage_time")
    prev = strategy.expert_stage_device if i == OP_QKV else strategy.placement[i - 1]
    if strategy.placement[i] is prev:
        return 0.0
    m_batches = strategy.num_micro_batches(batch)
    return m_batches * transfer_time(_non_expert_cost(i, strategy, phase, model).d_x, system.link)


def op_compute_time(
    i: int,
    strategy: AllocationStrategy,
    phase: Phase,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
) -> float:
    if i not in NON_EXPERT_OPS:
        raise ValueError("op_compute_time covers ops 0..2; see expert_stage_time")
    cost = _non_expert_cost(i, strategy, phase, model)
    dev = system.device(strategy.placement[i])
    return strategy.num_micro_batches(batch) * roofline_time(cost.total_bytes, cost.flops, dev)


def op_store_time(
    i: int,
    strategy: AllocationStrategy,
    phase: Phase,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
) -> float:
    """KV-cache push over PCIe: only when QKV ran on the GPU and attention runs
    on the CPU.  Zero for every other unit, including the expert unit (its
    return traffic is accounted inside expert_stage_time)."""
    if not 0 <= i <= 3:
        raise ValueError("op index must be in 0..3")
    if i != OP_ATTN:
        return 0.0
    if strategy.placement[OP_QKV] is Device.GPU and strategy.placement[OP_ATTN] is Device.CPU:
        d_kv = kv_store_bytes(model, strategy.m, phase.seq_len)
        return strategy.num_micro_batches(batch) * transfer_time(d_kv, system.link)
    return 0.0


# ---------------------------------------------------------------------------
# Expert stage


def _share_profile(model: ModelConfig, activation_map: ActivationMap | None) -> np.ndarray:
    """Descending per-expert token-share vector (uniform without a map)."""
    if activation_map is None:
        activation_map = ActivationMap.uniform(1, model.experts_per_layer)
    elif activation_map.experts_per_layer != model.experts_per_layer:
        raise ValueError("activation map expert count does not match the model")
    return activation_map.sorted_share_profile()


@dataclass(frozen=True)
class ExpertStageParts:
    """The expert unit decomposed for both the analytical sum and the simulator.

    ``act_load``    coalesced batch activations over PCIe
    ``mig_load``    migrated expert weights over PCIe
    ``lat_gpu``     roofline time of the GPU share (resident + migrated experts)
    ``lat_cpu``     roofline time of the CPU share
    ``return_store`` CPU partial outputs returned to a GPU-held next stage
    """

    act_load: float
    mig_load: float
    lat_gpu: float
    lat_cpu: float
    return_store: float

    @property
    def t_load(self) -> float:
        return self.act_load + self.mig_load

    @property
    def t_comp(self) -> float:
        return max(self.lat_gpu, self.lat_cpu)


def expert_stage_parts(
    strategy: AllocationStrategy,
    phase: Phase,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    activation_map: ActivationMap | None = None,
    coalesced: bool = True,
) -> ExpertStageParts:
    _check_partition(strategy, model)
    dt = float(model.dtype_bytes)
    d_h = float(model.hidden_dim)
    d_e = float(model.expert_dim)
    L = float(phase.seq_len)
    B = batch.batch_size
    # Coalesced totals across all activated experts (per-expert costs summed
    # over the pool, so the activated count cancels).
    d_x_total = dt * B * L * d_h
    flops_total = 6.0 * B * L * d_h * d_e
    d_y_per = 3.0 * dt * d_h * d_e

    profile = _share_profile(model, activation_map)
    n_gpu = strategy.num_gpu_experts
    gpu_share = float(profile[:n_gpu].sum())
    cpu_share = float(profile[n_gpu:].sum())

    act_load = transfer_time(d_x_total, system.link)
    mig_load = transfer_time(strategy.exp_m * d_y_per, system.link)

    def device_latency(dev_spec, share: float, n_experts: int, repeats: int) -> float:
        if n_experts == 0:
            return 0.0
        mem = share * d_x_total / repeats + n_experts * d_y_per
        return repeats * roofline_time(mem, share * flops_total / repeats, dev_spec)

    repeats = 1 if coalesced else strategy.num_micro_batches(batch)
    lat_gpu = device_latency(system.gpu, gpu_share, n_gpu, repeats)
    lat_cpu = device_latency(system.cpu, cpu_share, strategy.exp_c, repeats)

    # CPU partial outputs cross back over PCIe when the next stage sits on the
    # GPU and Eq.-style chaining did not already charge that boundary.
    return_store = 0.0
    if (
        strategy.exp_c > 0
        and strategy.placement[OP_QKV] is Device.GPU
        and strategy.expert_stage_device is Device.GPU
    ):
        d_out_total = float(model.dtype_bytes) * batch.batch_size * phase.seq_len * model.hidden_dim
        return_store = transfer_time(cpu_share * d_out_total, system.link)

    return ExpertStageParts(act_load, mig_load, lat_gpu, lat_cpu, return_store)


def expert_stage_time(
    strategy: AllocationStrategy,
    phase: Phase,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    activation_map: ActivationMap | None = None,
    coalesced: bool = True,
) -> OpLatency:
    """Expert-unit latency: PCIe load of batch activations plus migrated
    weights, then parallel GPU/CPU execution (the max of the two sides).

    ``coalesced=False`` is an analysis-only mode replicating per-micro-batch
    expert execution, where each micro-batch refetches the expert weights
    from device memory."""
    parts = expert_stage_parts(strategy, phase, system, model, batch, activation_map, coalesced)
    return OpLatency(t_load=parts.t_load, t_comp=parts.t_comp, t_store=parts.return_store)


def layer_latency(
    strategy: AllocationStrategy,
    phase: Phase,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    activation_map: ActivationMap | None = None,
) -> LayerCost:
    """Assemble the four units' load/compute/store into one layer's cost."""
    _check_partition(strategy, model)
    ops = []
    for i in NON_EXPERT_OPS:
        ops.append(
            OpLatency(
                t_load=op_load_time(i, strategy, phase, system, model, batch),
                t_comp=op_compute_time(i, strategy, phase, system, model, batch),
                t_store=op_store_time(i, strategy, phase, system, model, batch),
            )
        )
    ops.append(expert_stage_time(strategy, phase, system, model, batch, activation_map))
    return LayerCost.from_ops(tuple(ops))


# ---------------------------------------------------------------------------
# Phase and end-to-end totals


def prefill_seconds(
    strategy: AllocationStrategy,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    activation_map: ActivationMap | None = None,
) -> float:
    phase = Phase.prefill(batch.input_len)
    return model.num_layers * layer_latency(strategy, phase, system, model, batch, activation_map).total


def decode_seconds(
    strategy: AllocationStrategy,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    activation_map: ActivationMap | None = None,
    migrate_once: bool = False,
) -> float:
    """Exact sum over all decode steps (no average-KV-length shortcut).

    Only the attention unit varies across steps (its KV length grows by one
    per step), so the per-step sum is vectorized over the KV lengths.  With
    ``migrate_once`` the migrated-expert PCIe load is charged on the first
    step only instead of on every step.
    """
    if batch.output_len == 0:
        return 0.0
    first = Phase.decode_step(batch.input_len, 1)
    base = layer_latency(strategy, first, system, model, batch, activation_map)

    m_batches = strategy.num_micro_batches(batch)
    dt = float(model.dtype_bytes)
    d_h = float(model.hidden_dim)
    m = strategy.m
    dev = system.device(strategy.placement[OP_ATTN])
    kv_lens = np.arange(batch.input_len, batch.input_len + batch.output_len, dtype=float)
    attn_bytes = dt * m * d_h + 2.0 * dt * m * d_h * kv_lens
    attn_flops = 4.0 * m * d_h * kv_lens
    attn_comp = m_batches * np.maximum(attn_bytes / dev.mem_bandwidth, attn_flops / dev.peak_compute)

    per_step_const = base.total - base.ops[OP_ATTN].t_comp
    steps_total = float(np.sum(attn_comp)) + batch.output_len * per_step_const
    if migrate_once and strategy.exp_m > 0:
        parts = expert_stage_parts(strategy, first, system, model, batch, activation_map)
        steps_total -= (batch.output_len - 1) * parts.mig_load
    return model.num_layers * steps_total


@dataclass(frozen=True)
class TotalLatency:
    prefill_s: float
    decode_s: float
    total_s: float


def total_latency(
    strategy_prefill: AllocationStrategy,
    strategy_decode: AllocationStrategy,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    activation_map: ActivationMap | None = None,
    migrate_once: bool = False,
) -> TotalLatency:
    """End-to-end latency: N-layer prefill plus the exact per-step decode sum."""
    pre = prefill_seconds(strategy_prefill, system, model, batch, activation_map)
    dec = decode_seconds(strategy_decode, system, model, batch, activation_map, migrate_once)
    return TotalLatency(prefill_s=pre, decode_s=dec, total_s=pre + dec)


def throughput(total: TotalLatency, batch: BatchConfig) -> float:
    """Generated tokens per second: B * output_len / total_s."""
    if batch.output_len == 0:
        raise ValueError("throughput undefined for output_len = 0")
    if total.total_s <= 0:
        raise ValueError("throughput requires total_s > 0")
    return batch.batch_size * batch.output_len / total.total_s


# ---------------------------------------------------------------------------
# VRAM budget


@dataclass(frozen=True)
class VramBudget:
    """The five GPU-memory terms a strategy must fit under ``capacity``."""

    resident_expert_bytes: float
    non_moe_weight_bytes: float
    intermediate_bytes: float
    kv_cache_bytes: float
    workspace_bytes: float
    capacity: float

    @property
    def used(self) -> float:
        return (
            self.resident_expert_bytes
            + self.non_moe_weight_bytes
            + self.intermediate_bytes
            + self.kv_cache_bytes
            + self.workspace_bytes
        )

    @property
    def feasible(self) -> bool:
        return self.used <= self.capacity


def _worst_case_phase(phase_kind: PhaseKind, batch: BatchConfig) -> Phase:
    if phase_kind is PhaseKind.PREFILL:
        return Phase.prefill(batch.input_len)
    return Phase.decode_step(batch.input_len, max(1, batch.output_len))


def vram_usage(
    strategy: AllocationStrategy,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    phase_kind: PhaseKind,
    workspace_fraction: float = 0.05,
) -> VramBudget:
    """GPU memory footprint of a strategy over a whole phase.

    Resident experts are preloaded for every layer; non-MoE weights count for
    every unit placed on the GPU; the KV cache sits in VRAM only while
    attention runs there (at its end-of-phase size); activation buffers are
    evaluated at the worst step of the phase; workspace is a configurable
    slack fraction of capacity.  Infeasibility is a result, not an error.
    """
    if not (0.0 <= workspace_fraction < 1.0):
        raise ValueError("workspace_fraction must be in [0, 1)")
    wb = weight_bytes(model)
    n = model.num_layers
    resident = strategy.exp_r * wb.per_expert * n

    dt = float(model.dtype_bytes)
    d_h = float(model.hidden_dim)
    non_moe = 0.0
    if strategy.placement[OP_QKV] is Device.GPU:
        non_moe += 3.0 * dt * d_h * d_h * n
    if strategy.placement[OP_OUT_PROJ] is Device.GPU:
        non_moe += dt * d_h * d_h * n

    kv = 0.0
    if strategy.placement[OP_ATTN] is Device.GPU:
        kv_tokens = batch.input_len
        if phase_kind is PhaseKind.DECODE:
            kv_tokens += batch.output_len
        kv = 2.0 * dt * batch.batch_size * kv_tokens * d_h * n

    phase = _worst_case_phase(phase_kind, batch)
    gpu_ops = tuple(i for i in NON_EXPERT_OPS if strategy.placement[i] is Device.GPU)
    inter = intermediate_bytes(model, batch, phase, strategy.m, gpu_ops)

    capacity = system.gpu.mem_capacity
    return VramBudget(
        resident_expert_bytes=resident,
        non_moe_weight_bytes=non_moe,
        intermediate_bytes=inter,
        kv_cache_bytes=kv,
        workspace_bytes=workspace_fraction * capacity,
        capacity=capacity,
    )
