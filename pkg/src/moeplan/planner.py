"""Exhaustive search for the minimum-latency allocation strategy.

The search space is the cross product of the 8 device placements for the
non-expert units, the candidate micro-batch sizes, and every partition of the
expert pool into (resident, migrated, CPU-computed) counts, filtered to
VRAM-feasible candidates.  Prefill and decode are optimized independently
except that the resident-expert count must agree across phases, since those
weights are preloaded once before inference: the planner fixes ``exp_r`` in an
outer loop and picks each phase's best candidate inside.

``brute_force_plan`` evaluates every feasible (prefill, decode) pair with no
structural shortcuts and shares the evaluation and tie-breaking code with
``plan``, so the two must agree exactly; it exists as the verification oracle.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from .costmodel import (
    AllocationStrategy,
    VramBudget,
    decode_seconds,
    expert_stage_time,
    layer_latency,
    prefill_seconds,
    throughput,
    total_latency,
    vram_usage,
)
from .eas import ActivationMap
from .hardware import Device, SystemSpec
from .workload import OP_ATTN, NON_EXPERT_OPS, BatchConfig, ModelConfig, Phase, PhaseKind


class NoFeasiblePlan(Exception):
    """Every candidate violates the VRAM budget (or the constraints)."""


class SpaceTooLarge(Exception):
    """The brute-force pair space exceeds the configured ceiling."""


_DEVICE_ORDER = {Device.CPU: 0, Device.GPU: 1}


def default_m_candidates(batch_size: int) -> tuple[int, ...]:
    """Powers of two up to the batch size, plus the batch size itself."""
    out = []
    m = 1
    while m <= batch_size:
        out.append(m)
        m *= 2
    if batch_size not in out:
        out.append(batch_size)
    return tuple(out)


@dataclass(frozen=True)
class SearchConstraints:
    vram_slack_fraction: float = 0.05
    forbid_cpu_attention: bool = False
    force_placement: Mapping[int, Device] | None = None  # op index 0..2 -> device

    def __post_init__(self) -> None:
        if self.force_placement is not None:
            for i in self.force_placement:
                if i not in NON_EXPERT_OPS:
                    raise ValueError("force_placement keys must be op indices 0..2")


@dataclass(frozen=True)
class PlanRequest:
    system: SystemSpec
    model: ModelConfig
    batch: BatchConfig
    activation_map: ActivationMap | None = None
    m_candidates: tuple[int, ...] | None = None
    constraints: SearchConstraints = field(default_factory=SearchConstraints)
    migrate_once_per_decode: bool = False

    def resolved_m_candidates(self) -> tuple[int, ...]:
        if self.m_candidates is None:
            return default_m_candidates(self.batch.batch_size)
        if not self.m_candidates:
            raise ValueError("m_candidates must be non-empty")
        for m in self.m_candidates:
            if not (1 <= m <= self.batch.batch_size):
                raise ValueError(f"m candidate {m} outside 1..batch_size")
        return tuple(sorted(set(self.m_candidates)))


@dataclass(frozen=True)
class SearchStats:
    candidates_enumerated: int
    feasible_count: int
    elapsed_s: float


@dataclass(frozen=True)
class PlanPrediction:
    prefill_s: float
    decode_s: float
    total_s: float
    tokens_per_s: float | None


@dataclass(frozen=True)
class Plan:
    prefill_strategy: AllocationStrategy
    decode_strategy: AllocationStrategy
    predicted: PlanPrediction
    vram_prefill: VramBudget
    vram_decode: VramBudget
    stats: SearchStats


def _tie_key(s: AllocationStrategy) -> tuple:
    """Deterministic preference among equal-latency candidates: fewer migrated
    experts, then larger micro-batches, then CPU-first placement order."""
    return (s.exp_m, -s.m, tuple(_DEVICE_ORDER[d] for d in s.placement))


def _placements(constraints: SearchConstraints) -> list[tuple[Device, Device, Device]]:
    forced = constraints.force_placement or {}
    out = []
    for combo in itertools.product((Device.CPU, Device.GPU), repeat=3):
        if any(combo[i] is not dev for i, dev in forced.items()):
            continue
        if constraints.forbid_cpu_attention and combo[OP_ATTN] is Device.CPU:
            continue
        out.append(combo)
    return out


def _partitions(total_experts: int) -> list[tuple[int, int, int]]:
    return [
        (r, mig, total_experts - r - mig)
        for r in range(total_experts + 1)
        for mig in range(total_experts - r + 1)
    ]


def enumerate_strategies(request: PlanRequest, phase_kind: PhaseKind) -> Iterator[AllocationStrategy]:
    """All VRAM-feasible strategies for one phase, in deterministic
    lexicographic order by (x0, x1, x2, m, exp_r, exp_m) with CPU before GPU."""
    yield from _enumerate(request, phase_kind)[0]


def _enumerate(
    request: PlanRequest, phase_kind: PhaseKind
) -> tuple[list[AllocationStrategy], int]:
    feasible = []
    raw = 0
    for placement in _placements(request.constraints):
        for m in request.resolved_m_candidates():
            for exp_r, exp_m, exp_c in _partitions(request.model.experts_per_layer):
                raw += 1
                strategy = AllocationStrategy(placement, exp_r, exp_m, exp_c, m)
                budget = vram_usage(
                    strategy,
                    request.system,
                    request.model,
                    request.batch,
                    phase_kind,
                    request.constraints.vram_slack_fraction,
                )
                if budget.feasible:
                    feasible.append(strategy)
    return feasible, raw


def _phase_seconds(
    request: PlanRequest, strategy: AllocationStrategy, phase_kind: PhaseKind
) -> float:
    if phase_kind is PhaseKind.PREFILL:
        return prefill_seconds(
            strategy, request.system, request.model, request.batch, request.activation_map
        )
    return decode_seconds(
        strategy,
        request.system,
        request.model,
        request.batch,
        request.activation_map,
        request.migrate_once_per_decode,
    )


def _best_per_exp_r(
    request: PlanRequest, phase_kind: PhaseKind
) -> tuple[dict[int, tuple[float, AllocationStrategy]], int, int]:
    best: dict[int, tuple] = {}
    feasible, raw = _enumerate(request, phase_kind)
    for strategy in feasible:
        secs = _phase_seconds(request, strategy, phase_kind)
        key = (secs, _tie_key(strategy))
        if strategy.exp_r not in best or key < best[strategy.exp_r][0]:
            best[strategy.exp_r] = (key, strategy)
    return (
        {r: (key[0], s) for r, (key, s) in best.items()},
        raw,
        len(feasible),
    )


def _finalize(
    request: PlanRequest,
    chosen_pre: AllocationStrategy,
    chosen_dec: AllocationStrategy,
    stats: SearchStats,
) -> Plan:
    predicted = total_latency(
        chosen_pre,
        chosen_dec,
        request.system,
        request.model,
        request.batch,
        request.activation_map,
        request.migrate_once_per_decode,
    )
    tokens = throughput(predicted, request.batch) if request.batch.output_len > 0 else None
    slack = request.constraints.vram_slack_fraction
    return Plan(
        prefill_strategy=chosen_pre,
        decode_strategy=chosen_dec,
        predicted=PlanPrediction(
            prefill_s=predicted.prefill_s,
            decode_s=predicted.decode_s,
            total_s=predicted.total_s,
            tokens_per_s=tokens,
        ),
        vram_prefill=vram_usage(
            chosen_pre, request.system, request.model, request.batch, PhaseKind.PREFILL, slack
        ),
        vram_decode=vram_usage(
            chosen_dec, request.system, request.model, request.batch, PhaseKind.DECODE, slack
        ),
        stats=stats,
    )


def plan(request: PlanRequest) -> Plan:
    """The feasible (prefill, decode) strategy pair with the smallest predicted
    end-to-end latency, under the shared-residency constraint.

    Ties are broken by (fewer migrated experts, larger micro-batch,
    CPU-first placement order) per phase, then by the smaller resident count.
    """
    t0 = time.perf_counter()
    best_pre, raw_pre, feas_pre = _best_per_exp_r(request, PhaseKind.PREFILL)
    best_dec, raw_dec, feas_dec = _best_per_exp_r(request, PhaseKind.DECODE)

    chosen = None
    for exp_r in sorted(set(best_pre) & set(best_dec)):
        pre_s, sp = best_pre[exp_r]
        dec_s, sd = best_dec[exp_r]
        key = (pre_s + dec_s, _tie_key(sp), _tie_key(sd), exp_r)
        if chosen is None or key < chosen[0]:
            chosen = (key, sp, sd)
    if chosen is None:
        raise NoFeasiblePlan("no VRAM-feasible strategy pair with a shared resident count")

    stats = SearchStats(
        candidates_enumerated=raw_pre + raw_dec,
        feasible_count=feas_pre + feas_dec,
        elapsed_s=time.perf_counter() - t0,
    )
    return _finalize(request, chosen[1], chosen[2], stats)


def brute_force_plan(request: PlanRequest, max_pairs: int = 10_000_000) -> Plan:
    """Verification oracle: enumerate every feasible strategy pair outright."""
    t0 = time.perf_counter()
    E = request.model.experts_per_layer
    n_placements = len(_placements(request.constraints))
    n_m = len(request.resolved_m_candidates())
    raw_pairs = sum((n_placements * n_m * (E - r + 1)) ** 2 for r in range(E + 1))
    if raw_pairs > max_pairs:
        raise SpaceTooLarge(f"{raw_pairs} strategy pairs exceed the ceiling of {max_pairs}")

    pre_list, raw_pre = _enumerate(request, PhaseKind.PREFILL)
    dec_list, raw_dec = _enumerate(request, PhaseKind.DECODE)
    pre_secs = [_phase_seconds(request, s, PhaseKind.PREFILL) for s in pre_list]
    dec_secs = [_phase_seconds(request, s, PhaseKind.DECODE) for s in dec_list]

    chosen = None
    for sp, pre_s in zip(pre_list, pre_secs):
        for sd, dec_s in zip(dec_list, dec_secs):
            if sp.exp_r != sd.exp_r:
                continue
            key = (pre_s + dec_s, _tie_key(sp), _tie_key(sd), sp.exp_r)
            if chosen is None or key < chosen[0]:
                chosen = (key, sp, sd)
    if chosen is None:
        raise NoFeasiblePlan("no VRAM-feasible strategy pair with a shared resident count")

    stats = SearchStats(
        candidates_enumerated=raw_pre + raw_dec,
        feasible_count=len(pre_list) + len(dec_list),
        elapsed_s=time.perf_counter() - t0,
    )
    return _finalize(request, chosen[1], chosen[2], stats)


# ---------------------------------------------------------------------------
# Micro-batch sensitivity sweep


@dataclass(frozen=True)
class SweepRow:
    m: int
    expert_s: float
    nonexpert_s: float
    total_s: float


def sweep_microbatch(
    request: PlanRequest,
    mode: str,
    phase_kind: PhaseKind = PhaseKind.PREFILL,
) -> list[SweepRow]:
    """Evaluate a fixed all-GPU, all-resident placement across the micro-batch
    candidates, with the expert unit either coalesced over the full batch or
    executed per micro-batch (``mode`` in {"coalesced", "microbatched"}).

    ``expert_s`` is the expert unit's compute time; ``nonexpert_s`` sums the
    other units' load/compute/store; ``total_s`` adds the expert unit's PCIe
    terms on top of both.  All values cover the whole model (N layers).
    """
    if mode not in ("coalesced", "microbatched"):
        raise ValueError("mode must be 'coalesced' or 'microbatched'")
    coalesced = mode == "coalesced"
    model, batch, system = request.model, request.batch, request.system
    if phase_kind is PhaseKind.PREFILL:
        phase = Phase.prefill(batch.input_len)
    else:
        phase = Phase.decode_step(batch.input_len, 1)

    rows = []
    for m in request.resolved_m_candidates():
        strategy = AllocationStrategy(
            placement=(Device.GPU, Device.GPU, Device.GPU),
            exp_r=model.experts_per_layer,
            exp_m=0,
            exp_c=0,
            m=m,
        )
        base = layer_latency(strategy, phase, system, model, batch, request.activation_map)
        nonexpert = sum(base.ops[i].total for i in NON_EXPERT_OPS)
        expert = expert_stage_time(
            strategy, phase, system, model, batch, request.activation_map, coalesced
        )
        n = model.num_layers
        rows.append(
            SweepRow(
                m=m,
                expert_s=n * expert.t_comp,
                nonexpert_s=n * nonexpert,
                total_s=n * (nonexpert + expert.total),
            )
        )
    return rows
