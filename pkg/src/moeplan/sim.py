"""Deterministic discrete-event simulator of the per-layer CPU/GPU/PCIe pipeline.

A layer is expanded into a task DAG: per-micro-batch tasks for the non-expert
units chained by data dependency (independent across micro-batches), transfer
tasks on the link wherever the analytical model charges one, an expert-weight
migration task that can overlap the micro-batch work, one coalesced expert
task per device gated on all micro-batch outputs, and a final merge.  Greedy
non-preemptive list scheduling then yields the overlapped makespan, which can
only improve on the sequential analytical sum.

Durations come from the same cost-model primitives the analytical path uses,
so a pure chain (one micro-batch, one device, no migration) reproduces the
analytical layer latency exactly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum

from .costmodel import (
    AllocationStrategy,
    expert_stage_parts,
    layer_latency,
)
from .eas import ActivationMap
from .hardware import Device, SystemSpec, roofline_time, transfer_time
from .workload import (
    OP_ATTN,
    OP_QKV,
    NON_EXPERT_OPS,
    BatchConfig,
    ModelConfig,
    Phase,
    kv_store_bytes,
    op_cost,
)


class Resource(Enum):
    GPU_COMPUTE = "gpu"
    CPU_COMPUTE = "cpu"
    LINK_H2D = "h2d"
    LINK_D2H = "d2h"


_COMPUTE_RESOURCE = {Device.GPU: Resource.GPU_COMPUTE, Device.CPU: Resource.CPU_COMPUTE}


def _link_direction(src: Device, dst: Device) -> Resource:
    return Resource.LINK_H2D if dst is Device.GPU else Resource.LINK_D2H


@dataclass(frozen=True)
class Task:
    id: str
    resource: Resource
    duration: float
    deps: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("task duration must be >= 0")


class CycleDetected(Exception):
    pass


class TimelineInvalid(Exception):
    pass


@dataclass(frozen=True)
class TimelineEntry:
    task_id: str
    resource: Resource
    start: float
    end: float


@dataclass(frozen=True)
class Timeline:
    entries: tuple[TimelineEntry, ...]
    makespan: float

    def entry(self, task_id: str) -> TimelineEntry:
        for e in self.entries:
            if e.task_id == task_id:
                return e
        raise KeyError(task_id)


def build_task_graph(
    strategy: AllocationStrategy,
    phase: Phase,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    activation_map: ActivationMap | None = None,
) -> list[Task]:
    """Expand one layer of one phase into tasks with cost-model durations."""
    link = system.link
    m_batches = strategy.num_micro_batches(batch)
    tasks: list[Task] = []

    prev_chain_dev = strategy.expert_stage_device
    last_op2: list[str] = []
    for j in range(m_batches):
        prev_task: str | None = None
        prev_dev = prev_chain_dev
        for i in NON_EXPERT_OPS:
            dev = strategy.placement[i]
            cost = op_cost(i, phase, model, strategy.m)
            deps = (prev_task,) if prev_task else ()
            if dev is not prev_dev:
                xfer = Task(
                    id=f"xfer:op{i}:mb{j}",
                    resource=_link_direction(prev_dev, dev),
                    duration=transfer_time(cost.d_x, link),
                    deps=deps,
                )
                tasks.append(xfer)
                deps = (xfer.id,)
            if i == OP_ATTN and (
                strategy.placement[OP_QKV] is Device.GPU and strategy.placement[OP_ATTN] is Device.CPU
            ):
                kv = Task(
                    id=f"kvstore:mb{j}",
                    resource=Resource.LINK_D2H,
                    duration=transfer_time(kv_store_bytes(model, strategy.m, phase.seq_len), link),
                    deps=deps,
                )
                tasks.append(kv)
                deps = (kv.id,)
            comp = Task(
                id=f"op{i}:mb{j}",
                resource=_COMPUTE_RESOURCE[dev],
                duration=roofline_time(cost.total_bytes, cost.flops, system.device(dev)),
                deps=deps,
            )
            tasks.append(comp)
            prev_task = comp.id
            prev_dev = dev
        last_op2.append(prev_task)

    parts = expert_stage_parts(strategy, phase, system, model, batch, activation_map)

    gather = Task(
        id="expert:gather",
        resource=Resource.LINK_H2D,
        duration=parts.act_load,
        deps=tuple(last_op2),
    )
    tasks.append(gather)
    expert_deps = [gather.id]

    if strategy.exp_m > 0:
        migrate = Task(
            id="expert:migrate",
            resource=Resource.LINK_H2D,
            duration=parts.mig_load,
        )
        tasks.append(migrate)

    merge_deps = []
    if strategy.num_gpu_experts > 0:
        gpu_deps = tuple(expert_deps + (["expert:migrate"] if strategy.exp_m > 0 else []))
        gpu_task = Task(
            id="expert:gpu", resource=Resource.GPU_COMPUTE, duration=parts.lat_gpu, deps=gpu_deps
        )
        tasks.append(gpu_task)
        merge_deps.append(gpu_task.id)
    if strategy.exp_c > 0:
        cpu_task = Task(
            id="expert:cpu",
            resource=Resource.CPU_COMPUTE,
            duration=parts.lat_cpu,
            deps=tuple(expert_deps),
        )
        tasks.append(cpu_task)
        merge_deps.append(cpu_task.id)
        if parts.return_store > 0:
            ret = Task(
                id="expert:return",
                resource=Resource.LINK_H2D,
                duration=parts.return_store,
                deps=(cpu_task.id,),
            )
            tasks.append(ret)
            merge_deps.append(ret.id)

    tasks.append(
        Task(
            id="expert:merge",
            resource=_COMPUTE_RESOURCE[strategy.expert_stage_device],
            duration=0.0,
            deps=tuple(merge_deps),
        )
    )
    return tasks


def _topological_index(tasks: list[Task]) -> dict[str, int]:
    by_id = {t.id: t for t in tasks}
    if len(by_id) != len(tasks):
        raise ValueError("duplicate task ids")
    indegree = {t.id: 0 for t in tasks}
    children: dict[str, list[str]] = {t.id: [] for t in tasks}
    for t in tasks:
        for d in t.deps:
            if d not in by_id:
                raise ValueError(f"task {t.id} depends on unknown task {d}")
            indegree[t.id] += 1
            children[d].append(t.id)
    ready = [t.id for t in tasks if indegree[t.id] == 0]
    order: dict[str, int] = {}
    while ready:
        ready.sort()
        nxt = ready.pop(0)
        order[nxt] = len(order)
        for child in children[nxt]:
            indegree[child] -= 1
            if indegree[child] == 0:
                ready.append(child)
    if len(order) != len(tasks):
        raise CycleDetected("task graph contains a cycle")
    return order


def simulate(tasks: list[Task], system: SystemSpec) -> Timeline:
    """Greedy non-preemptive list scheduling on exclusive resources.

    Ready tasks are dispatched in (topological index, id) order; each resource
    runs one task at a time; the two link directions are independent resources
    iff the link is duplex, otherwise they share one.
    """
    if not tasks:
        return Timeline(entries=(), makespan=0.0)
    topo = _topological_index(tasks)
    by_id = {t.id: t for t in tasks}

    def lane(resource: Resource) -> str:
        if not system.link.duplex and resource in (Resource.LINK_H2D, Resource.LINK_D2H):
            return "link"
        return resource.value

    lane_free: dict[str, float] = {}
    finish: dict[str, float] = {}
    entries: list[TimelineEntry] = []
    pending = set(by_id)
    running: list[tuple[float, str]] = []  # (end, id) heap
    now = 0.0

    def ready_tasks() -> list[Task]:
        out = [
            by_id[tid]
            for tid in pending
            if all(d in finish and finish[d] <= now for d in by_id[tid].deps)
        ]
        out.sort(key=lambda t: (topo[t.id], t.id))
        return out

    while pending or running:
        dispatched = False
        for t in ready_tasks():
            ln = lane(t.resource)
            if lane_free.get(ln, 0.0) <= now:
                start = now
                end = start + t.duration
                lane_free[ln] = end
                finish[t.id] = end
                entries.append(TimelineEntry(t.id, t.resource, start, end))
                pending.discard(t.id)
                heapq.heappush(running, (end, t.id))
                dispatched = True
        if dispatched:
            continue
        if not running:
            raise CycleDetected("no runnable task but work remains")
        next_end = heapq.heappop(running)[0]
        while running and running[0][0] == next_end:
            heapq.heappop(running)
        now = max(now, next_end)

    makespan = max(e.end for e in entries)
    return Timeline(entries=tuple(entries), makespan=makespan)


def validate_timeline(timeline: Timeline, tasks: list[Task], system: SystemSpec) -> None:
    """Check the four structural invariants; raise TimelineInvalid on violation."""
    by_id = {t.id: t for t in tasks}
    seen = {e.task_id for e in timeline.entries}
    if seen != set(by_id):
        raise TimelineInvalid("timeline does not cover exactly the task set")

    ends = {}
    for e in timeline.entries:
        t = by_id[e.task_id]
        if not math.isclose(e.end, e.start + t.duration, rel_tol=0, abs_tol=1e-12):
            raise TimelineInvalid(f"{e.task_id}: end != start + duration")
        ends[e.task_id] = e.end

    for e in timeline.entries:
        for d in by_id[e.task_id].deps:
            if e.start + 1e-12 < ends[d]:
                raise TimelineInvalid(f"{e.task_id} starts before dependency {d} ends")

    def lane(resource: Resource) -> str:
        if not system.link.duplex and resource in (Resource.LINK_H2D, Resource.LINK_D2H):
            return "link"
        return resource.value

    by_lane: dict[str, list[TimelineEntry]] = {}
    for e in timeline.entries:
        by_lane.setdefault(lane(e.resource), []).append(e)
    for lane_entries in by_lane.values():
        lane_entries.sort(key=lambda e: (e.start, e.end))
        for a, b in zip(lane_entries, lane_entries[1:]):
            if b.start + 1e-12 < a.end:
                raise TimelineInvalid(f"{a.task_id} and {b.task_id} overlap on one resource")

    if timeline.entries and not math.isclose(
        timeline.makespan, max(e.end for e in timeline.entries), rel_tol=0, abs_tol=1e-12
    ):
        raise TimelineInvalid("makespan != max end")


@dataclass(frozen=True)
class ModelComparison:
    analytical_s: float
    simulated_s: float
    ratio: float


def compare_to_model(
    strategy: AllocationStrategy,
    phase: Phase,
    system: SystemSpec,
    model: ModelConfig,
    batch: BatchConfig,
    activation_map: ActivationMap | None = None,
) -> ModelComparison:
    """Simulate one layer and compare its makespan to the sequential analytical
    sum.  Overlap can only help, so simulated <= analytical (+ float noise);
    pure chains match exactly."""
    analytical = layer_latency(strategy, phase, system, model, batch, activation_map).total
    tasks = build_task_graph(strategy, phase, system, model, batch, activation_map)
    timeline = simulate(tasks, system)
    ratio = 1.0 if analytical == 0 else timeline.makespan / analytical
    return ModelComparison(analytical_s=analytical, simulated_s=timeline.makespan, ratio=ratio)


def timeline_records(timeline: Timeline) -> list[dict]:
    """Trace-event records: one {name, res, ts, dur} dict per task."""
    return [
        {"name": e.task_id, "res": e.resource.value, "ts": e.start, "dur": e.end - e.start}
        for e in timeline.entries
    ]
