"""Device and interconnect specs plus the two latency primitives.

A kernel on a device costs ``max(bytes / mem_bandwidth, flops / peak_compute)``;
a transfer over the CPU-GPU link costs ``bytes / effective link bandwidth``.
Everything downstream (per-op costs, the placement planner, the pipeline
simulator) is built on these two functions.

All byte and FLOP quantities are plain floats: at data-center scale they reach
1e14+ and exact integer arithmetic buys nothing here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Device(Enum):
    """The two compute devices a stage can be placed on."""

    CPU = "cpu"
    GPU = "gpu"


class Bound(Enum):
    """Which roofline term limits a kernel."""

    MEMORY = "memory-bound"
    COMPUTE = "compute-bound"
    BALANCED = "balanced"


def _require_positive_finite(value: float, field: str) -> None:
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{field} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class DeviceSpec:
    """One device: memory bandwidth (B/s), peak compute (FLOP/s), capacity (B)."""

    name: str
    mem_bandwidth: float
    peak_compute: float
    mem_capacity: float

    def __post_init__(self) -> None:
        _require_positive_finite(self.mem_bandwidth, "mem_bandwidth")
        _require_positive_finite(self.peak_compute, "peak_compute")
        _require_positive_finite(self.mem_capacity, "mem_capacity")

    @property
    def ridge_point(self) -> float:
        """Operational intensity (FLOP/byte) at which the device is balanced."""
        return self.peak_compute / self.mem_bandwidth


@dataclass(frozen=True)
class LinkSpec:
    """The CPU-GPU interconnect.

    ``bandwidth`` is the nominal per-direction rate; ``efficiency`` scales it to
    the achievable rate (some setups quote effective numbers directly, in which
    case leave efficiency at 1.0).  ``duplex`` says whether host-to-device and
    device-to-host transfers may proceed concurrently.
    """

    bandwidth: float
    duplex: bool = True
    efficiency: float = 1.0

    def __post_init__(self) -> None:
        _require_positive_finite(self.bandwidth, "bandwidth")
        if not (0.0 < self.efficiency <= 1.0):
            raise ValueError(f"efficiency must be in (0, 1], got {self.efficiency!r}")

    @property
    def effective_bandwidth(self) -> float:
        return self.bandwidth * self.efficiency


@dataclass(frozen=True)
class SystemSpec:
    """The hardware triple: GPU device, CPU device, and the link between them."""

    gpu: DeviceSpec
    cpu: DeviceSpec
    link: LinkSpec

    def __post_init__(self) -> None:
        if self.gpu.name == self.cpu.name:
            raise ValueError("gpu and cpu specs must have distinct names")

    def device(self, which: Device) -> DeviceSpec:
        return self.gpu if which is Device.GPU else self.cpu


def roofline_time(num_bytes: float, flops: float, dev: DeviceSpec) -> float:
    """Kernel latency in seconds: the slower of the memory and compute terms."""
    if num_bytes < 0 or flops < 0:
        raise ValueError("num_bytes and flops must be non-negative")
    return max(num_bytes / dev.mem_bandwidth, flops / dev.peak_compute)


def transfer_time(num_bytes: float, link: LinkSpec) -> float:
    """Seconds to move ``num_bytes`` across the link in one direction."""
    if num_bytes < 0:
        raise ValueError("num_bytes must be non-negative")
    return num_bytes / link.effective_bandwidth


def classify_bound(num_bytes: float, flops: float, dev: DeviceSpec) -> Bound:
    """Classify a kernel as memory-bound, compute-bound, or balanced.

    Agrees with the argmax of the two roofline terms; rejects the all-zero
    kernel, for which the classification is undefined.
    """
    if num_bytes < 0 or flops < 0:
        raise ValueError("num_bytes and flops must be non-negative")
    if num_bytes == 0 and flops == 0:
        raise ValueError("classification undefined when both num_bytes and flops are 0")
    mem = num_bytes / dev.mem_bandwidth
    comp = flops / dev.peak_compute
    if mem > comp:
        return Bound.MEMORY
    if mem < comp:
        return Bound.COMPUTE
    return Bound.BALANCED
