import random

import numpy as np
import pytest

from moeplan.costmodel import AllocationStrategy
from moeplan.eas import ActivationMap
from moeplan.hardware import Device, DeviceSpec, LinkSpec, SystemSpec
from moeplan.workload import BatchConfig, ModelConfig


@pytest.fixture
def toy_system():
    return SystemSpec(
        gpu=DeviceSpec("gpu", mem_bandwidth=100.0, peak_compute=1000.0, mem_capacity=1e12),
        cpu=DeviceSpec("cpu", mem_bandwidth=50.0, peak_compute=200.0, mem_capacity=1e12),
        link=LinkSpec(bandwidth=10.0),
    )


@pytest.fixture
def toy_model():
    return ModelConfig(
        num_layers=1, hidden_dim=2, expert_dim=4, experts_per_layer=2, top_k=1, dtype_bytes=2
    )


@pytest.fixture
def toy_batch():
    return BatchConfig(batch_size=2, input_len=2, output_len=0)


def all_gpu_strategy(num_experts: int, m: int) -> AllocationStrategy:
    return AllocationStrategy(
        placement=(Device.GPU, Device.GPU, Device.GPU),
        exp_r=num_experts,
        exp_m=0,
        exp_c=0,
        m=m,
    )


def all_cpu_strategy(num_experts: int, m: int) -> AllocationStrategy:
    return AllocationStrategy(
        placement=(Device.CPU, Device.CPU, Device.CPU),
        exp_r=0,
        exp_m=0,
        exp_c=num_experts,
        m=m,
    )


def random_system(rng: random.Random, duplex_prob: float = 0.7) -> SystemSpec:
    return SystemSpec(
        gpu=DeviceSpec("gpu", 10 ** rng.uniform(1, 3), 10 ** rng.uniform(2, 4), 1e9),
        cpu=DeviceSpec("cpu", 10 ** rng.uniform(0.5, 2.5), 10 ** rng.uniform(1.5, 3.5), 1e12),
        link=LinkSpec(10 ** rng.uniform(0, 2), duplex=rng.random() < duplex_prob),
    )


def random_small_model(rng: random.Random) -> ModelConfig:
    experts = rng.randint(2, 8)
    return ModelConfig(
        num_layers=rng.randint(1, 4),
        hidden_dim=rng.choice([2, 4, 8]),
        expert_dim=rng.choice([2, 4, 8]),
        experts_per_layer=experts,
        top_k=rng.randint(1, experts),
        dtype_bytes=rng.choice([1, 2, 4]),
    )


def random_activation_map(rng: random.Random, num_layers: int, experts: int) -> ActivationMap:
    counts = [[rng.randint(1, 50) for _ in range(experts)] for _ in range(num_layers)]
    return ActivationMap(np.asarray(counts, dtype=float))


def random_plan_request(seed: int):
    """A small randomized planning instance: <= 4 layers, <= 8 experts,
    <= 4 micro-batch candidates, GPU capacity spanning cramped to roomy."""
    from moeplan.planner import PlanRequest

    rng = random.Random(seed)
    base = random_system(rng)
    system = SystemSpec(
        DeviceSpec("gpu", base.gpu.mem_bandwidth, base.gpu.peak_compute, 10 ** rng.uniform(2, 7)),
        base.cpu,
        base.link,
    )
    model = random_small_model(rng)
    batch_size = rng.choice([2, 4, 8])
    batch = BatchConfig(
        batch_size=batch_size, input_len=rng.randint(1, 8), output_len=rng.randint(0, 4)
    )
    candidates = [m for m in (1, 2, 4, 8) if m <= batch_size]
    m_candidates = tuple(sorted(rng.sample(candidates, k=rng.randint(1, min(3, len(candidates))))))
    activation_map = None
    if rng.random() < 0.4:
        activation_map = random_activation_map(rng, model.num_layers, model.experts_per_layer)
    return PlanRequest(
        system=system,
        model=model,
        batch=batch,
        activation_map=activation_map,
        m_candidates=m_candidates,
    )
