"""Planning and simulation toolkit for MoE inference on a CPU-GPU node.

Submodules:
    hardware  - device/link specs and the roofline + transfer primitives
    workload  - model/batch configs and per-operation byte/FLOP counts
    costmodel - per-layer and end-to-end latency, VRAM budget, throughput
    planner   - exhaustive search for the minimum-latency allocation strategy
    eas       - expert-aware stratification of routing traces
    sim       - deterministic discrete-event simulator of the layer pipeline
    cli       - `moeplan` command-line front end
"""

__version__ = "0.1.0"
