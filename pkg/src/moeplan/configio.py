"""YAML config loading for system, model, and batch descriptions.

Schemas (all keys required unless a default is noted):

system config:
    gpu.bw_bytes_per_s, gpu.tflops, gpu.vram_bytes
    cpu.bw_bytes_per_s, cpu.tflops, cpu.dram_bytes
    link.bw_bytes_per_s, link.duplex (default true), link.efficiency (default 1.0)

model config:
    num_layers, hidden_dim, expert_dim, experts_per_layer, top_k, dtype_bytes

batch config:
    batch_size, input_len, output_len

Numbers may be written in scientific notation; strings like "32e9" are
coerced.  ``--set key=value`` overrides use the same key paths.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import yaml

from .hardware import DeviceSpec, LinkSpec, SystemSpec
from .workload import BatchConfig, ModelConfig


class ConfigError(ValueError):
    """A config file is missing a key or holds an unusable value."""


def _load_yaml(path: str | Path) -> dict:
    path = Path(path)
    try:
        with path.open() as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: expected a key-value mapping at the top level")
    return dict(data)


def _get(tree: Mapping, dotted: str, path: Path, default: Any = ...) -> Any:
    node: Any = tree
    for part in dotted.split("."):
        if not isinstance(node, Mapping) or part not in node:
            if default is not ...:
                return default
            raise ConfigError(f"{path}: missing required key '{dotted}'")
        node = node[part]
    return node


def _as_number(value: Any, key: str, path: Path) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{path}: key '{key}' must be a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"{path}: key '{key}' must be a number, got {value!r}")


def _as_int(value: Any, key: str, path: Path) -> int:
    num = _as_number(value, key, path)
    if num != int(num):
        raise ConfigError(f"{path}: key '{key}' must be an integer, got {value!r}")
    return int(num)


def _as_bool(value: Any, key: str, path: Path) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "false"):
        return value.lower() == "true"
    raise ConfigError(f"{path}: key '{key}' must be a boolean, got {value!r}")


def apply_overrides(tree: dict, overrides: Mapping[str, str]) -> dict:
    """Apply dotted-path ``--set`` overrides to a config tree (string values;
    the schema coercion below interprets them)."""
    out = dict(tree)
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = out
        for part in parts[:-1]:
            child = node.get(part)
            node[part] = dict(child) if isinstance(child, Mapping) else {}
            node = node[part]
        node[parts[-1]] = value
    return out


def system_from_tree(tree: Mapping, path: Path) -> SystemSpec:
    def num(key: str) -> float:
        return _as_number(_get(tree, key, path), key, path)

    try:
        gpu = DeviceSpec(
            name="gpu",
            mem_bandwidth=num("gpu.bw_bytes_per_s"),
            peak_compute=num("gpu.tflops") * 1e12,
            mem_capacity=num("gpu.vram_bytes"),
        )
        cpu = DeviceSpec(
            name="cpu",
            mem_bandwidth=num("cpu.bw_bytes_per_s"),
            peak_compute=num("cpu.tflops") * 1e12,
            mem_capacity=num("cpu.dram_bytes"),
        )
        link = LinkSpec(
            bandwidth=num("link.bw_bytes_per_s"),
            duplex=_as_bool(_get(tree, "link.duplex", path, True), "link.duplex", path),
            efficiency=_as_number(
                _get(tree, "link.efficiency", path, 1.0), "link.efficiency", path
            ),
        )
        return SystemSpec(gpu=gpu, cpu=cpu, link=link)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None


def model_from_tree(tree: Mapping, path: Path) -> ModelConfig:
    def integer(key: str) -> int:
        return _as_int(_get(tree, key, path), key, path)

    try:
        return ModelConfig(
            num_layers=integer("num_layers"),
            hidden_dim=integer("hidden_dim"),
            expert_dim=integer("expert_dim"),
            experts_per_layer=integer("experts_per_layer"),
            top_k=integer("top_k"),
            dtype_bytes=integer("dtype_bytes"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None


def batch_from_tree(tree: Mapping, path: Path) -> BatchConfig:
    def integer(key: str) -> int:
        return _as_int(_get(tree, key, path), key, path)

    try:
        return BatchConfig(
            batch_size=integer("batch_size"),
            input_len=integer("input_len"),
            output_len=integer("output_len"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None


def load_system_spec(path: str | Path, overrides: Mapping[str, str] | None = None) -> SystemSpec:
    path = Path(path)
    tree = _load_yaml(path)
    if overrides:
        tree = apply_overrides(tree, overrides)
    return system_from_tree(tree, path)


def load_model_config(path: str | Path, overrides: Mapping[str, str] | None = None) -> ModelConfig:
    path = Path(path)
    tree = _load_yaml(path)
    if overrides:
        tree = apply_overrides(tree, overrides)
    return model_from_tree(tree, path)


def load_batch_config(path: str | Path, overrides: Mapping[str, str] | None = None) -> BatchConfig:
    path = Path(path)
    tree = _load_yaml(path)
    if overrides:
        tree = apply_overrides(tree, overrides)
    return batch_from_tree(tree, path)


# Key prefixes used to route --set overrides to the right config file.
SYSTEM_KEYS = ("gpu", "cpu", "link")
MODEL_KEYS = ("num_layers", "hidden_dim", "expert_dim", "experts_per_layer", "top_k", "dtype_bytes")
BATCH_KEYS = ("batch_size", "input_len", "output_len")


def route_overrides(pairs: Mapping[str, str]) -> tuple[dict, dict, dict]:
    """Split ``--set`` pairs into (system, model, batch) override maps."""
    sys_o: dict[str, str] = {}
    model_o: dict[str, str] = {}
    batch_o: dict[str, str] = {}
    for key, value in pairs.items():
        root = key.split(".", 1)[0]
        if root in SYSTEM_KEYS:
            sys_o[key] = value
        elif root in MODEL_KEYS:
            model_o[key] = value
        elif root in BATCH_KEYS:
            batch_o[key] = value
        else:
            raise ConfigError(f"--set key '{key}' does not match any config field")
    return sys_o, model_o, batch_o
