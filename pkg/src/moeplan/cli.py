"""`moeplan` command line: plan, sweep, tracegen, stratify, hitratio, simulate, report.

Exit codes: 0 success, 2 config/input errors, 3 no feasible plan.
All randomness flows from a single --seed; machine outputs embed a run
manifest and reproduce byte-for-byte on re-run (timestamp aside).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import costmodel, eas, planner, sim
from .configio import (
    ConfigError,
    load_batch_config,
    load_model_config,
    load_system_spec,
    route_overrides,
)
from .costmodel import AllocationStrategy, LayerCost, VramBudget
from .hardware import Device
from .manifest import build_manifest, manifest_comment, report_payload, write_json_report
from .workload import Phase, PhaseKind

EXIT_CONFIG_ERROR = 2
EXIT_NO_FEASIBLE_PLAN = 3

_OP_NAMES = ("qkv_proj", "attention", "out_proj", "expert_ffn")


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_set(pairs: tuple[str, ...]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got '{pair}'")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _parse_force(pairs: tuple[str, ...]) -> dict[int, Device]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--force expects xI=cpu|gpu, got '{pair}'")
        key, value = (p.strip().lower() for p in pair.split("=", 1))
        if key not in ("x0", "x1", "x2"):
            raise ConfigError(f"--force key must be x0, x1, or x2, got '{key}'")
        if value not in ("cpu", "gpu"):
            raise ConfigError(f"--force value must be cpu or gpu, got '{value}'")
        out[int(key[1])] = Device(value)
    return out


def _load_inputs(system_path, model_path, batch_path, set_pairs):
    sys_o, model_o, batch_o = route_overrides(_parse_set(set_pairs))
    system = load_system_spec(system_path, sys_o)
    model = load_model_config(model_path, model_o)
    batch = load_batch_config(batch_path, batch_o)
    return system, model, batch


def _strategy_dict(strategy: AllocationStrategy) -> dict:
    return {
        "placement": [d.value for d in strategy.placement],
        "exp_r": strategy.exp_r,
        "exp_m": strategy.exp_m,
        "exp_c": strategy.exp_c,
        "m": strategy.m,
        "coalesced_expert_batch": strategy.coalesced_expert_batch,
    }


def _strategy_from_dict(data: dict, source: str) -> AllocationStrategy:
    try:
        placement = tuple(Device(d) for d in data["placement"])
        return AllocationStrategy(
            placement=placement,  # type: ignore[arg-type]
            exp_r=int(data["exp_r"]),
            exp_m=int(data["exp_m"]),
            exp_c=int(data["exp_c"]),
            m=int(data["m"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: malformed strategy record: {exc}") from None


def _vram_dict(budget: VramBudget) -> dict:
    return {
        "resident_expert_bytes": budget.resident_expert_bytes,
        "non_moe_weight_bytes": budget.non_moe_weight_bytes,
        "intermediate_bytes": budget.intermediate_bytes,
        "kv_cache_bytes": budget.kv_cache_bytes,
        "workspace_bytes": budget.workspace_bytes,
        "used": budget.used,
        "capacity": budget.capacity,
        "feasible": budget.feasible,
    }


def _layer_breakdown_dict(cost: LayerCost) -> dict:
    return {
        _OP_NAMES[i]: {
            "load_s": cost.ops[i].t_load,
            "comp_s": cost.ops[i].t_comp,
            "store_s": cost.ops[i].t_store,
        }
        for i in range(4)
    }


def _echo_strategy(label: str, s: AllocationStrategy) -> None:
    x = " ".join(f"x{i}={s.placement[i].value}" for i in range(3))
    click.echo(
        f"  {label}: {x}  m={s.m}  experts: resident={s.exp_r} migrated={s.exp_m} cpu={s.exp_c}"
    )


def _echo_breakdown(title: str, cost: LayerCost) -> None:
    click.echo(f"{title}")
    click.echo(f"  {'op':<10} {'load_s':>12} {'comp_s':>12} {'store_s':>12} {'total_s':>12}")
    for i in range(4):
        op = cost.ops[i]
        click.echo(
            f"  {_OP_NAMES[i]:<10} {op.t_load:>12.6g} {op.t_comp:>12.6g} "
            f"{op.t_store:>12.6g} {op.total:>12.6g}"
        )
    click.echo(f"  {'layer':<10} {'':>12} {'':>12} {'':>12} {cost.total:>12.6g}")


def _echo_vram(title: str, budget: VramBudget) -> None:
    click.echo(f"{title}")
    rows = [
        ("resident experts", budget.resident_expert_bytes),
        ("non-MoE weights", budget.non_moe_weight_bytes),
        ("intermediates", budget.intermediate_bytes),
        ("kv cache", budget.kv_cache_bytes),
        ("workspace", budget.workspace_bytes),
        ("used", budget.used),
        ("capacity", budget.capacity),
    ]
    for name, value in rows:
        click.echo(f"  {name:<18} {value / 1e9:>12.4f} GB")
    click.echo(f"  feasible: {'yes' if budget.feasible else 'no'}")


def _load_activation_map(map_path, trace_path, clusters, ratio, seed):
    if map_path and trace_path:
        raise ConfigError("pass either --map or --trace, not both")
    if map_path:
        data = _read_json(Path(map_path))
        counts = data["result"]["activation_map"] if "result" in data else data["activation_map"]
        return eas.ActivationMap(np.asarray(counts, dtype=float))
    if trace_path:
        trace = eas.load_trace(trace_path)
        config = eas.StratificationConfig(
            num_clusters=clusters, sample_ratio=ratio, seed=seed
        )
        return eas.stratified_activation_map(trace, config)
    return None


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}") from None


@click.group()
@click.version_option()
def main() -> None:
    """Latency planning, expert stratification, and pipeline simulation for
    MoE inference on one CPU-GPU node."""


_common = [
    click.option("--system", "-s", "system_path", required=True, type=click.Path(), help="System YAML."),
    click.option("--model", "-m", "model_path", required=True, type=click.Path(), help="Model YAML."),
    click.option("--batch", "-b", "batch_path", required=True, type=click.Path(), help="Batch YAML."),
    click.option("--set", "set_pairs", multiple=True, metavar="KEY=VALUE", help="Config override."),
]


def _with_common(func):
    for option in reversed(_common):
        func = option(func)
    return func


@main.command(name="plan")
@_with_common
@click.option("--trace", "trace_path", type=click.Path(), help="Routing trace to stratify for expert weighting.")
@click.option("--map", "map_path", type=click.Path(), help="Activation-map JSON from `stratify`.")
@click.option("--m-candidates", help="Comma-separated micro-batch sizes (default: powers of two).")
@click.option("--vram-slack", type=float, default=0.05, show_default=True, help="Workspace fraction of VRAM.")
@click.option("--forbid-cpu-attention", is_flag=True, help="Prune strategies placing attention on the CPU.")
@click.option("--force", "force_pairs", multiple=True, metavar="xI=DEV", help="Pin an op placement, e.g. x1=gpu.")
@click.option("--reuse-migrated-experts", is_flag=True, help="Charge decode expert migration once, not per step.")
@click.option("--clusters", type=int, default=8, show_default=True, help="Strata count when --trace is given.")
@click.option("--ratio", type=float, default=0.05, show_default=True, help="Prototype ratio when --trace is given.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), help="Write the machine-readable plan report here.")
def cmd_plan(
    system_path, model_path, batch_path, set_pairs, trace_path, map_path, m_candidates,
    vram_slack, forbid_cpu_attention, force_pairs, reuse_migrated_experts, clusters,
    ratio, seed, out_path,
) -> None:
    """Search the allocation space and report the minimum-latency plan."""
    try:
        system, model, batch = _load_inputs(system_path, model_path, batch_path, set_pairs)
        activation_map = _load_activation_map(map_path, trace_path, clusters, ratio, seed)
        m_tuple = None
        if m_candidates:
            m_tuple = tuple(int(v) for v in m_candidates.split(","))
        request = planner.PlanRequest(
            system=system,
            model=model,
            batch=batch,
            activation_map=activation_map,
            m_candidates=m_tuple,
            constraints=planner.SearchConstraints(
                vram_slack_fraction=vram_slack,
                forbid_cpu_attention=forbid_cpu_attention,
                force_placement=_parse_force(force_pairs) or None,
            ),
            migrate_once_per_decode=reuse_migrated_experts,
        )
        request.resolved_m_candidates()
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG_ERROR, str(exc))

    try:
        result = planner.plan(request)
    except planner.NoFeasiblePlan as exc:
        _fail(EXIT_NO_FEASIBLE_PLAN, f"no feasible plan: {exc}")

    prefill_cost = costmodel.layer_latency(
        result.prefill_strategy, Phase.prefill(batch.input_len), system, model, batch, activation_map
    )
    decode_cost = None
    if batch.output_len > 0:
        decode_cost = costmodel.layer_latency(
            result.decode_strategy, Phase.decode_step(batch.input_len, 1), system, model, batch,
            activation_map,
        )

    click.echo("Selected plan")
    _echo_strategy("prefill", result.prefill_strategy)
    _echo_strategy("decode ", result.decode_strategy)
    p = result.predicted
    tokens = f"{p.tokens_per_s:.6g}" if p.tokens_per_s is not None else "n/a (output_len=0)"
    click.echo(
        f"  predicted: prefill_s={p.prefill_s:.6g} decode_s={p.decode_s:.6g} "
        f"total_s={p.total_s:.6g} tokens_per_s={tokens} (generated tokens / total_s)"
    )
    _echo_breakdown("Per-op latency, one prefill layer (s)", prefill_cost)
    if decode_cost is not None:
        _echo_breakdown("Per-op latency, one decode-step layer (step 1, s)", decode_cost)
    _echo_vram("VRAM budget, prefill", result.vram_prefill)
    _echo_vram("VRAM budget, decode", result.vram_decode)
    click.echo(
        f"Search: {result.stats.candidates_enumerated} candidates, "
        f"{result.stats.feasible_count} feasible, {result.stats.elapsed_s:.3f} s"
    )

    if out_path:
        manifest = build_manifest(
            "plan",
            inputs={"system": system_path, "model": model_path, "batch": batch_path},
            seed=seed,
        )
        report = {
            "prefill_strategy": _strategy_dict(result.prefill_strategy),
            "decode_strategy": _strategy_dict(result.decode_strategy),
            "predicted": {
                "prefill_s": p.prefill_s,
                "decode_s": p.decode_s,
                "total_s": p.total_s,
                "tokens_per_s": p.tokens_per_s,
            },
            "vram": {
                "prefill": _vram_dict(result.vram_prefill),
                "decode": _vram_dict(result.vram_decode),
            },
            "prefill_layer_breakdown": _layer_breakdown_dict(prefill_cost),
            "search_stats": {
                "candidates_enumerated": result.stats.candidates_enumerated,
                "feasible_count": result.stats.feasible_count,
            },
        }
        if decode_cost is not None:
            report["decode_step1_layer_breakdown"] = _layer_breakdown_dict(decode_cost)
        write_json_report(out_path, report_payload(manifest, report, kind="plan"))
        click.echo(f"wrote {out_path}")


@main.command(name="sweep")
@_with_common
@click.option("--mode", type=click.Choice(["coalesced", "microbatched"]), required=True)
@click.option("--m-candidates", help="Comma-separated micro-batch sizes (default: powers of two).")
@click.option("--phase", type=click.Choice(["prefill", "decode"]), default="prefill", show_default=True)
@click.option("--out", "out_path", type=click.Path(), help="Write CSV here (default: stdout).")
def cmd_sweep(system_path, model_path, batch_path, set_pairs, mode, m_candidates, phase, out_path) -> None:
    """Micro-batch sensitivity table: (m, expert_s, nonexpert_s, total_s)."""
    try:
        system, model, batch = _load_inputs(system_path, model_path, batch_path, set_pairs)
        m_tuple = None
        if m_candidates:
            m_tuple = tuple(int(v) for v in m_candidates.split(","))
        request = planner.PlanRequest(system=system, model=model, batch=batch, m_candidates=m_tuple)
        rows = planner.sweep_microbatch(
            request, mode=mode, phase_kind=PhaseKind(phase)
        )
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG_ERROR, str(exc))

    manifest = build_manifest(
        "sweep",
        inputs={"system": system_path, "model": model_path, "batch": batch_path},
        extra={"mode": mode, "phase": phase},
    )
    lines = [manifest_comment(manifest), "m,expert_s,nonexpert_s,total_s"]
    lines += [f"{r.m},{r.expert_s!r},{r.nonexpert_s!r},{r.total_s!r}" for r in rows]
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@main.command(name="tracegen")
@click.option("--samples", type=int, default=10000, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True, help="Embedding dimension.")
@click.option("--layers", type=int, default=4, show_default=True)
@click.option("--experts", type=int, default=64, show_default=True)
@click.option("--top-k", type=int, default=8, show_default=True)
@click.option("--topics", type=int, default=8, show_default=True, help="Latent embedding clusters.")
@click.option("--zipf", type=float, default=1.2, show_default=True, help="Expert-preference skew exponent.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def cmd_tracegen(samples, dim, layers, experts, top_k, topics, zipf, seed, out_path) -> None:
    """Generate a synthetic routing trace."""
    try:
        trace = eas.generate_synthetic_trace(
            num_samples=samples,
            embedding_dim=dim,
            num_layers=layers,
            experts_per_layer=experts,
            top_k=top_k,
            num_latent_topics=topics,
            zipf_exponent=zipf,
            seed=seed,
        )
    except ValueError as exc:
        _fail(EXIT_CONFIG_ERROR, str(exc))
    eas.save_trace(trace, out_path)
    click.echo(f"wrote {out_path} ({trace.num_samples} samples, {trace.num_layers} layers)")


@main.command(name="stratify")
@click.option("--trace", "trace_path", type=click.Path(), required=True)
@click.option("--clusters", type=int, default=8, show_default=True)
@click.option("--ratio", type=float, default=0.05, show_default=True)
@click.option("--capacity", type=int, required=True, help="Resident experts per layer.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), help="Write the JSON report here.")
def cmd_stratify(trace_path, clusters, ratio, capacity, seed, out_path) -> None:
    """Cluster, select prototypes, probe, and pick resident experts."""
    try:
        trace = eas.load_trace(trace_path)
        config = eas.StratificationConfig(num_clusters=clusters, sample_ratio=ratio, seed=seed)
        clustering = eas.cluster(trace, config)
        prototypes = eas.select_prototypes(clustering, config.sample_ratio, config.seed)
        probed = eas.probe(trace, prototypes)
        plan_probed = eas.select_resident_experts(probed, capacity)
        exact = eas.exact_map(trace)
        plan_exact = eas.select_resident_experts(exact, capacity)
        hit_probed = eas.hit_ratio(trace, plan_probed)
        hit_exact = eas.hit_ratio(trace, plan_exact)
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG_ERROR, str(exc))

    click.echo(f"prototypes: {len(prototypes)} of {trace.num_samples} samples")
    click.echo(f"hit ratio (probed plan, event-weighted): {hit_probed:.4f}")
    click.echo(f"hit ratio (exact-map plan):              {hit_exact:.4f}")
    click.echo(f"approximation gap:                       {hit_exact - hit_probed:.4f}")

    if out_path:
        manifest = build_manifest(
            "stratify",
            inputs={"trace": trace_path},
            seed=seed,
            extra={"clusters": clusters, "ratio": ratio, "capacity": capacity},
        )
        result = {
            "num_prototypes": len(prototypes),
            "prototypes": list(prototypes),
            "activation_map": probed.to_lists(),
            "residency": plan_probed.to_lists(),
            "capacity_per_layer": capacity,
            "hit_ratio_probed": hit_probed,
            "hit_ratio_exact": hit_exact,
            "gap": hit_exact - hit_probed,
            "hit_ratio_definition": "activation events weighted by token counts",
        }
        write_json_report(out_path, report_payload(manifest, result, kind="stratify"))
        click.echo(f"wrote {out_path}")


@main.command(name="hitratio")
@click.option("--trace", "trace_path", type=click.Path(), required=True)
@click.option("--capacities", required=True, help="Comma-separated resident counts, e.g. 0,16,32,64.")
@click.option("--clusters", type=int, default=8, show_default=True)
@click.option("--ratio", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--baseline-seeds", type=int, default=50, show_default=True, help="Random plans averaged per capacity.")
@click.option("--out", "out_path", type=click.Path(), help="Write CSV here (default: stdout).")
def cmd_hitratio(trace_path, capacities, clusters, ratio, seed, baseline_seeds, out_path) -> None:
    """Stratified vs random resident-expert hit ratios across capacities."""
    try:
        caps = [int(v) for v in capacities.split(",")]
        trace = eas.load_trace(trace_path)
        config = eas.StratificationConfig(num_clusters=clusters, sample_ratio=ratio, seed=seed)
        probed = eas.stratified_activation_map(trace, config)
        rows = []
        for cap in caps:
            eas_hit = eas.hit_ratio(trace, eas.select_resident_experts(probed, cap))
            random_hits = [
                eas.hit_ratio(
                    trace,
                    eas.random_baseline(trace.experts_per_layer, cap, trace.num_layers, seed + i),
                )
                for i in range(baseline_seeds)
            ]
            rows.append((cap, eas_hit, float(np.mean(random_hits))))
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG_ERROR, str(exc))

    manifest = build_manifest(
        "hitratio",
        inputs={"trace": trace_path},
        seed=seed,
        extra={"clusters": clusters, "ratio": ratio, "baseline_seeds": baseline_seeds},
    )
    lines = [manifest_comment(manifest), "capacity,eas_hit_ratio,random_hit_ratio_mean"]
    lines += [f"{cap},{eas_hit!r},{rnd!r}" for cap, eas_hit, rnd in rows]
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@main.command(name="simulate")
@_with_common
@click.option("--plan", "plan_path", type=click.Path(), help="Plan JSON from `plan --out` (default: plan first).")
@click.option("--phase", type=click.Choice(["prefill", "decode"]), default="prefill", show_default=True)
@click.option("--step", type=int, default=1, show_default=True, help="Decode step to simulate.")
@click.option("--all-steps", is_flag=True, help="Simulate every decode step, not one representative step.")
@click.option("--out", "out_path", type=click.Path(), help="Write the timeline JSON here.")
def cmd_simulate(system_path, model_path, batch_path, set_pairs, plan_path, phase, step, all_steps, out_path) -> None:
    """Simulate one layer's overlapped schedule and compare to the analytical sum."""
    try:
        system, model, batch = _load_inputs(system_path, model_path, batch_path, set_pairs)
        if plan_path:
            record = _read_json(Path(plan_path))
            result = record.get("result", record)
            key = "prefill_strategy" if phase == "prefill" else "decode_strategy"
            if key not in result:
                raise ConfigError(f"{plan_path}: missing '{key}'")
            strategy = _strategy_from_dict(result[key], str(plan_path))
            if strategy.expert_total != model.experts_per_layer:
                raise ConfigError(
                    f"{plan_path}: strategy covers {strategy.expert_total} experts "
                    f"but the model has {model.experts_per_layer}"
                )
        else:
            request = planner.PlanRequest(system=system, model=model, batch=batch)
            planned = planner.plan(request)
            strategy = planned.prefill_strategy if phase == "prefill" else planned.decode_strategy
        if phase == "prefill":
            phases = [Phase.prefill(batch.input_len)]
        elif all_steps:
            if batch.output_len == 0:
                raise ConfigError("--all-steps requires output_len > 0")
            phases = [Phase.decode_step(batch.input_len, t) for t in range(1, batch.output_len + 1)]
        else:
            if not (1 <= step <= max(1, batch.output_len)):
                raise ConfigError(f"--step must be in 1..output_len, got {step}")
            phases = [Phase.decode_step(batch.input_len, step)]
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG_ERROR, str(exc))
    except planner.NoFeasiblePlan as exc:
        _fail(EXIT_NO_FEASIBLE_PLAN, f"no feasible plan: {exc}")

    comparisons = []
    last_timeline = None
    for ph in phases:
        comparison = sim.compare_to_model(strategy, ph, system, model, batch)
        tasks = sim.build_task_graph(strategy, ph, system, model, batch)
        last_timeline = sim.simulate(tasks, system)
        comparisons.append(comparison)

    analytical = sum(c.analytical_s for c in comparisons)
    simulated = sum(c.simulated_s for c in comparisons)
    ratio = 1.0 if analytical == 0 else simulated / analytical
    scope = phases[0].kind.value + (" (all steps)" if len(phases) > 1 else "")
    click.echo(f"Simulated one layer per {scope}: {len(phases)} schedule(s)")
    click.echo(f"  analytical_s={analytical:.6g} simulated_s={simulated:.6g} ratio={ratio:.6f}")
    busy: dict[str, float] = {}
    for entry in last_timeline.entries:
        busy[entry.resource.value] = busy.get(entry.resource.value, 0.0) + (entry.end - entry.start)
    if last_timeline.makespan > 0:
        util = " ".join(f"{k}={v / last_timeline.makespan:.2%}" for k, v in sorted(busy.items()))
        click.echo(f"  last schedule: makespan={last_timeline.makespan:.6g} s, utilization {util}")

    if out_path:
        manifest = build_manifest(
            "simulate",
            inputs={"system": system_path, "model": model_path, "batch": batch_path},
            extra={"phase": phase, "steps": len(phases)},
        )
        result = {
            "strategy": _strategy_dict(strategy),
            "analytical_s": analytical,
            "simulated_s": simulated,
            "ratio": ratio,
            "makespan_s": last_timeline.makespan,
            "tasks": sim.timeline_records(last_timeline),
        }
        write_json_report(out_path, report_payload(manifest, result, kind="timeline"))
        click.echo(f"wrote {out_path}")


@main.command(name="report")
@click.option("--in", "in_path", type=click.Path(), required=True, help="A JSON report emitted by another command.")
def cmd_report(in_path) -> None:
    """Re-render a machine-readable report as human tables."""
    try:
        record = _read_json(Path(in_path))
        kind = record.get("kind")
        result = record.get("result", {})
        if kind == "plan":
            click.echo("Plan report")
            for label in ("prefill_strategy", "decode_strategy"):
                _echo_strategy(label.split("_")[0], _strategy_from_dict(result[label], in_path))
            p = result["predicted"]
            tokens = p["tokens_per_s"]
            click.echo(
                f"  predicted: prefill_s={p['prefill_s']:.6g} decode_s={p['decode_s']:.6g} "
                f"total_s={p['total_s']:.6g} tokens_per_s="
                + (f"{tokens:.6g}" if tokens is not None else "n/a")
            )
            for phase_name, budget in result["vram"].items():
                click.echo(f"  vram[{phase_name}]: used {budget['used'] / 1e9:.3f} GB of "
                           f"{budget['capacity'] / 1e9:.3f} GB, feasible={budget['feasible']}")
        elif kind == "timeline":
            click.echo("Timeline report")
            click.echo(
                f"  analytical_s={result['analytical_s']:.6g} simulated_s={result['simulated_s']:.6g} "
                f"ratio={result['ratio']:.6f}"
            )
            click.echo(f"  {'task':<22} {'res':<6} {'ts':>12} {'dur':>12}")
            for row in result["tasks"]:
                click.echo(f"  {row['name']:<22} {row['res']:<6} {row['ts']:>12.6g} {row['dur']:>12.6g}")
        elif kind == "stratify":
            click.echo("Stratification report")
            click.echo(f"  prototypes: {result['num_prototypes']}")
            click.echo(f"  hit ratio probed: {result['hit_ratio_probed']:.4f}")
            click.echo(f"  hit ratio exact:  {result['hit_ratio_exact']:.4f}")
            click.echo(f"  gap:              {result['gap']:.4f}")
        else:
            raise ConfigError(f"{in_path}: unknown report kind {kind!r}")
    except (ConfigError, KeyError) as exc:
        _fail(EXIT_CONFIG_ERROR, str(exc))


if __name__ == "__main__":
    main()
