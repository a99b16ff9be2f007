"""
afd-explorer - Command Line

    python -m afdx search scenarios/desk/memory-flip.yaml --out results/flip
    python -m afdx eval SCENARIO --mode agg_afd --gpus 8 --attn 2
    python -m afdx breakdown SCENARIO --contexts 1024,65536
    python -m afdx placement-study scenarios/desk/placement-2p2d.yaml

Exit codes: 0 ok, 2 invalid scenario, 3 nothing feasible.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml
from pydantic import ValidationError

from afdx import __version__
from afdx.config import configure_logging, get_settings
from afdx.exceptions import AfdxError, InfeasibleConfigError, ScenarioError
from afdx.schemas.costs import CostSource
from afdx.schemas.deployment import DeploymentConfig, ServingMode, Transport, WorkerPlan
from afdx.schemas.estimate import PerfEstimate
from afdx.schemas.manifest import Command, RunManifest
from afdx.schemas.placement import PlacementPolicy
from afdx.schemas.scenario import Diagnostic, EvalContext, Scenario
from afdx.services import plots, reports, scenario as scenarios, studies
from afdx.services.engine import evaluate, evaluate_at
from afdx.services.search import rate_match_pd, run_search

logger = logging.getLogger("afdx.cli")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3


# ---------------------------------------------------------------------------
# Arguments
# ---------------------------------------------------------------------------

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", type=Path, help="Scenario YAML file")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (default: AFDX_OUTPUT_DIR/<command>)")
    parser.add_argument("--seed", type=int, default=0, help="Seed for sampled routing dumps")
    parser.add_argument("--threads", type=int, default=None, help="Worker processes (default: AFDX_THREADS)")
    parser.add_argument("--cost-source", choices=[s.value for s in CostSource], default=None)
    parser.add_argument("--calibration", type=Path, default=None, help="Calibration CSV for table/hybrid costs")
    parser.add_argument("--placement", choices=[p.value for p in PlacementPolicy], default=None)
    parser.add_argument("--count-input-tokens", action="store_true", help="Count prompt tokens in system throughput")
    parser.add_argument("--log-level", default=None, help="Logging level (default: AFDX_LOG_LEVEL)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afdx", description="Disaggregated LLM serving design-space explorer")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    search = sub.add_parser(Command.SEARCH.value, help="Enumerate deployments and report the Pareto frontier")
    _common(search)
    search.add_argument("--modes", default=None, help="Comma-separated serving modes")
    search.add_argument("--replica-min", type=int, default=None)
    search.add_argument("--replica-max", type=int, default=None)
    search.add_argument("--tp-set", default=None, help="Comma-separated TP candidates")
    search.add_argument("--top", type=int, default=10, help="Frontier points printed to stdout")
    search.add_argument("--max-configs", type=int, default=None)
    search.add_argument("--sweep-concurrency", action="store_true")
    search.add_argument("--dump-traffic", action="store_true", help="Write traffic.csv for the best-throughput config")
    search.add_argument("--dump-flows", action="store_true", help="Write flows.csv for the best-throughput config")

    ev = sub.add_parser(Command.EVAL.value, help="Evaluate one deployment")
    _common(ev)
    ev.add_argument("--config", type=Path, default=None, help="Deployment YAML/JSON (overrides the layout flags)")
    ev.add_argument("--mode", choices=[m.value for m in ServingMode], default=ServingMode.AGG_AFD.value)
    ev.add_argument("--gpus", type=int, default=8, help="GPUs per worker")
    ev.add_argument("--attn", type=int, default=None, help="Attention GPUs of an AFD worker")
    ev.add_argument("--tp", type=int, default=1)
    ev.add_argument("--microbatches", type=int, default=1)
    ev.add_argument("--transport", choices=[t.value for t in Transport], default=Transport.SPARSE.value)
    ev.add_argument("--prefill-workers", type=int, default=None, help="Default: rate-matched to the decode pool")
    ev.add_argument("--decode-workers", type=int, default=1)
    ev.add_argument("--replicas", type=int, default=None, help="Default: as many as the cluster holds")
    ev.add_argument("--concurrency", type=int, default=None, help="Fixed concurrency instead of the maximal one")
    ev.add_argument("--dump-traffic", action="store_true")
    ev.add_argument("--dump-flows", action="store_true")

    bd = sub.add_parser(Command.BREAKDOWN.value, help="Attention/FFN runtime and memory shares over context")
    _common(bd)
    bd.add_argument("--contexts", default=None, help="Comma-separated context lengths")

    ps = sub.add_parser(Command.PLACEMENT_STUDY.value, help="KV-transfer latency under both P/D placements")
    _common(ps)
    ps.add_argument("--kv-sizes", default=None, help="Comma-separated KV sizes in bytes")
    ps.add_argument("--sharded", action="store_true", help="Shard KV across attention ranks")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    flags = {
        "search.modes": getattr(args, "modes", None),
        "search.replica_min": getattr(args, "replica_min", None),
        "search.replica_max": getattr(args, "replica_max", None),
        "search.tp_candidates": getattr(args, "tp_set", None),
        "search.breakdown_contexts": getattr(args, "contexts", None),
        "search.kv_sizes": getattr(args, "kv_sizes", None),
        "search.sweep_concurrency": getattr(args, "sweep_concurrency", False) or None,
        "engine.efficiency.source": args.cost_source,
        "engine.placement": args.placement,
        "engine.count_input_tokens": args.count_input_tokens or None,
        "engine.kv_sharded": getattr(args, "sharded", False) or None,
    }
    return {k: v for k, v in flags.items() if v is not None}


def manifest_from_args(args: argparse.Namespace) -> RunManifest:
    out = args.out or get_settings().output_dir / args.command
    return RunManifest(
        scenario=args.scenario,
        command=Command(args.command),
        output_dir=out,
        seed=args.seed,
        overrides=_overrides(args),
    )


def prepare(manifest: RunManifest, calibration: Optional[Path] = None) -> tuple[Scenario, EvalContext]:
    """Load the scenario, apply flag overrides and build the evaluation context."""
    scenario = scenarios.load_scenario(manifest.scenario)
    overrides = dict(manifest.overrides)
    settings = get_settings()
    if "engine.efficiency.source" not in overrides and scenario.engine.efficiency.source == CostSource.ANALYTICAL:
        if settings.cost_source != CostSource.ANALYTICAL.value:
            overrides["engine.efficiency.source"] = settings.cost_source
    scenario = scenarios.apply_overrides(scenario, overrides)
    return scenario, scenarios.eval_context(scenario, calibration)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _print_point(p: PerfEstimate) -> None:
    row = reports.frontier_row(p)
    print(
        f"  {row['mode']:<12} {row['layout']:<48} c={row['concurrency']:<5} "
        f"ttft={row['ttft_ms']:.1f}ms tpot={row['tpot_ms']:.2f}ms "
        f"{row['tokens_s_user']:.1f} tok/s/user  {row['system_tokens_s']:.1f} tok/s"
    )


def _print_reasons(reasons: dict[str, int]) -> None:
    print("No feasible deployment. Infeasibility reasons:", file=sys.stderr)
    for reason, count in sorted(reasons.items()):
        print(f"  {reason:<18} {count}", file=sys.stderr)


def _write_dumps(args: argparse.Namespace, manifest: RunManifest, config: DeploymentConfig, ctx: EvalContext) -> None:
    out = manifest.output_dir
    if args.dump_traffic:
        reports.write_csv(studies.traffic_dump(config, ctx), out / "traffic.csv")
        plan = config.decode_plan
        ranks = plan.ffn_gpus if plan.is_afd else plan.ep
        tokens = ctx.engine.reference_batch
        reports.write_csv(studies.routing_sample(ctx, ranks, tokens, manifest.seed), out / "routing_sample.csv")
    if args.dump_flows:
        reports.write_csv(studies.flow_dump(config, ctx), out / "flows.csv")


def frontier_series(points: Sequence[PerfEstimate]) -> dict[str, list[tuple[float, float]]]:
    series: dict[str, list[tuple[float, float]]] = {}
    for p in points:
        series.setdefault(p.config.mode.value, []).append((p.per_user_rate, p.system_rate))
    return {mode: sorted(pts) for mode, pts in sorted(series.items())}


def run_search_command(args: argparse.Namespace, manifest: RunManifest) -> int:
    scenario, ctx = prepare(manifest, args.calibration)
    result = run_search(scenario.search, ctx, args.threads, args.max_configs)
    out = manifest.output_dir

    reports.write_csv(reports.frontier_frame(result.frontier), out / "frontier.csv")
    reports.write_jsonl(result.points, out / "all_points.jsonl")
    reports.write_json(reports.summary(result, scenario), out / "summary.json")
    chart = plots.render_chart(
        frontier_series(result.frontier),
        title=f"{scenario.model.name} / {scenario.workload.name}",
        x_label="tokens/s/user",
        y_label="system tokens/s",
        markers=[p.point for p in result.feasible],
    )
    (out / "frontier.svg").write_text(chart, encoding="utf-8")

    if not result.feasible:
        _print_reasons(result.reasons())
        return EXIT_INFEASIBLE

    best = max(result.feasible, key=lambda p: (p.system_rate, p.per_user_rate))
    _write_dumps(args, manifest, best.config, ctx)
    print(f"{len(result.frontier)} frontier points of {len(result.feasible)} feasible / {result.enumerated} enumerated")
    for p in sorted(result.frontier, key=lambda p: -p.system_rate)[: args.top]:
        _print_point(p)
    return EXIT_OK


def config_from_args(args: argparse.Namespace, ctx: EvalContext) -> DeploymentConfig:
    """Deployment from --config, or from the layout flags."""
    if args.config is not None:
        try:
            document = yaml.safe_load(args.config.read_text(encoding="utf-8"))
            return DeploymentConfig.model_validate(document)
        except (OSError, yaml.YAMLError, ValidationError) as e:
            raise ScenarioError([Diagnostic(path="config", message=str(e))])

    mode = ServingMode(args.mode)
    try:
        if mode.is_afd:
            attn = args.attn if args.attn is not None else max(1, args.gpus // 4)
            ffn = args.gpus - attn
            plan = WorkerPlan(gpus=args.gpus, tp=args.tp, dp=max(1, attn // args.tp), ep=max(1, ffn),
                              attn_gpus=attn, ffn_gpus=ffn, microbatches=args.microbatches,
                              transport=Transport(args.transport))
        else:
            plan = WorkerPlan(gpus=args.gpus, tp=args.tp, dp=max(1, args.gpus // args.tp), ep=args.gpus)
        fields = {"mode": mode, "worker": plan, "replicas": 1}
        if mode.is_disagg:
            prefill_workers = args.prefill_workers
            if prefill_workers is None:
                prefill_workers = rate_match_pd(ctx, args.decode_workers, plan, plan)
                logger.info("Rate-matched %d prefill worker(s) to %d decode", prefill_workers, args.decode_workers)
            fields.update(prefill_worker=plan, prefill_workers=prefill_workers, decode_workers=args.decode_workers)
        config = DeploymentConfig(**fields)
        replicas = args.replicas or max(1, ctx.cluster.num_gpus // config.gpus_per_replica)
        return config.model_copy(update={"replicas": replicas})
    except ValidationError as e:
        raise ScenarioError([Diagnostic(path="config", message=str(e))])


def run_eval_command(args: argparse.Namespace, manifest: RunManifest) -> int:
    scenario, ctx = prepare(manifest, args.calibration)
    config = config_from_args(args, ctx)
    if args.concurrency is not None:
        estimate = evaluate_at(config, ctx, args.concurrency)
    else:
        estimate = evaluate(config, ctx, scenario.search.concurrency_min, scenario.search.concurrency_max)

    out = manifest.output_dir
    reports.write_jsonl([estimate], out / "estimate.jsonl")
    reports.write_csv(reports.frontier_frame([estimate]), out / "estimate.csv")
    _write_dumps(args, manifest, config, ctx)

    if not estimate.feasible:
        print(f"infeasible: {estimate.reason.value}", file=sys.stderr)
        for note in estimate.detail.notes:
            print(f"  {note}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _print_point(estimate)
    return EXIT_OK


def run_breakdown_command(args: argparse.Namespace, manifest: RunManifest) -> int:
    scenario, ctx = prepare(manifest, args.calibration)
    rows = studies.breakdown_rows(scenario, table=ctx.table)
    frame = reports.breakdown_frame(scenario.model.name, rows)
    out = manifest.output_dir
    reports.write_csv(frame, out / "breakdown.csv")
    chart = plots.render_chart(
        {
            "attention time": list(zip(frame["context"], frame["attn_time_share"])),
            "FFN time": list(zip(frame["context"], frame["ffn_time_share"])),
            "weights": list(zip(frame["context"], frame["weight_share"])),
            "KV cache": list(zip(frame["context"], frame["kv_share"])),
            "activations": list(zip(frame["context"], frame["activation_share"])),
        },
        title=f"{scenario.model.name}: runtime and memory shares",
        x_label="context length",
        y_label="share",
        log_x=True,
    )
    (out / "breakdown.svg").write_text(chart, encoding="utf-8")
    print(frame.to_string(index=False))
    return EXIT_OK


def run_placement_command(args: argparse.Namespace, manifest: RunManifest) -> int:
    scenario, _ = prepare(manifest, args.calibration)
    frame = studies.placement_study(scenario)
    out = manifest.output_dir
    reports.write_csv(frame, out / "kv_latency.csv")

    series = {}
    for worker, rows in frame.groupby("worker", sort=False):
        gb = rows["kv_bytes"] / 1e9
        series[f"{worker} segregated"] = list(zip(gb, rows["segregated_s"] * 1e3))
        series[f"{worker} paired"] = list(zip(gb, rows["paired_s"] * 1e3))
    chart = plots.render_chart(series, title="KV transfer latency", x_label="KV size (GB)", y_label="latency (ms)")
    (out / "kv_latency.svg").write_text(chart, encoding="utf-8")
    print(frame.to_string(index=False))
    for worker, rows in frame.groupby("worker", sort=False):
        print(f"{worker}: segregated latency vs size R^2 = {studies.linear_fit_r2(rows['kv_bytes'], rows['segregated_s']):.5f}")
    return EXIT_OK


COMMANDS = {
    Command.SEARCH: run_search_command,
    Command.EVAL: run_eval_command,
    Command.BREAKDOWN: run_breakdown_command,
    Command.PLACEMENT_STUDY: run_placement_command,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        manifest = manifest_from_args(args)
        manifest.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[manifest.command](args, manifest)
    except ScenarioError as e:
        for d in e.diagnostics:
            print(f"{d.path}: {d.message}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleConfigError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except AfdxError as e:
        logger.error("%s", e)
        return EXIT_INVALID
