"""Command-line entry point: ``confroute <subcommand> [options]``.

Every subcommand writes into ``--out`` (default: ``$CONFROUTE_OUT`` or the
current directory) and embeds a run manifest in each file it writes, as a
``manifest`` key in JSON or a leading ``# manifest`` comment line in CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__

OUT_ENV = "CONFROUTE_OUT"


class CliError(Exception):
    pass


def _versions() -> dict:
    import numpy
    import scipy

    return {"confroute": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__}


def build_manifest(args: argparse.Namespace) -> dict:
    params = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "out"):
            continue
        params[k] = str(v) if isinstance(v, Path) else v
    return {
        "subcommand": args.command,
        "seed": getattr(args, "seed", None),
        "parameters": params,
        "versions": _versions(),
    }


def _comment(manifest: dict) -> str:
    return "manifest " + json.dumps(manifest, sort_keys=True, separators=(",", ":"))


def _write_json(path: Path, body: dict, manifest: dict) -> None:
    body = dict(body)
    body["manifest"] = manifest
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _require(*paths: Path | None) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise CliError(f"input not found: {p}")


def _load_calls(args):
    from .model import read_trace
    from .scenario import europe_workload
    from .simulator import gen_trace

    if args.trace is not None:
        _require(args.trace)
        return read_trace(args.trace)
    return gen_trace(europe_workload(args.seed, args.calls_per_day, args.days))


def _load_topology(args):
    from .model import ResourceModel, load_topology
    from .scenario import europe_topology

    if getattr(args, "topology", None) is not None:
        _require(args.topology)
        topo, res = load_topology(args.topology)
    else:
        topo, res = europe_topology(), ResourceModel.default()
    if getattr(args, "resources", None) is not None:
        _require(args.resources)
        res = ResourceModel.from_dict(json.loads(Path(args.resources).read_text()))
    return topo, res


# -- subcommands ------------------------------------------------------------------


def cmd_gen_trace(args, out: Path, manifest: dict) -> None:
    from .model import write_trace
    from .scenario import europe_workload
    from .simulator import SyntheticWorkloadSpec, gen_trace

    if args.spec is not None:
        _require(args.spec)
        spec = SyntheticWorkloadSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        spec = europe_workload(args.seed, args.calls_per_day, args.days)
    calls = gen_trace(spec)
    write_trace(out / "trace.csv", calls, _comment(manifest))
    print(f"wrote {len(calls)} calls to {out / 'trace.csv'}")


def cmd_analyze(args, out: Path, manifest: dict) -> None:
    from .measurement import analyze, elasticity_deltas, fraction_f, hourly_medians, read_records, write_f_matrix

    _require(args.records, args.after)
    records = read_records(args.records)
    summary = analyze(records, args.threshold_ms)
    if args.after is not None:
        after = read_records(args.after)
        summary["elasticity"] = [
            {"country": c, "dc": d, "latency_delta_ms": dl, "loss_delta_pct": dloss}
            for (c, d), (dl, dloss) in elasticity_deltas(records, after).items()
        ]
    _write_json(out / "measurement_summary.json", summary, manifest)
    write_f_matrix(out / "f_matrix.csv", fraction_f(hourly_medians(records), args.threshold_ms), _comment(manifest))
    print(f"analysed {len(records)} records")


def cmd_forecast(args, out: Path, manifest: dict) -> None:
    from .forecast import HWParams, accuracy_report, dense, forecast_many, read_series_csv, top_k_configs
    from .planner import demand_from_calls

    if args.series is not None:
        _require(args.series)
        raw = read_series_csv(args.series)
    elif args.trace is not None:
        _require(args.trace)
        from .model import read_trace

        raw = defaultdict(dict)
        for (slot, cfg), n in demand_from_calls(read_trace(args.trace), reduced=False).items():
            raw[cfg][slot] = n
    else:
        raise CliError("forecast needs --series or --trace")
    if not raw:
        raise CliError("no series to forecast")
    start = min(min(v) for v in raw.values())
    stop = max(max(v) for v in raw.values()) + 1
    totals = {cfg: sum(v.values()) for cfg, v in raw.items()}
    chosen, coverage = top_k_configs(totals, args.top_k)
    fit_stop = stop - args.holdout
    horizon = args.holdout or args.horizon
    params = HWParams(args.alpha, args.beta, args.gamma, args.season)
    series = {cfg: dense(raw[cfg], start, fit_stop) for cfg in chosen}
    preds = forecast_many(series, params, args.workers)

    with open(out / "forecast.csv", "w", newline="") as fh:
        fh.write(f"# {_comment(manifest)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "config", "calls"])
        for cfg in sorted(preds):
            for h, v in enumerate(preds[cfg][:horizon]):
                w.writerow([fit_stop + h, cfg.key(), repr(float(v))])
    body = {"configs": len(chosen), "coverage": coverage, "first_forecast_slot": fit_stop, "horizon": horizon}
    if args.holdout:
        actual = {cfg: dense(raw[cfg], fit_stop, stop) for cfg in chosen}
        rep = accuracy_report({c: p[:horizon] for c, p in preds.items()}, actual)
        body["accuracy"] = {
            "per_config": {k: {"mae": sc.mae, "rmse": sc.rmse} for k, sc in rep.per_config.items()},
            "median_mae": rep.median_mae,
            "median_rmse": rep.median_rmse,
            "mae_cdf": [list(p) for p in rep.mae_cdf],
            "rmse_cdf": [list(p) for p in rep.rmse_cdf],
        }
    _write_json(out / "forecast_report.json", body, manifest)
    print(f"forecast {len(chosen)} configs covering {coverage:.1%} of calls")


def cmd_ramp(args, out: Path, manifest: dict) -> None:
    from .model import read_trace
    from .planner import demand_from_calls
    from .ramp import RampState, allocate_capacity, fractions_to_internet_cap, participants_by_country, \
        read_metric_streams, run_ramp, write_trajectory

    _require(args.metrics, args.trace)
    streams = read_metric_streams(args.metrics)
    rows = []
    by_slot: dict[tuple[str, str], list[tuple[int, float]]] = {}
    for (country, dc), samples in streams.items():
        state = RampState(country, dc, step_pct=args.step_pct, cap_pct=args.cap_pct, hold_slots=args.hold_slots)
        traj = []
        for sample, res in zip(samples, run_ramp(state, samples)):
            rows.append((sample.slot, country, dc, res.state.fraction_pct, res.action.value))
            traj.append((sample.slot, res.state.fraction_pct))
        by_slot[(country, dc)] = traj
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    write_trajectory(out / "ramp_trajectory.csv", rows, _comment(manifest))

    final = {k: (v[-1][1] if v else 0.0) for k, v in sorted(by_slot.items())}
    body = {"final_fraction_pct": [{"country": c, "dc": d, "fraction_pct": f} for (c, d), f in final.items()]}
    if args.trace is not None:
        participants = participants_by_country(demand_from_calls(read_trace(args.trace), reduced=False))
        budgets = None
        if args.peering_gbps is not None:
            budgets = allocate_capacity({d: args.peering_gbps for _, d in final}, {k: 1.0 for k in final})
        caps = {}
        for slot in sorted({s for _, s in participants}):
            # the fraction in force at a slot is the last one decided at or before it
            fr = {key: next((f for s, f in reversed(traj) if s <= slot), 0.0) for key, traj in by_slot.items()}
            part = {k: v for k, v in participants.items() if k[1] == slot}
            caps.update(fractions_to_internet_cap(fr, part, _load_topology(args)[1], budgets))
        body["internet_cap_gbps"] = [{"dc": d, "slot": s, "gbps": v} for (d, s), v in sorted(caps.items())]
    _write_json(out / "internet_cap.json", body, manifest)
    print(f"ramped {len(streams)} (country, dc) pairs")


def cmd_plan(args, out: Path, manifest: dict) -> None:
    from .lp import export_lp
    from .planner import PlanningProblem, build_lp, solve, validate_plan
    from .scenario import build_experiment

    if args.problem is not None:
        _require(args.problem)
        problems = [PlanningProblem.load(args.problem)]
    else:
        topo, res = _load_topology(args)
        exp = build_experiment(_load_calls(args), topo, res, headroom=args.headroom)
        problems = exp.problems(reduced=not args.raw)
    if args.e_bound is not None:
        problems = [replace(p, e_bound_ms=args.e_bound) for p in problems]
    objective = {"peaks": "peaks", "lf": "total_latency", "lf-e2e": "total_max_e2e"}[args.objective]
    if objective != "peaks":
        problems = [replace(p, e_bound_ms=None) for p in problems]

    plan = None
    for i, prob in enumerate(problems):
        model = build_lp(prob, objective, prune_zero_demand=True)
        if args.export_lp:
            suffix = "" if len(problems) == 1 else f"_{i}"
            export_lp(model, out / f"model{suffix}.lp", _comment(manifest))
        p = solve(model, args.backend)
        if p.is_optimal and objective != "peaks":
            from .planner import peak_loads

            p.y = peak_loads(p, prob)
        if p.is_optimal:
            report = validate_plan(p, prob)
            if not report.passed:
                raise CliError(f"plan failed validation: {report.failing()}")
        plan = p if plan is None else plan.merged(p)
        if not p.is_optimal:
            plan = p
            break
    plan.save(out / "plan.json", manifest)
    plan.write_links_csv(out / "links.csv", _comment(manifest))
    if not plan.is_optimal:
        raise CliError(f"plan status {plan.status}; most violated constraint family: {plan.most_violated}")
    print(f"plan objective {plan.objective:.6g} Mbps over {len(plan.y)} links")


def _loss_traces(path):
    if path is None:
        return None
    _require(path)
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            out[(row["country"], row["dc"], int(row["slot"]))] = (float(row["loss_pct"]), float(row["latency_ms"]))
    return out


def _experiment(args):
    from .scenario import build_experiment

    topo, res = _load_topology(args)
    exp = build_experiment(_load_calls(args), topo, res, headroom=args.headroom)
    if args.cap_pct is not None:
        exp = build_experiment(
            exp.calls, topo, res, headroom=args.headroom,
            fractions={k: min(v, args.cap_pct / 100.0) for k, v in exp.fractions.items()},
        )
    if args.e_bound is not None:
        exp.e_bounds = {d: args.e_bound for d in exp.days()}
    return exp


def cmd_simulate(args, out: Path, manifest: dict) -> None:
    from .controller import write_decisions
    from .scenario import run_policy

    exp = _experiment(args)
    result = run_policy(args.policy, exp, args.mode, args.seed, _loss_traces(args.loss_traces), args.backend)
    comment = _comment(manifest)
    write_decisions(out / "decisions.csv", result.decisions, comment)
    result.usage.write_csv(out / "usage.csv", comment)
    _write_json(out / "report.json", result.report.to_dict(), manifest)
    r = result.report
    print(f"{r.label}: sum of peaks {r.sum_of_peaks_mbps:.3f} Mbps, {r.calls} calls, {r.dropped} dropped")


def cmd_compare(args, out: Path, manifest: dict) -> None:
    from .scenario import POLICIES, run_policy

    names = args.policies.split(",") if args.policies else [
        p for p in POLICIES if not (args.mode != "oracle" and p == "lf-e2e")
    ]
    for n in names:
        if n not in POLICIES:
            raise CliError(f"unknown policy {n!r}; choose from {', '.join(POLICIES)}")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    reports = []
    for seed in seeds:
        args.seed = seed
        exp = _experiment(args)
        for name in names:
            reports.append(run_policy(name, exp, args.mode, seed, None, args.backend).report)
    rows = [r.summary_row() for r in reports]
    with open(out / "compare.csv", "w", newline="") as fh:
        fh.write(f"# {_comment(manifest)}\n")
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    _write_json(out / "compare.json", {"reports": [r.to_dict() for r in reports]}, manifest)
    width = max(len(n) for n in names)
    print(f"{'policy':<{width}}  seed  sum_of_peaks_mbps  e2e_mean_ms  inter_dc_migration_pct")
    for r in rows:
        print(f"{r['policy']:<{width}}  {r['seed']:>4}  {r['sum_of_peaks_mbps']:>17.3f}  {r['e2e_mean_ms']:>11.3f}"
              f"  {r['inter_dc_migration_pct']:>22.3f}")


# -- parser -----------------------------------------------------------------------


def _add_workload(p: argparse.ArgumentParser, with_trace: bool = True) -> None:
    if with_trace:
        p.add_argument("--trace", type=Path, help="call trace CSV; omit to synthesise one")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--calls-per-day", type=int, default=10_000)
    p.add_argument("--days", type=int, default=1)


def _add_scenario(p: argparse.ArgumentParser) -> None:
    p.add_argument("--topology", type=Path, help="topology JSON; omit for the built-in European scenario")
    p.add_argument("--resources", type=Path, help="resource model JSON (bandwidth_mbps, cores per media)")
    p.add_argument("--headroom", type=float, default=1.3, help="cores provisioned per unit of peak demand")
    p.add_argument("--e-bound", type=float, help="override the average max end-to-end latency bound (ms)")
    p.add_argument("--backend", choices=("highs", "simplex"), default="highs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="confroute", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or .)")
    sub = parser.add_subparsers(dest="command", required=True)
    _sub = sub.add_parser
    sub.add_parser = lambda *a, **k: _sub(*a, parents=[common], **k)  # every subcommand takes --out

    p = sub.add_parser("gen-trace", help="synthesise a call trace CSV")
    _add_workload(p, with_trace=False)
    p.add_argument("--spec", type=Path, help="workload spec JSON (overrides the built-in scenario)")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("analyze-measurements", help="latency/loss summaries from measurement records")
    p.add_argument("--records", type=Path, required=True, help="measurement CSV")
    p.add_argument("--after", type=Path, help="records from a higher-offload period, for elasticity deltas")
    p.add_argument("--threshold-ms", type=float, default=10.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("forecast", help="per-config demand forecasts and accuracy scores")
    p.add_argument("--series", type=Path, help="long CSV: slot, config, calls")
    p.add_argument("--trace", type=Path, help="call trace CSV to aggregate into series")
    p.add_argument("--horizon", type=int, default=48)
    p.add_argument("--holdout", type=int, default=0, help="score the last N slots instead of forecasting past the end")
    p.add_argument("--season", type=int, default=336)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--top-k", type=int, default=3000)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_forecast, seed=None)

    p = sub.add_parser("ramp-sim", help="Internet offload ramp trajectories and capacities")
    p.add_argument("--metrics", type=Path, required=True, help="metric stream CSV")
    p.add_argument("--trace", type=Path, help="call trace CSV used to size Internet capacity")
    p.add_argument("--resources", type=Path)
    p.add_argument("--step-pct", type=float, default=2.0)
    p.add_argument("--cap-pct", type=float, default=20.0)
    p.add_argument("--hold-slots", type=int, default=96)
    p.add_argument("--peering-gbps", type=float, help="minimum peering capacity per dc")
    p.set_defaults(func=cmd_ramp, seed=None)

    p = sub.add_parser("plan", help="solve the assignment LP")
    p.add_argument("--problem", type=Path, help="planning problem JSON; omit to plan a trace")
    _add_workload(p)
    _add_scenario(p)
    p.add_argument("--objective", choices=("peaks", "lf", "lf-e2e"), default="peaks")
    p.add_argument("--raw", action="store_true", help="plan raw instead of reduced configs")
    p.add_argument("--export-lp", action="store_true", help="also write the model in LP format")
    p.set_defaults(func=cmd_plan)

    from .policy import MODES
    from .scenario import POLICIES

    for name, func, help_ in (("simulate", cmd_simulate, "run one policy over a trace"),
                              ("compare", cmd_compare, "run several policies side by side")):
        p = sub.add_parser(name, help=help_)
        _add_workload(p)
        _add_scenario(p)
        p.add_argument("--mode", choices=MODES, default="oracle")
        p.add_argument("--cap-pct", type=float, help="cap every Internet offload fraction at this percentage")
        if name == "simulate":
            p.add_argument("--policy", choices=POLICIES, default="planned")
            p.add_argument("--loss-traces", type=Path, help="CSV: slot, country, dc, loss_pct, latency_ms")
        else:
            p.add_argument("--policies", help=f"comma-separated subset of {','.join(POLICIES)}")
            p.add_argument("--seeds", help="comma-separated seeds (default: --seed)")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = args.out or Path(os.environ.get(OUT_ENV, "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
        args.func(args, out, build_manifest(args))
    except (CliError, ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"confroute {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
