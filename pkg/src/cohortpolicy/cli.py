"""Command-line surface: ingest, synth, search, filter, govern, pipeline,
eval, report.

Exit codes: 0 success, 2 terminal governance rejection, 1 error. All output
files are schema-versioned and timestamp-free, so reruns with the same
config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from .errors import CohortPolicyError
from .evaluation import (evaluate_selector, load_ground_truths, load_rankings,
                         save_report)
from .frontier import (ToleranceConfig, save_frontier, save_frontier_coords,
                       tolerance_filter)
from .governance import (classify_stability, load_snapshots, pre_search_filter,
                         save_reports, shift_ratio)
from .ingest import IngestSchema, ingest
from .pipeline import RunConfig, govern_pipeline, write_run_artifacts
from .search import (FORMAT_VERSION, PolicyCandidate, collect_candidates,
                     evaluate_policies, enumerate_policies, load_policy_table,
                     sample_weights, save_policy_table)
from .segmentation import CutEnumerationConfig, enumerate_cuts
from .synth import (BenchmarkConfig, ScenarioConfig, build_benchmark,
                    generate_experiment, generate_snapshots, write_benchmark)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _out_dir(args, default_prefix: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
        out = Path(f"{default_prefix}-{stamp}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- subcommands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    schema = IngestSchema.from_json(args.schema)
    ds = ingest(args.data, schema)
    out = _out_dir(args, "ingest")
    summary = {
        "format_version": FORMAT_VERSION,
        "experiment_id": ds.experiment_id,
        "n_users": ds.n_users,
        "actions": list(ds.actions),
        "control_action": ds.control_action,
        "metrics": list(ds.metrics),
        "features": list(ds.features),
        "lift_units": ds.lift_units,
        "arm_sizes": {a: int(ds.arm_mask(a).sum()) for a in ds.actions},
    }
    _write_json(out / "dataset_summary.json", summary)
    print(f"ingested {ds.n_users} users into {out / 'dataset_summary.json'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _out_dir(args, "synth")
    if args.benchmark:
        cfg = BenchmarkConfig.from_mapping(_load_json(args.benchmark))
        if args.seed is not None:
            cfg = BenchmarkConfig.from_mapping({**vars(cfg), "seed": args.seed})
        bundle = build_benchmark(cfg)
        write_benchmark(bundle, out)
        print(f"benchmark with {len(bundle.instructions)} instructions in {out}")
        return EXIT_OK
    data = _load_json(args.scenario)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = ScenarioConfig.from_mapping(data)
    ds, truth = generate_experiment(cfg)
    rows = ["user_id", "arm", *ds.features, *ds.metrics]
    include_day = cfg.n_days > 0
    if include_day:
        rows.append("day")
    with open(out / "dataset.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# format_version: {FORMAT_VERSION}\n")
        fh.write(",".join(rows) + "\n")
        for user in ds.users:
            cells = [user.user_id, user.arm]
            cells += [repr(user.features[f]) for f in ds.features]
            cells += [repr(user.outcomes[m]) for m in ds.metrics]
            if include_day:
                cells.append(str(user.day))
            fh.write(",".join(cells) + "\n")
    schema = {
        "format_version": FORMAT_VERSION,
        "user_id": "user_id", "arm": "arm", "control": ds.control_action,
        "features": list(ds.features), "metrics": list(ds.metrics),
        "lift_units": ds.lift_units, "experiment_id": ds.experiment_id,
    }
    if include_day:
        schema["day"] = "day"
    _write_json(out / "schema.json", schema)
    _write_json(out / "planted_truth.json",
                {"format_version": FORMAT_VERSION, **truth})
    if cfg.drift_specs:
        from .governance import save_snapshots
        pairs = {}
        for i, drift in enumerate(cfg.drift_specs):
            pairs[drift.feature] = generate_snapshots(ds, drift,
                                                      seed=cfg.seed + 1000 + i)
        save_snapshots(out / "snapshots.csv", pairs)
    print(f"synthetic experiment {ds.experiment_id!r} in {out}")
    return EXIT_OK


def _load_dataset(args):
    if args.scenario:
        cfg = ScenarioConfig.from_mapping(_load_json(args.scenario))
        if args.seed is not None:
            cfg = ScenarioConfig.from_mapping(
                {**_load_json(args.scenario), "seed": args.seed})
        ds, _ = generate_experiment(cfg)
        return ds
    schema = IngestSchema.from_json(args.schema)
    return ingest(args.data, schema)


def cmd_search(args) -> int:
    ds = _load_dataset(args)
    seed = args.seed if args.seed is not None else 0
    cuts_cfg = CutEnumerationConfig.from_mapping(_load_json(args.cuts)) \
        if args.cuts else CutEnumerationConfig(features=ds.features)
    cuts = enumerate_cuts(ds, cuts_cfg)
    policies = enumerate_policies(ds, cuts, budget=args.budget, seed=seed)
    evaluated = evaluate_policies(ds, policies, threads=args.threads,
                                  skip_unsupported=True)
    weights = sample_weights(len(ds.metrics), args.weights, seed)
    candidates = collect_candidates(evaluated, weights, args.top_k,
                                    metrics=ds.metrics)
    out = _out_dir(args, "search")
    save_policy_table(out / "policy_table.csv", evaluated, ds.metrics)
    _write_json(out / "candidates.json", {
        "format_version": FORMAT_VERSION,
        "policy_ids": candidates.policy_ids,
        "provenance": {pid: [[w, r] for w, r in pairs]
                       for pid, pairs in sorted(candidates.provenance.items())},
    })
    print(f"{len(evaluated)} policies evaluated, "
          f"{len(candidates.policy_ids)} candidates in {out}")
    return EXIT_OK


def cmd_filter(args) -> int:
    table, metrics = load_policy_table(args.policy_table)
    if args.candidates:
        keep = set(_load_json(args.candidates)["policy_ids"])
        table = {pid: est for pid, est in table.items() if pid in keep}
    policies = [PolicyCandidate(policy_id=pid, cut=None, assignment=("a0",),
                                estimates=dict(est))
                for pid, est in table.items()]
    directions = {m: ("minimize" if m in (args.minimize or ()) else "maximize")
                  for m in metrics}
    result = tolerance_filter(
        policies, ToleranceConfig(tau=args.tau, directions=directions),
        metrics=metrics)
    out = _out_dir(args, "filter")
    save_frontier(out / "frontier.json", result)
    if len(metrics) >= 2:
        save_frontier_coords(out / "frontier_coords.csv", policies, result,
                             (metrics[0], metrics[1]))
    print(f"{len(result.admitted)} of {len(policies)} policies admitted "
          f"at tau={args.tau} in {out}")
    return EXIT_OK


def cmd_govern(args) -> int:
    pairs = load_snapshots(args.snapshots)
    thresholds = _load_json(args.thresholds) if args.thresholds else None
    verdicts = []
    for feature in sorted(pairs):
        pair = pairs[feature]
        verdicts.append(classify_stability(
            feature,
            shift_quantile=shift_ratio(pair, "quantile"),
            shift_binary=shift_ratio(pair, "binary"),
            thresholds=thresholds))
    report, admitted = pre_search_filter(verdicts, thresholds)
    out = _out_dir(args, "govern")
    _write_json(out / "stability_verdicts.json", {
        "format_version": FORMAT_VERSION,
        "verdicts": [v.to_json() for v in verdicts],
        "admitted": admitted,
    })
    save_reports(out / "hook_reports.jsonl", [report])
    print(f"{len(admitted)} of {len(verdicts)} features admitted; "
          f"reports in {out}")
    return EXIT_OK if not report.rejected else EXIT_REJECTED


def cmd_pipeline(args) -> int:
    config = RunConfig.from_json(args.config)
    if args.seed is not None:
        data = _load_json(args.config)
        data["seed"] = args.seed
        config = RunConfig.from_mapping(data)
    result = govern_pipeline(config, threads=args.threads)
    out = _out_dir(args, "run")
    write_run_artifacts(result, config, out)
    if result.recommended:
        print(f"recommended {result.recommendation.policy_id} in {out}")
        return EXIT_OK
    print(f"terminal rejection after {result.iterations} iteration(s); "
          f"reports in {out}", file=sys.stderr)
    return EXIT_REJECTED


def cmd_eval(args) -> int:
    rankings = load_rankings(args.rankings)
    if not rankings:
        return _fail("rankings file is empty")
    gts = load_ground_truths(args.ground_truth)
    report = evaluate_selector(rankings, gts)
    out = _out_dir(args, "eval")
    save_report(out / "report.csv", out / "report.txt", report)
    with open(out / "report.txt", encoding="utf-8") as fh:
        print(fh.read(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run)
    manifest_path = run / "manifest.json"
    if not manifest_path.exists():
        return _fail(f"no manifest.json under {run}")
    manifest = _load_json(manifest_path)
    print(f"run status: {manifest['status']} "
          f"(iterations: {manifest['iterations']})")
    print(f"seed: {manifest['config'].get('seed')}, "
          f"tau: {manifest['config'].get('tau')}, "
          f"W: {manifest['config'].get('weight_samples')}, "
          f"top-K: {manifest['config'].get('top_k')}")
    for name, filename in sorted(manifest["artifacts"].items()):
        print(f"  {name}: {filename}")
    rec_path = run / "recommendation.json"
    if rec_path.exists():
        rec = _load_json(rec_path)
        policy = rec.get("policy")
        if policy:
            print(f"recommended policy: {policy['policy_id']}")
            for metric, est in sorted(policy["estimates"].items()):
                print(f"  {metric}: {est['mean']:+.4f} ± {est['std_err']:.4f}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cohortpolicy",
        description="Cohort-policy discovery, governance, and evaluation for "
                    "randomized experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON (pipeline)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads (output is identical regardless)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common],
                       help="validate an experiment file")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic experiment or benchmark")
    p.add_argument("--scenario", help="scenario config JSON")
    p.add_argument("--benchmark", help="benchmark config JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("search", parents=[common],
                       help="enumerate, evaluate, and collect candidates")
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--scenario")
    p.add_argument("--cuts", help="cut enumeration config JSON")
    p.add_argument("--weights", type=int, default=1000)
    p.add_argument("--top-k", type=int, default=5, dest="top_k")
    p.add_argument("--budget", type=int, default=128)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("filter", parents=[common],
                       help="tolerance-based Pareto filter on a policy table")
    p.add_argument("--policy-table", required=True, dest="policy_table")
    p.add_argument("--candidates", help="candidates.json to restrict to")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--minimize", action="append",
                   help="metric to minimize (repeatable)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("govern", parents=[common],
                       help="feature-stability verdicts and pre-search filter")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--thresholds", help="thresholds JSON override")
    p.set_defaults(func=cmd_govern)

    p = sub.add_parser("pipeline", parents=[common],
                       help="full governed run from a run config")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", parents=[common],
                       help="score selector rankings against ground truths")
    p.add_argument("--instructions", help="instructions JSONL (for reference)")
    p.add_argument("--rankings", required=True)
    p.add_argument("--ground-truth", required=True, dest="ground_truth")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common],
                       help="summarize a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "pipeline" and not args.config:
        return _fail("pipeline needs --config")
    if args.command == "synth" and not (args.scenario or args.benchmark):
        return _fail("synth needs --scenario or --benchmark")
    if args.command == "search" and not (args.scenario or (args.data and args.schema)):
        return _fail("search needs --scenario or --data with --schema")
    try:
        return args.func(args)
    except CohortPolicyError as exc:
        return _fail(f"{type(exc).__name__}: {exc}")
    except FileNotFoundError as exc:
        return _fail(f"missing file: {exc}")
    except ValueError as exc:
        return _fail(f"ValueError: {exc}")


if __name__ == "__main__":
    sys.exit(main())
