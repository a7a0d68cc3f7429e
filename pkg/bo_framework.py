#!/usr/bin/env python3
"""
BO Framework - Unified Runner
CLI to run mixed-variable BO benchmarks, compute ground truths, and score
the resulting traces.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from benchmarks import all_benchmarks, benchmark_from_id, get_benchmark
from harness import (
    HarnessError,
    RunConfig,
    RunNumericError,
    budget_convergence,
    collect_traces,
    load_config,
    load_truth,
    plot_data,
    rank_models,
    run_bo,
    score_traces,
    write_trace,
)
from tolerances import TOLERANCE_LEVELS


EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2

EXAMPLE_CONFIG = {
    "benchmark": "bs",
    "dims": 2,
    "pattern": "ci",
    "preset": "ei_BOSS_on_gam_Mat52",
    "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    "penalty": True,
    "maf_threshold": None,
    "output_dir": "results",
}


def parse_seeds(text: Optional[str]) -> Optional[List[int]]:
    """'0..9' (inclusive range), '0,3,5' or a single seed."""
    if text is None:
        return None
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def _banner(title: str) -> None:
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


def _usage_error(e: Exception) -> Dict[str, Any]:
    print(f"Error: {e}")
    return {"status": "error", "kind": "usage", "error": str(e)}


# CLI Commands
def cmd_run(args) -> Dict[str, Any]:
    """Run a config over its seeds and write one trace per seed."""
    overrides = {
        "benchmark": args.benchmark,
        "dims": args.dims,
        "pattern": args.pattern,
        "preset": args.preset,
        "seeds": parse_seeds(args.seeds),
        "init_points": args.init_points,
        "iter_budget": args.iter_budget,
        "maf_threshold": args.maf_threshold,
        "workers": args.workers,
        "output_dir": args.output_dir,
    }
    if args.no_penalty:
        overrides["penalty"] = False
    try:
        if args.config:
            config = load_config(args.config, overrides)
        else:
            config = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    except (ValidationError, ValueError, OSError) as e:
        return _usage_error(e)

    bench = config.get_benchmark()
    init_points, iter_budget = config.budget()
    _banner(f"RUNNING: {bench.benchmark_id} / {config.preset}")
    print(f"Seeds: {config.seeds}  init={init_points}  iterations={iter_budget}")

    try:
        truth = load_truth(bench, config.output_dir)
    except (HarnessError, ValueError, OSError) as e:
        return _usage_error(e)
    written = []
    try:
        traces = run_bo(config, truth=truth)
        status = {"status": "success"}
    except RunNumericError as e:
        traces = e.traces
        status = {"status": "error", "kind": "numeric", "error": str(e)}
        print(f"Error: {e}")
    for trace in traces:
        written.append(str(write_trace(trace, config.output_dir)))
        final = trace.rows[-1]
        print(f"  seed {trace.seed}: best_y={final.best_y:.6g} regret={final.regret:.3g}")

    result = {
        "benchmark": bench.benchmark_id,
        "model": config.preset,
        "seeds": config.seeds,
        "truth": {"candidate": list(truth.candidate), "value": truth.value},
        "traces": written,
    }
    result.update(status)
    return result


def cmd_score(args) -> Dict[str, Any]:
    """Convergence, composite scores, ranks and budget tables from written traces."""
    try:
        traces = collect_traces(args.output_dir, args.benchmark)
        if not traces:
            raise HarnessError(f"no traces found under {args.output_dir}")
        benchmark_ids = sorted({t.benchmark_id for t in traces})
        truths = {bid: load_truth(benchmark_from_id(bid), args.output_dir) for bid in benchmark_ids}
        scores = score_traces(traces, args.tolerance, truths)
        ranks = rank_models(scores, partial=True)
        ranks_by_dims = rank_models(scores, partial=True, group_by="dims")
    except (HarnessError, ValueError, OSError) as e:
        return _usage_error(e)

    out_dir = Path(args.output or args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = args.tolerance
    scores.to_csv(out_dir / f"scores_{tag}.csv", index=False, float_format="%.6f")
    ranks.to_csv(out_dir / f"ranks_{tag}.csv", index=False, float_format="%.4f")
    ranks_by_dims.to_csv(out_dir / f"ranks_by_dims_{tag}.csv", index=False, float_format="%.4f")

    budget_tables = {}
    for bid in benchmark_ids:
        block = scores[scores["benchmark"] == bid]
        runs = {
            row["model"]: [None if s == "-" else int(s) for s in row["iterations"].split(";")]
            for _, row in block.iterrows()
        }
        table = budget_convergence(runs, benchmark_from_id(bid).iter_budget)
        table.to_csv(out_dir / f"budget_{bid}_{tag}.csv", index=False, float_format="%.1f")
        budget_tables[bid] = table.to_dict("records")

    _banner(f"COMPOSITE SCORES ({tag})")
    print(scores.drop(columns=["iterations"]).to_string(index=False))
    _banner("RANKS")
    print(ranks.to_string(index=False))

    result = {
        "status": "success",
        "tolerance": tag,
        "scores": scores.to_dict("records"),
        "ranks": ranks.to_dict("records"),
        "budget_convergence": budget_tables,
    }
    (out_dir / f"scores_{tag}.json").write_text(json.dumps(result, indent=2, default=str))
    return result


def cmd_truth(args) -> Dict[str, Any]:
    """Compute (or refresh) cached optima."""
    try:
        if args.benchmark == "all":
            benches = all_benchmarks()
        else:
            benches = [get_benchmark(args.benchmark, args.dims, args.pattern)]
    except ValueError as e:
        return _usage_error(e)

    _banner("GROUND TRUTH")
    truths = {}
    for bench in benches:
        try:
            truth = load_truth(bench, args.output_dir, refresh=args.refresh)
        except (HarnessError, ValueError, OSError) as e:
            return _usage_error(e)
        truths[bench.benchmark_id] = {"candidate": list(truth.candidate), "value": truth.value, "y_max": truth.y_max}
        print(f"  {bench.benchmark_id:<12} y*={truth.value:.10g}  x*={truth.candidate}")
    return {"status": "success", "truths": truths}


def cmd_plot_data(args) -> Dict[str, Any]:
    """Per-iteration regret bands for external plotting."""
    try:
        traces = collect_traces(args.output_dir, args.benchmark)
        if not traces:
            raise HarnessError(f"no traces found under {args.output_dir}")
        bands = plot_data(traces)
    except (HarnessError, ValueError, OSError) as e:
        return _usage_error(e)
    path = Path(args.output or Path(args.output_dir) / "plot_data.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    bands.to_csv(path, index=False, float_format="%.10g")
    print(f"Regret bands saved to: {path}")
    return {"status": "success", "path": str(path), "rows": len(bands)}


def exit_code(result: Optional[Dict[str, Any]]) -> int:
    if not result or result.get("status") == "success":
        return EXIT_OK
    return EXIT_NUMERIC if result.get("kind") == "numeric" else EXIT_USAGE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="BO Framework - Run mixed-variable Bayesian optimization benchmarks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  From config file:
    python bo_framework.py --config example_bs2d_ci_config.json

  Direct commands:
    python bo_framework.py run --benchmark bs --dims 2 --pattern ci --preset ei_BOSS_on_gam_Mat52 --seeds 0..9
    python bo_framework.py score --tolerance medium
    python bo_framework.py truth --benchmark all
    python bo_framework.py plot-data --output regret.csv
        """
    )

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    # Run
    p_run = subparsers.add_parser("run", help="Run BO over seeds and write traces")
    p_run.add_argument("--config", "-c", dest="config", help="JSON run config (flags override it)")
    p_run.add_argument("--benchmark", choices=["bs", "dust1", "dust2"], help="Benchmark family")
    p_run.add_argument("--dims", type=int, help="BS dimensionality (2-6)")
    p_run.add_argument("--pattern", help="BS kind mix (ci, id, ii, dd)")
    p_run.add_argument("--preset", help="Model: <ei|lcb>_<kernel preset> or SOBOL_off")
    p_run.add_argument("--seeds", help="Seeds: '0..9' or '0,1,2'")
    p_run.add_argument("--init-points", dest="init_points", type=int, help="Initial Sobol points")
    p_run.add_argument("--iter-budget", dest="iter_budget", type=int, help="BO iterations")
    p_run.add_argument("--maf-threshold", dest="maf_threshold", help="Exploration threshold or 'auto'")
    p_run.add_argument("--no-penalty", dest="no_penalty", action="store_true", help="Disable the resampling penalty")
    p_run.add_argument("--workers", type=int, help="Worker threads (seeds run in parallel)")
    p_run.add_argument("--output-dir", dest="output_dir", help="Trace directory")
    p_run.set_defaults(func=cmd_run)

    # Score
    p_score = subparsers.add_parser("score", help="Composite scores and rank tables from traces")
    p_score.add_argument("--output-dir", dest="output_dir", default="results", help="Trace directory")
    p_score.add_argument("--tolerance", choices=list(TOLERANCE_LEVELS), default="medium")
    p_score.add_argument("--benchmark", help="Restrict to one benchmark id (e.g. bs_2d_ci)")
    p_score.add_argument("--output", "-o", help="Directory for score tables")
    p_score.set_defaults(func=cmd_score)

    # Truth
    p_truth = subparsers.add_parser("truth", help="Compute cached ground-truth optima")
    p_truth.add_argument("--benchmark", default="all", choices=["all", "bs", "dust1", "dust2"])
    p_truth.add_argument("--dims", type=int)
    p_truth.add_argument("--pattern")
    p_truth.add_argument("--refresh", action="store_true", help="Recompute cached values")
    p_truth.add_argument("--output-dir", dest="output_dir", default="results")
    p_truth.set_defaults(func=cmd_truth)

    # Plot data
    p_plot = subparsers.add_parser("plot-data", help="Regret mean/std/quantile bands per iteration")
    p_plot.add_argument("--output-dir", dest="output_dir", default="results")
    p_plot.add_argument("--benchmark", help="Restrict to one benchmark id")
    p_plot.add_argument("--output", "-o", help="CSV path")
    p_plot.set_defaults(func=cmd_plot_data)

    # Config file mode
    parser.add_argument("--config", "-c", dest="top_config", help="Run from JSON config file")
    parser.add_argument("--output", "-o", dest="top_output", help="Write the run summary JSON here")
    parser.add_argument("--example", action="store_true", help="Print example config")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    # Print example config
    if args.example:
        print(json.dumps(EXAMPLE_CONFIG, indent=2))
        return EXIT_OK

    # Run from config file
    if args.top_config:
        run_args = parser.parse_args(["run", "--config", args.top_config])
        result = cmd_run(run_args)
    elif args.command:
        result = args.func(args)
    else:
        parser.print_help()
        return EXIT_USAGE

    if args.top_output:
        with open(args.top_output, "w") as f:
            f.write(json.dumps(result, indent=2, default=str))
        print(f"\nResults saved to: {args.top_output}")
    return exit_code(result)


if __name__ == "__main__":
    sys.exit(main())
