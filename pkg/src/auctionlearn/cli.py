"""Command line entry point: ``auctionlearn {run,sweep,fit}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ExperimentConfig, fit_loglog_slope, run_experiment, write_outputs

log = logging.getLogger("auctionlearn")


def _load_config(args) -> ExperimentConfig:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    if args.reps is not None:
        raw["replications"] = args.reps
    return ExperimentConfig.from_dict(raw)


def _cmd_run(args) -> int:
    config = _load_config(args)
    config.T_grid = None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = None if args.no_trace else out / "traces.csv"
    summary = run_experiment(config, threads=args.threads, trace_path=trace)
    paths = write_outputs(summary, out)
    h = summary["horizons"][-1]
    print(f"T={h['T']} mean cumulative regret {h['mean']:.6g} (stderr {h['stderr']:.3g}) -> {paths['summary']}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    if not config.T_grid:
        raise SystemExit("sweep needs a non-empty T_grid in the config")
    summary = run_experiment(config, threads=args.threads)
    paths = write_outputs(summary, args.out)
    for h in summary["horizons"]:
        print(f"T={h['T']:>8d} mean {h['mean']:.6g} stderr {h['stderr']:.3g}")
    s = summary.get("slope", {})
    if "slope" in s:
        print(f"slope {s['slope']:.4f} (r^2 {s['r_squared']:.4f}) -> {paths['summary']}")
    else:
        print(f"slope fit failed: {s.get('error')}")
    return 0


def _cmd_fit(args) -> int:
    with open(args.summary, encoding="utf-8") as fh:
        summary = json.load(fh)
    points = [(h["T"], h["mean"]) for h in summary["horizons"]]
    slope, intercept, r2 = fit_loglog_slope(points)
    result = {"slope": slope, "intercept": intercept, "r_squared": r2}
    text = json.dumps(result, indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit.json").write_text(text + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auctionlearn", description="Repeated multi-unit auction regret experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="use this single seed instead of the config's seeds")
        p.add_argument("--reps", type=int, default=None, help="override the number of replications")
        p.add_argument("--threads", type=int, default=1, help="worker processes for replications")

    run = sub.add_parser("run", help="run one config at its horizon T")
    common(run)
    run.add_argument("--no-trace", action="store_true", help="skip the per-round trace CSV")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run a config over every horizon in its T_grid and fit the slope")
    common(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    fit = sub.add_parser("fit", help="fit the log-log slope of an existing summary.json")
    fit.add_argument("summary", help="path to summary.json")
    fit.add_argument("--out", default=None, help="also write fit.json into this directory")
    fit.set_defaults(func=_cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
