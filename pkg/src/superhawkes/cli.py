"""Command-line entry point: ``superhawkes <subcommand> ...``.

Exit codes: 0 success, 1 usage, 2 bad input data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bounds import bound_expressions, classify_scenario
from .core import read_model, read_sequences, write_sequences
from .estimators import fit_strategy
from .experiments import ExperimentConfig, run_experiment
from .recommend import FilterParams, ingest_and_filter, filter_events, run_recommendation, synthetic_ratings
from .simulate import SIMULATORS, substream

log = logging.getLogger("superhawkes")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUT_ENV = "SUPERHAWKES_OUT"


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def versions() -> dict:
    return {
        "superhawkes": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_manifest(path: Path, command: str, args: argparse.Namespace, **extra) -> None:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    manifest = {"command": command, "flags": flags, "versions": versions()}
    manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _out_dir(value: str | None) -> Path:
    value = value or os.environ.get(OUT_ENV)
    if not value:
        raise UsageError(f"--out not given and {OUT_ENV} is unset")
    return Path(value)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _window(text: str) -> tuple[str, str]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected START,END")
    return parts[0].strip(), parts[1].strip()


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    models = [read_model(p) for p in args.model]
    D = models[0].D
    if any(m.D != D for m in models):
        raise ValueError("all models must have the same dimension")
    simulate = SIMULATORS[args.method]
    seqs = [
        simulate(m, args.T, seed=substream(args.seed, k, s), source_id=k)
        for k, m in enumerate(models)
        for s in range(args.num_seqs)
    ]
    out = Path(args.out)
    write_sequences(out, seqs)
    write_manifest(out.with_suffix(".manifest.json"), "simulate", args)
    print(json.dumps({"sequences": len(seqs), "events": int(sum(len(s) for s in seqs))}))
    return EXIT_OK


def cmd_fit(args) -> int:
    seqs = read_sequences(args.data)
    kwargs = {}
    if args.estimator == "mle":
        kwargs = {"max_iters": args.max_iters, "tol": args.tol}
    try:
        fit = fit_strategy(seqs, args.strategy, args.estimator, args.w, **kwargs)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise NumericalError(str(exc)) from exc
    if not np.all(np.isfinite(fit.theta)):
        raise NumericalError("solver returned non-finite parameters")
    out = Path(args.out)
    out.write_text(json.dumps(fit.to_model_dict(), indent=2) + "\n")
    diag = fit.diagnostics_dict()
    out.with_name(out.stem + ".diagnostics.json").write_text(json.dumps(diag, indent=2, default=float) + "\n")
    write_manifest(out.with_name(out.stem + ".manifest.json"), "fit", args)
    print(json.dumps({"strategy": fit.strategy, "loss": fit.loss, "stationary": fit.stationary}))
    return EXIT_OK


def cmd_bound_check(args) -> int:
    if args.mus:
        mus = json.loads(Path(args.mus).read_text())
        if isinstance(mus, dict):
            mus = mus.get("mus", mus.get("mu"))
        sc = classify_scenario(mus)
        if args.B_A is None or args.I is None:
            raise UsageError("--mus needs --B-A and --I")
        D = np.atleast_2d(np.asarray(mus, dtype=float)).shape[1]
        report = bound_expressions(sc.B_mu, args.B_A, sc.B_sigma_mu, D, sc.M, args.I).to_dict()
        report["scenario"] = sc.kind
    else:
        missing = [f for f in ("B_mu", "B_A", "B_sigma_mu", "D", "M", "I") if getattr(args, f) is None]
        if missing:
            raise UsageError("missing flags: " + ", ".join("--" + m.replace("_", "-") for m in missing))
        report = bound_expressions(args.B_mu, args.B_A, args.B_sigma_mu, args.D, args.M, args.I).to_dict()
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_experiment(args) -> int:
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        data["seed"] = args.seed
    config = ExperimentConfig.from_dict(data)
    out = _out_dir(args.out)
    report = run_experiment(config, threads=args.threads)
    report.write(out)
    seeds = [{"K": r.K, "D": r.D, "trial": r.trial, "seed": r.seed} for r in report.results if r.strategy == config.strategies[0]]
    write_manifest(out / "manifest.json", "experiment", args, config=config.to_dict(), trial_seeds=seeds)
    for row in report.summary():
        print(f"{row['estimator']} {row['strategy']:<18} K={row['K']:<3} D={row['D']:<3} "
              f"rel_error={row['mean_rel_error']:.4f} +- {row['std_rel_error']:.4f}")
    return EXIT_OK


def cmd_recommend(args) -> int:
    params = FilterParams(
        min_item_ratings=args.min_item_ratings,
        max_train_events=args.max_train_events,
        min_train_events=args.min_train_events,
        min_rating=args.min_rating,
        train_window=args.train_window,
        test_window=args.test_window,
    )
    if args.ratings:
        data = ingest_and_filter(args.ratings, params)
    elif args.synthetic is not None:
        data = filter_events(synthetic_ratings(args.synthetic, params=params), params)
    else:
        raise UsageError("give --ratings CSV or --synthetic SEED")
    out = _out_dir(args.out)
    report = run_recommendation(data, args.N, args.w, args.estimator, args.group_size, not args.include_bought)
    report.write(out, data)
    write_manifest(out / "manifest.json", "recommend", args, dataset=data.stats(),
                   fit_diagnostics=report.fit_diagnostics)
    print(json.dumps({"dataset": data.stats(), "metrics": report.metrics_dict()}, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="superhawkes", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate event sequences from model JSON files")
    s.add_argument("--model", action="append", required=True,
                   help="model JSON; repeat for several sources (sequences are tagged by position)")
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--num-seqs", type=int, default=1, help="sequences per model")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=sorted(SIMULATORS), default="branching")
    s.add_argument("--out", required=True, help="event CSV; the header sidecar goes next to it")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a Hawkes model to event sequences")
    f.add_argument("--data", required=True)
    f.add_argument("--strategy", choices=["single", "multi", "super"], default="single")
    f.add_argument("--estimator", choices=["ls", "mle"], default="ls")
    f.add_argument("--w", type=float, default=1.0)
    f.add_argument("--max-iters", type=int, default=1000, help="EM iterations (mle only)")
    f.add_argument("--tol", type=float, default=1e-8, help="EM relative tolerance (mle only)")
    f.add_argument("--out", required=True, help="model JSON")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bound-check", help="evaluate the excess-risk bounds")
    b.add_argument("--B-mu", dest="B_mu", type=float)
    b.add_argument("--B-A", dest="B_A", type=float)
    b.add_argument("--B-sigma-mu", dest="B_sigma_mu", type=float)
    b.add_argument("--mus", help="JSON list of exogenous rate vectors")
    b.add_argument("--D", type=int)
    b.add_argument("--M", type=int)
    b.add_argument("--I", type=int)
    b.set_defaults(func=cmd_bound_check)

    e = sub.add_parser("experiment", help="synthetic comparison of learning strategies")
    e.add_argument("--config", help="JSON with ExperimentConfig fields")
    e.add_argument("--seed", type=int, help="overrides the config seed")
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--out", help=f"output directory (default: ${OUT_ENV})")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("recommend", help="cold-start top-N recommendation")
    r.add_argument("--ratings", help="CSV user,item,rating,timestamp")
    r.add_argument("--synthetic", type=int, metavar="SEED", help="use generated purchase data instead")
    r.add_argument("--min-item-ratings", type=int, default=40)
    r.add_argument("--max-train-events", type=int, default=3)
    r.add_argument("--min-train-events", type=int, default=1)
    r.add_argument("--min-rating", type=int, default=4)
    r.add_argument("--train-window", type=_window, default=("2014-01-01", "2014-04-01"))
    r.add_argument("--test-window", type=_window, default=("2014-04-01", "2014-08-01"))
    r.add_argument("--N", type=_int_list, default=[5, 10, 20])
    r.add_argument("--w", type=float, default=1.0, help="decay per day")
    r.add_argument("--estimator", choices=["ls", "mle"], default="ls")
    r.add_argument("--group-size", type=int, default=20, help="users per superposed group")
    r.add_argument("--include-bought", action="store_true", help="allow already-bought items in the lists")
    r.add_argument("--seed", type=int, default=0, help="recorded in the manifest; the pipeline is deterministic")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--out", help=f"output directory (default: ${OUT_ENV})")
    r.set_defaults(func=cmd_recommend)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"superhawkes: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"superhawkes: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"superhawkes: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"superhawkes: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
