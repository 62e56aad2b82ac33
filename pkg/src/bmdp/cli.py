"""Command line: ``bmdp <solve|learn|simulate|gen|bench> [args]``.

Exit codes: 0 ok, 1 input error, 2 non-convergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from . import bench
from .generator import GenParams, gen_random_bmdp
from .model import Bmdp
from .parser import ParseError, load_model, serialize_model
from .qlearn import LearnParams, Schedule
from .rng import Rng, fresh_seed
from .simulator import format_trace, monte_carlo_estimate, run_episode
from .solver import SolveParams, config_value, strategy_names, value_iterate

EXIT_OK, EXIT_INPUT, EXIT_NOCONV = 0, 1, 2


class InputError(Exception):
    pass


def _load(path) -> Bmdp:
    try:
        return load_model(path)
    except ParseError as exc:
        raise InputError(f"{path}:{exc.span.line}:{exc.span.column}: {exc.kind.value}: {exc.message}") from None
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def _seed(args, out) -> int:
    if args.seed is None:
        args.seed = fresh_seed()
        print(f"seed {args.seed}", file=out)
    return args.seed


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf"
    s = f"{v:.7g}"
    return s if any(c in s for c in ".en") else s + ".0"


def _learn_params(args) -> LearnParams:
    return LearnParams(epsilon=args.epsilon, alpha=args.alpha, schedule=Schedule(args.schedule), tol=args.tol,
                       ep_l=args.ep_l, ep_n=args.ep_n, seed=args.seed)


def cmd_solve(args, out) -> int:
    model = _load(args.model)
    params = SolveParams(tolerance=args.tol, max_iterations=args.max_iter)
    res = value_iterate(model, params)
    for t, v, a in zip(model.types, res.values, res.strategy):
        print(f"{t.name} {_fmt(float(v))} {t.actions[a].name}", file=out)
    print(f"iterations {res.iterations} ({res.status.value})", file=out)
    if args.json:
        doc = {"model": model.name or Path(args.model).stem, "types": model.n_types,
               "exact": {"values": {t: bench._jsonable(float(v)) for t, v in zip(model.type_names, res.values)},
                         "strategy": strategy_names(model, res.strategy),
                         "iterations": res.iterations, "status": res.status.value},
               "params": dataclasses.asdict(params)}
        Path(args.json).write_text(json.dumps(doc, indent=2))
    return EXIT_OK if res.converged else EXIT_NOCONV


def cmd_learn(args, out) -> int:
    model = _load(args.model)
    _seed(args, out)
    params = _learn_params(args)
    if args.trials < 1:
        raise InputError("--trials must be >= 1")
    summary = bench.run_trials(model, params, args.trials, args.jobs)
    print(f"mean estimate {summary.mean_estimate:.7g}", file=out)
    print("trials " + " ".join(f"{r.estimate:.7g}" for r in summary.results), file=out)
    print(f"time (avg.) {summary.mean_seconds:.3f} s", file=out)
    print("strategy " + ", ".join(f"{t}={a}" for t, a in strategy_names(model, summary.strategy).items()),
          file=out)
    exact = None
    if args.compare:
        sol = value_iterate(model)
        exact = config_value(sol.values, model.init)
        rel = abs(summary.mean_estimate - exact) / exact if 0 < exact < math.inf else math.inf
        print(f"exact {_fmt(exact)} relative error {_fmt(rel)}", file=out)
    if args.csv:
        base = Path(args.csv)
        for i, r in enumerate(summary.results):
            base.with_name(f"{base.stem}_trial{i}{base.suffix or '.csv'}").write_text(bench.curve_to_csv(r.curve))
    if args.json:
        doc = {"model": model.name or Path(args.model).stem, "types": model.n_types,
               "learned": {"estimate": summary.mean_estimate, "trials": [r.estimate for r in summary.results],
                           "strategy": strategy_names(model, summary.strategy)},
               "params": bench.params_dict(params)}
        if exact is not None:
            doc["exact"] = {"value": bench._jsonable(exact)}
        Path(args.json).write_text(json.dumps(doc, indent=2))
    return EXIT_OK


def _parse_strategy(model: Bmdp, spec: str) -> tuple[int, ...]:
    if spec == "optimal":
        return value_iterate(model).strategy
    chosen: dict[int, int] = {}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        if "=" not in item:
            raise InputError(f"bad strategy entry {item!r}; expected TYPE=ACTION")
        t, a = (s.strip() for s in item.split("=", 1))
        try:
            q = model.type_index(t)
            chosen[q] = model.action_index(q, a)
        except KeyError as exc:
            raise InputError(exc.args[0]) from None
    for q, t in enumerate(model.types):
        if q not in chosen:
            raise InputError(f"missing strategy for type {t.name}")
    return tuple(chosen[q] for q in range(model.n_types))


def cmd_simulate(args, out) -> int:
    model = _load(args.model)
    sigma = _parse_strategy(model, args.strategy)
    _seed(args, out)
    rng = Rng(args.seed)
    est = monte_carlo_estimate(model, model.init, sigma, args.episodes, args.max_steps, rng)
    print(f"mean {est.mean:.7g}", file=out)
    print(f"stderr {est.stderr:.3g}", file=out)
    print(f"truncated_fraction {est.truncated_fraction:.6g}", file=out)
    if args.trace:
        ep = run_episode(model, model.init, sigma, args.max_steps, Rng(args.seed).spawn(1)[0], trace=True)
        Path(args.trace).write_text(format_trace(model, ep.trace))
    return EXIT_OK


def cmd_gen(args, out) -> int:
    _seed(args, out)
    try:
        params = GenParams(n_types=args.types, max_actions=args.max_actions, max_outcomes=args.max_outcomes,
                           max_offspring_len=args.max_offspring_len, cost_range=(args.cost_low, args.cost_high),
                           subcritical=not args.allow_supercritical, seed=args.seed, acyclic=args.acyclic)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    text = serialize_model(gen_random_bmdp(params))
    if args.output:
        Path(args.output).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_bench(args, out) -> int:
    _seed(args, out)
    params = _learn_params(args)
    if args.suite_dir:
        if not Path(args.suite_dir).is_dir():
            raise InputError(f"{args.suite_dir}: not a directory")
        suite = bench.load_suite(args.suite_dir)
    else:
        suite = bench.embedded_suite()
    rows = bench.run_bench(suite, params, args.trials, args.jobs)
    out.write(bench.format_table(rows))
    if args.csv:
        Path(args.csv).write_text(bench.rows_to_csv(rows))
    if args.json:
        Path(args.json).write_text(bench.rows_to_json(rows, params))
    return EXIT_OK


def _add_learn_flags(p: argparse.ArgumentParser):
    d = LearnParams()
    p.add_argument("--epsilon", type=float, default=d.epsilon, help="exploration rate")
    p.add_argument("--alpha", type=float, default=d.alpha, help="learning rate")
    p.add_argument("--tol", type=float, default=d.tol, help="Q-value tolerance for strategy extraction")
    p.add_argument("--ep-l", type=int, default=d.ep_l, help="maximum episode length")
    p.add_argument("--ep-n", type=int, default=d.ep_n, help="number of episodes")
    p.add_argument("--schedule", choices=[s.value for s in Schedule], default=d.schedule.value)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent trials")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bmdp", description="Branching MDP solver and Q-learner")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal expected total cost per type")
    p.add_argument("model")
    p.add_argument("--tol", type=float, default=SolveParams.tolerance)
    p.add_argument("--max-iter", type=int, default=SolveParams.max_iterations)
    p.add_argument("--json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("learn", help="Q-learning estimate of the initial configuration's cost")
    p.add_argument("model")
    _add_learn_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--compare", action="store_true", help="also solve exactly and print the relative error")
    p.add_argument("--csv", help="learning-curve CSV; one file per trial, suffixed _trialN")
    p.add_argument("--json")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("simulate", help="Monte Carlo cost of a static strategy")
    p.add_argument("model")
    p.add_argument("--strategy", default="optimal", help="'optimal' or TYPE=ACTION,...")
    p.add_argument("-n", "--episodes", type=int, default=10000)
    p.add_argument("--max-steps", type=int, default=10**4)
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="write one traced episode as TSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen", help="random model")
    p.add_argument("-o", "--output")
    p.add_argument("--types", type=int, default=GenParams.n_types)
    p.add_argument("--max-actions", type=int, default=GenParams.max_actions)
    p.add_argument("--max-outcomes", type=int, default=GenParams.max_outcomes)
    p.add_argument("--max-offspring-len", type=int, default=GenParams.max_offspring_len)
    p.add_argument("--cost-low", type=float, default=GenParams.cost_range[0])
    p.add_argument("--cost-high", type=float, default=GenParams.cost_range[1])
    p.add_argument("--allow-supercritical", action="store_true")
    p.add_argument("--acyclic", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="exact vs learned table over a suite")
    p.add_argument("suite_dir", nargs="?", help="directory of .bmdp files (default: embedded suite)")
    _add_learn_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which here means non-convergence.
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
