"""Benchmark suite: exact values next to Q-learning estimates, one row per model."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .generator import GenParams, gen_random_bmdp
from .model import Bmdp, QTable
from .parser import ParseError, load_model, parse_model
from .qlearn import LearnParams, LearnResult, extract_greedy_strategy, run_learning
from .rng import derive_seeds
from .solver import SolveParams, config_value, strategy_names, value_iterate

EMBEDDED_FILES = ("cloud1", "cloud2", "cloud2_p50")
EMBEDDED_RAND_SEEDS = (7, 68, 283, 945, 3242)
DIVERGED = "inf/diverged"


def embedded_model(name: str) -> Bmdp:
    return parse_model(resources.files("bmdp.models").joinpath(f"{name}.bmdp").read_text())


def embedded_suite() -> list[tuple[str, Bmdp]]:
    suite = [(name, embedded_model(name)) for name in EMBEDDED_FILES]
    for seed in EMBEDDED_RAND_SEEDS:
        m = gen_random_bmdp(GenParams(seed=seed))
        suite.append((m.name, m))
    return suite


def load_suite(directory) -> list[tuple[str, Bmdp | ParseError]]:
    """Every ``*.bmdp`` file in ``directory`` in name order; parse failures are kept as errors."""
    out = []
    for path in sorted(Path(directory).glob("*.bmdp")):
        try:
            out.append((path.stem, load_model(path)))
        except ParseError as exc:
            out.append((path.stem, exc))
    return out


@dataclass
class TrialSummary:
    results: list[LearnResult]
    mean_estimate: float
    mean_seconds: float
    strategy: tuple[int, ...]
    mean_q: QTable


def _one_trial(args) -> LearnResult:
    model, params = args
    return run_learning(model, params)


def run_trials(model: Bmdp, params: LearnParams, trials: int, jobs: int = 1) -> TrialSummary:
    """Independent learning runs with seeds derived from ``params.seed``.

    Results come back in trial order whatever ``jobs`` is. The reported
    strategy is extracted from the trial-averaged Q-table.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    work = [(model, dataclasses.replace(params, seed=s)) for s in derive_seeds(params.seed, trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_trial, work))
    else:
        results = [_one_trial(w) for w in work]
    mean_q = QTable([[float(np.mean([r.q.values[q][a] for r in results])) for a in range(len(row))]
                     for q, row in enumerate(results[0].q.values)])
    return TrialSummary(
        results=results,
        mean_estimate=float(np.mean([r.estimate for r in results])),
        mean_seconds=float(np.mean([r.seconds for r in results])),
        strategy=extract_greedy_strategy(mean_q, params.tol),
        mean_q=mean_q,
    )


@dataclass
class BenchRow:
    name: str
    types: int
    optimal_cost: float
    estimated_cost: float | str
    time_seconds: float
    ep_l: int
    ep_n: int
    error: str | None = None
    exact: dict = field(default_factory=dict)
    learned: dict = field(default_factory=dict)


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


def bench_model(name: str, model: Bmdp, params: LearnParams, trials: int = 3,
                solve_params: SolveParams = SolveParams(), jobs: int = 1) -> BenchRow:
    sol = value_iterate(model, solve_params)
    optimal = config_value(sol.values, model.init)
    exact = {
        "values": {n: _jsonable(float(v)) for n, v in zip(model.type_names, sol.values)},
        "strategy": strategy_names(model, sol.strategy),
    }
    row = BenchRow(name, model.n_types, optimal, DIVERGED, 0.0, params.ep_l, params.ep_n, exact=exact)
    # Q-values of infinite types grow without bound; learning them has no target to report.
    if not np.isfinite(sol.values).all():
        row.learned = {"estimate": DIVERGED, "trials": [], "strategy": None}
        return row
    summary = run_trials(model, params, trials, jobs)
    row.estimated_cost = summary.mean_estimate
    row.time_seconds = summary.mean_seconds
    row.learned = {
        "estimate": summary.mean_estimate,
        "trials": [r.estimate for r in summary.results],
        "strategy": strategy_names(model, summary.strategy),
    }
    return row


def run_bench(suite, params: LearnParams, trials: int = 3, jobs: int = 1) -> list[BenchRow]:
    """One row per model; a model that fails to load or solve gets an error row and the suite continues."""
    rows = []
    for name, model in suite:
        if isinstance(model, Exception):
            rows.append(BenchRow(name, 0, math.nan, "error", 0.0, params.ep_l, params.ep_n, error=str(model)))
            continue
        try:
            rows.append(bench_model(name, model, params, trials, jobs=jobs))
        except Exception as exc:  # keep the suite going
            rows.append(BenchRow(name, model.n_types, math.nan, "error", 0.0, params.ep_l, params.ep_n,
                                 error=f"{type(exc).__name__}: {exc}"))
    return rows


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if math.isinf(x):
        return "inf"
    s = f"{x:.6g}"
    return s if any(c in s for c in ".en") else s + ".0"


COLUMNS = ("Name", "types", "optimal cost", "estimated cost", "time (avg.)", "ep-l", "ep-n")


def _cells(r: BenchRow, defaults: LearnParams) -> list[str]:
    return [r.name, str(r.types), _fmt(r.optimal_cost), _fmt(r.estimated_cost), f"{r.time_seconds:.3f}",
            "" if r.ep_l == defaults.ep_l else str(r.ep_l),
            "" if r.ep_n == defaults.ep_n else str(r.ep_n)]


def format_table(rows: list[BenchRow], defaults: LearnParams = LearnParams()) -> str:
    """Fixed-width text table; ep-l/ep-n cells are blank when equal to the defaults."""
    body = [_cells(r, defaults) for r in rows]
    widths = [max([len(c)] + [len(b[i]) for b in body]) for i, c in enumerate(COLUMNS)]
    lines = [" | ".join(c.ljust(w) for c, w in zip(COLUMNS, widths)),
             "-+-".join("-" * w for w in widths)]
    for b, r in zip(body, rows):
        line = " | ".join(c.ljust(w) for c, w in zip(b, widths))
        lines.append(line + (f"  ! {r.error}" if r.error else ""))
    return "\n".join(lines) + "\n"


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "types", "optimal_cost", "estimated_cost", "time_seconds", "ep_l", "ep_n"])
    for r in rows:
        w.writerow([r.name, r.types, _fmt(r.optimal_cost), _fmt(r.estimated_cost),
                    f"{r.time_seconds:.6f}", r.ep_l, r.ep_n])
    return buf.getvalue()


def params_dict(params: LearnParams) -> dict:
    d = dataclasses.asdict(params)
    d["schedule"] = params.schedule.value
    return d


def row_to_json(r: BenchRow, params: LearnParams) -> dict:
    d = {"model": r.name, "types": r.types, "exact": r.exact, "learned": r.learned,
         "params": params_dict(params)}
    if r.error:
        d["error"] = r.error
    return d


def rows_to_json(rows: list[BenchRow], params: LearnParams) -> str:
    return json.dumps([row_to_json(r, params) for r in rows], indent=2)


def curve_to_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "estimate"])
    w.writerows([ep, repr(float(v))] for ep, v in curve)
    return buf.getvalue()
