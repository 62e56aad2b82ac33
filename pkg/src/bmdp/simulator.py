"""Sampling semantics of a BMDP viewed as an (infinite-state) MDP.

A step picks one entity of the current configuration and an action for it,
pays the action's cost, and splices the sampled offspring list into the
configuration in place of that entity.
"""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import Bmdp, Config
from .rng import Rng

FIRST = "first"
UNIFORM = "uniform"

_CHUNK = 1000


class Sampler:
    """Black-box access to a model: action counts, costs and offspring draws only.

    The learner is handed one of these instead of the model so it cannot
    read transition probabilities.
    """

    def __init__(self, model: Bmdp):
        self.n_types = model.n_types
        self.init: Config = tuple(model.init)
        self.action_counts = tuple(model.n_actions(q) for q in range(model.n_types))
        self._cost = [[act.cost for act in t.actions] for t in model.types]
        self._cum = []
        self._kids = []
        for t in model.types:
            cums, kids = [], []
            for act in t.actions:
                cums.append(_cumulative(act.probabilities))
                kids.append([o.offspring for o in act.outcomes])
            self._cum.append(cums)
            self._kids.append(kids)

    def n_actions(self, q: int) -> int:
        return self.action_counts[q]

    def sample(self, q: int, a: int, u: float) -> tuple[float, Config]:
        """Cost and offspring of taking ``a`` on an entity of type ``q``, given one uniform draw."""
        cum = self._cum[q][a]
        kids = self._kids[q][a]
        return self._cost[q][a], kids[min(bisect.bisect_right(cum, u), len(kids) - 1)]


def _cumulative(ps: Sequence[float]) -> list[float]:
    return list(itertools.accumulate(ps))


def _check_action(model: Bmdp, q: int, a: int):
    if not 0 <= q < model.n_types:
        raise ValueError(f"unknown type index {q}")
    if not 0 <= a < model.n_actions(q):
        raise ValueError(f"action {a} not available to type {model.types[q].name}")


def sample_offspring(model: Bmdp, q: int, a: int, rng: Rng) -> Config:
    """Inverse-CDF draw over the outcomes of (q, a) in declaration order."""
    _check_action(model, q, a)
    outs = model.action(q, a).outcomes
    i = bisect.bisect_right(_cumulative([o.probability for o in outs]), rng.random())
    return outs[min(i, len(outs) - 1)].offspring


@dataclass(frozen=True)
class StepRecord:
    entity_index: int  # 1-based
    type: int
    action: int
    cost: float
    offspring: Config
    next_config: Config


def step(model: Bmdp, config: Sequence[int], entity_index: int, a: int, rng: Rng) -> StepRecord:
    config = tuple(config)
    if not 1 <= entity_index <= len(config):
        raise ValueError(f"entity index {entity_index} outside 1..{len(config)}")
    q = config[entity_index - 1]
    _check_action(model, q, a)
    kids = sample_offspring(model, q, a, rng)
    nxt = config[:entity_index - 1] + kids + config[entity_index:]
    return StepRecord(entity_index, q, a, model.action(q, a).cost, kids, nxt)


@dataclass
class EpisodeResult:
    total_cost: float
    steps: int
    terminated: bool
    trace: list[StepRecord] | None = None


def run_episode(model: Bmdp, start: Sequence[int], sigma: Sequence[int], max_steps: int, rng: Rng,
                select: str = FIRST, trace: bool = False) -> EpisodeResult:
    """Play a static strategy from ``start`` until extinction or ``max_steps`` steps.

    ``select`` chooses which entity moves: always the first one (the static
    strategy semantics) or one picked uniformly at random.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    if select not in (FIRST, UNIFORM):
        raise ValueError(f"unknown entity selection {select!r}")
    config = tuple(start)
    records = [] if trace else None
    total = 0.0
    steps = 0
    while config and steps < max_steps:
        idx = 1 if select == FIRST else rng.below(len(config)) + 1
        rec = step(model, config, idx, sigma[config[idx - 1]], rng)
        total += rec.cost
        if trace:
            records.append(rec)
        config = rec.next_config
        steps += 1
    return EpisodeResult(total, steps, not config, records)


def format_trace(model: Bmdp, records: Iterable[StepRecord]) -> str:
    """Tab-separated lines: step, entity_index, type, action, cost, |next_config|."""
    lines = []
    for i, r in enumerate(records, 1):
        t = model.types[r.type]
        lines.append(f"{i}\t{r.entity_index}\t{t.name}\t{t.actions[r.action].name}\t{r.cost!r}\t{len(r.next_config)}")
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    truncated_fraction: float
    episodes: int = field(default=0)


def _episode_costs(sampler: Sampler, start: Config, sigma: Sequence[int], n: int,
                   max_steps: int, rng: Rng) -> tuple[list[float], int]:
    sample = sampler.sample
    rand = rng.random
    totals = []
    truncated = 0
    rev_start = list(reversed(start))
    for _ in range(n):
        stack = rev_start[:]
        total = 0.0
        steps = 0
        while stack and steps < max_steps:
            q = stack.pop()
            c, kids = sample(q, sigma[q], rand())
            total += c
            if kids:
                stack.extend(reversed(kids))
            steps += 1
        if stack:
            truncated += 1
        totals.append(total)
    return totals, truncated


def monte_carlo_estimate(model: Bmdp, start: Sequence[int], sigma: Sequence[int], episodes: int,
                         max_steps: int = 10**4, rng: Rng | None = None) -> MonteCarloEstimate:
    """Mean total cost of a static strategy over independent episodes.

    Truncated episodes keep their partial cost and are counted in
    ``truncated_fraction``. Episodes run in chunks of 1000 with one child
    stream per chunk, so results do not depend on how chunks are scheduled.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = rng or Rng(0)
    sampler = Sampler(model)
    start = tuple(start)
    n_chunks = -(-episodes // _CHUNK)
    totals: list[float] = []
    truncated = 0
    for i, child in enumerate(rng.spawn(n_chunks)):
        n = min(_CHUNK, episodes - i * _CHUNK)
        t, k = _episode_costs(sampler, start, sigma, n, max_steps, child)
        totals.extend(t)
        truncated += k
    arr = np.array(totals)
    if arr.min() == arr.max():
        return MonteCarloEstimate(float(arr[0]), 0.0, truncated / episodes, episodes)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return MonteCarloEstimate(mean, stderr, truncated / episodes, episodes)
