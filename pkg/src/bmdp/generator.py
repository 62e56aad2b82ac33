"""Seeded random BMDP instances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Action, Bmdp, Outcome, TypeSpec, normalize_probabilities

SUBCRITICAL_ROW_SUM = 0.9


@dataclass(frozen=True)
class GenParams:
    n_types: int = 5
    max_actions: int = 3
    max_outcomes: int = 3
    max_offspring_len: int = 3
    cost_range: tuple[float, float] = (1.0, 10.0)
    subcritical: bool = True
    seed: int = 0
    # Offspring of type i only use types j > i, so the dependency graph has no cycle.
    acyclic: bool = False

    def __post_init__(self):
        if self.n_types < 1 or self.max_actions < 1 or self.max_outcomes < 1:
            raise ValueError("n_types, max_actions and max_outcomes must be >= 1")
        if self.max_offspring_len < 0:
            raise ValueError("max_offspring_len must be >= 0")
        lo, hi = self.cost_range
        if not (lo > 0 and hi >= lo):
            raise ValueError("cost_range must satisfy 0 < low <= high")


def _merge(kids: list[tuple[int, ...]], weights: list[float]):
    merged: dict[tuple[int, ...], float] = {}
    for k, w in zip(kids, weights):
        merged[k] = merged.get(k, 0.0) + w
    return list(merged), list(merged.values())


def _random_action(rng: np.random.Generator, q: int, p: GenParams, name: str) -> Action:
    lo, hi = p.cost_range
    cost = round(float(rng.uniform(lo, hi)), 3) if hi > lo else float(lo)
    targets = range(q + 1, p.n_types) if p.acyclic else range(p.n_types)
    kids, weights = [], []
    for _ in range(int(rng.integers(1, p.max_outcomes + 1))):
        length = int(rng.integers(0, p.max_offspring_len + 1)) if len(targets) else 0
        kids.append(tuple(int(t) for t in rng.choice(targets, size=length)) if length else ())
        weights.append(float(rng.uniform(0.1, 1.0)))
    kids, weights = _merge(kids, weights)
    probs = list(normalize_probabilities(weights))
    if p.subcritical:
        while sum(pr * len(k) for pr, k in zip(probs, kids)) > SUBCRITICAL_ROW_SUM:
            i = max(range(len(kids)), key=lambda j: len(kids[j]))
            kids[i] = kids[i][:-1]
            kids, probs = _merge(kids, probs)
            probs = list(normalize_probabilities(probs))
    return Action(name, cost, tuple(Outcome(pr, k) for pr, k in zip(probs, kids)))


def gen_random_bmdp(params: GenParams) -> Bmdp:
    """Deterministic in ``params.seed``; the initial configuration is one entity of type 0.

    With ``subcritical`` set, every action's expected offspring total is at
    most 0.9, so every static strategy has finite cost.
    """
    rng = np.random.Generator(np.random.Philox(params.seed))
    types = []
    for q in range(params.n_types):
        n_act = int(rng.integers(1, params.max_actions + 1))
        actions = tuple(_random_action(rng, q, params, f"a{i + 1}") for i in range(n_act))
        types.append(TypeSpec(f"q{q}", actions))
    return Bmdp(tuple(types), (0,), f"rand_seed{params.seed}")
