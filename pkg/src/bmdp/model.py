"""Domain types for branching Markov decision processes.

A model is a finite list of entity types. Every type owns a non-empty list of
actions; every action has a strictly positive cost and a finite distribution
over offspring lists. Types and actions are addressed by dense integer
indices in declaration order; names are kept for I/O only.

A configuration is an ordered tuple of type indices. The empty tuple is the
absorbing extinction state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-9

Config = tuple[int, ...]
EMPTY: Config = ()


@dataclass(frozen=True)
class Outcome:
    probability: float
    offspring: Config


@dataclass(frozen=True)
class Action:
    name: str
    cost: float
    outcomes: tuple[Outcome, ...]

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(o.probability for o in self.outcomes)


@dataclass(frozen=True)
class TypeSpec:
    name: str
    actions: tuple[Action, ...]


@dataclass(frozen=True)
class Violation:
    """One failed model invariant; ``location`` reads like ``type T / action a1 / outcome 2``."""

    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}" if self.location else self.message


@dataclass(frozen=True)
class Bmdp:
    types: tuple[TypeSpec, ...]
    init: Config = EMPTY
    name: str | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    @property
    def n_types(self) -> int:
        return len(self.types)

    @property
    def type_names(self) -> list[str]:
        return [t.name for t in self.types]

    def n_actions(self, q: int) -> int:
        return len(self.types[q].actions)

    def action(self, q: int, a: int) -> Action:
        return self.types[q].actions[a]

    def pairs(self) -> list[tuple[int, int]]:
        """All (type, action) index pairs in table order."""
        return [(q, a) for q, t in enumerate(self.types) for a in range(len(t.actions))]

    def type_index(self, name: str) -> int:
        if self._index is None:
            object.__setattr__(self, "_index", {t.name: i for i, t in enumerate(self.types)})
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown type {name!r}") from None

    def action_index(self, q: int, name: str) -> int:
        for a, act in enumerate(self.types[q].actions):
            if act.name == name:
                return a
        raise KeyError(f"type {self.types[q].name!r} has no action {name!r}")

    def config_names(self, config: Iterable[int]) -> list[str]:
        return [self.types[q].name for q in config]

    def is_bmc(self) -> bool:
        """True when every type has exactly one action (a branching Markov chain)."""
        return all(len(t.actions) == 1 for t in self.types)

    def with_init(self, init: Sequence[int]) -> "Bmdp":
        return Bmdp(self.types, tuple(init), self.name)


def config_concat(a: Sequence[int], b: Sequence[int]) -> Config:
    return tuple(a) + tuple(b)


def expected_offspring(model: Bmdp, q: int, a: int) -> np.ndarray:
    """Row of expected offspring counts per type for action ``a`` of type ``q``."""
    row = np.zeros(model.n_types)
    for o in model.action(q, a).outcomes:
        for r in o.offspring:
            row[r] += o.probability
    return row


def normalize_probabilities(ps: Sequence[float]) -> tuple[float, ...]:
    """Rescale so that ``math.fsum`` of the result is exactly 1.0.

    Idempotent: a vector that already sums to exactly 1.0 is returned unchanged.
    """
    ps = [float(p) for p in ps]
    s = math.fsum(ps)
    if s == 1.0:
        return tuple(ps)
    ps = [p / s for p in ps]
    k = max(range(len(ps)), key=ps.__getitem__)
    ps[k] = 1.0 - math.fsum(ps[:k] + ps[k + 1:])
    for _ in range(8):
        s = math.fsum(ps)
        if s == 1.0:
            break
        ps[k] = math.nextafter(ps[k], -math.inf if s > 1.0 else math.inf)
    return tuple(ps)


def normalized(model: Bmdp) -> Bmdp:
    """Copy of ``model`` with every action's probabilities renormalized to sum exactly 1."""
    types = []
    for t in model.types:
        actions = []
        for act in t.actions:
            ps = normalize_probabilities(act.probabilities)
            outs = tuple(Outcome(p, o.offspring) for p, o in zip(ps, act.outcomes))
            actions.append(Action(act.name, act.cost, outs))
        types.append(TypeSpec(t.name, tuple(actions)))
    return Bmdp(tuple(types), model.init, model.name)


def _is_real(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool)


def _is_index(x, n: int) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool) and 0 <= x < n


def validate(model) -> list[Violation]:
    """Collect every structural violation of ``model``; an empty list means well-formed.

    Never raises, whatever shape the input has.
    """
    out: list[Violation] = []
    try:
        types = tuple(model.types)
    except Exception:
        return [Violation("", "model has no iterable 'types'")]
    n = len(types)
    if n == 0:
        out.append(Violation("", "model declares no types"))
    seen: set = set()
    for qi, t in enumerate(types):
        name = getattr(t, "name", None)
        loc = f"type {name}" if isinstance(name, str) and name else f"type #{qi}"
        if not isinstance(name, str) or not name:
            out.append(Violation(loc, "type name must be a non-empty string"))
        elif name in seen:
            out.append(Violation(loc, f"duplicate type name {name!r}"))
        else:
            seen.add(name)
        try:
            actions = tuple(t.actions)
        except Exception:
            out.append(Violation(loc, "type has no iterable 'actions'"))
            continue
        if not actions:
            out.append(Violation(loc, "type has no actions"))
        anames: set = set()
        for ai, act in enumerate(actions):
            aname = getattr(act, "name", None)
            aloc = f"{loc} / action {aname if isinstance(aname, str) and aname else '#' + str(ai)}"
            if not isinstance(aname, str) or not aname:
                out.append(Violation(aloc, "action name must be a non-empty string"))
            elif aname in anames:
                out.append(Violation(aloc, f"duplicate action name {aname!r}"))
            else:
                anames.add(aname)
            cost = getattr(act, "cost", None)
            if not _is_real(cost) or not math.isfinite(cost) or cost <= 0:
                out.append(Violation(aloc, "cost must be strictly positive"))
            try:
                outcomes = tuple(act.outcomes)
            except Exception:
                out.append(Violation(aloc, "action has no iterable 'outcomes'"))
                continue
            if not outcomes:
                out.append(Violation(aloc, "action has no outcomes"))
                continue
            total = 0.0
            good_sum = True
            lists: set = set()
            for oi, o in enumerate(outcomes):
                oloc = f"{aloc} / outcome {oi + 1}"
                p = getattr(o, "probability", None)
                if not _is_real(p) or not math.isfinite(p) or not 0 < p <= 1:
                    out.append(Violation(oloc, "probability must lie in (0, 1]"))
                    good_sum = False
                else:
                    total += p
                try:
                    offspring = tuple(o.offspring)
                except Exception:
                    out.append(Violation(oloc, "outcome has no iterable 'offspring'"))
                    continue
                bad = [r for r in offspring if not _is_index(r, n)]
                if bad:
                    out.append(Violation(oloc, f"undeclared offspring type(s) {bad}"))
                elif offspring in lists:
                    out.append(Violation(oloc, "duplicate offspring list"))
                lists.add(offspring)
            if good_sum and abs(total - 1.0) > PROB_TOL:
                out.append(Violation(aloc, f"probabilities sum to {total:.12g}"))
    try:
        init = tuple(model.init)
        bad = [r for r in init if not _is_index(r, n)]
        if bad:
            out.append(Violation("init", f"undeclared type(s) {bad}"))
    except Exception:
        out.append(Violation("init", "init is not a list of type indices"))
    return out


class QTable:
    """Per (type, action) estimates, stored as one list of floats per type."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[Sequence[float]]):
        self.values = [list(map(float, row)) for row in values]

    @classmethod
    def filled(cls, model: Bmdp, value: float = 0.0) -> "QTable":
        return cls([[value] * model.n_actions(q) for q in range(model.n_types)])

    @classmethod
    def from_type_values(cls, model: Bmdp, x: Sequence[float]) -> "QTable":
        """Table whose every action of type ``q`` holds ``x[q]``."""
        return cls([[float(x[q])] * model.n_actions(q) for q in range(model.n_types)])

    def copy(self) -> "QTable":
        return QTable(self.values)

    def __getitem__(self, key: tuple[int, int]) -> float:
        q, a = key
        return self.values[q][a]

    def __eq__(self, other) -> bool:
        return isinstance(other, QTable) and self.values == other.values

    def __repr__(self) -> str:
        return f"QTable({self.values!r})"

    def minima(self) -> np.ndarray:
        """Greedy per-type value ``min_a Q(q, a)``."""
        return np.array([min(row) for row in self.values])

    def flat(self) -> np.ndarray:
        return np.array([v for row in self.values for v in row])

    def scaled(self, k: float) -> "QTable":
        return QTable([[k * v for v in row] for row in self.values])
