"""Exact optimal expected total cost per type.

The optimal values are the least fixed point of the per-type Bellman system

    x_q = min_a ( c(q, a) + sum_alpha p(q, a)(alpha) * sum_i x_{alpha_i} )

computed by Kleene iteration from the zero vector. Values live in the extended
non-negative reals; ``inf`` stands for an infinite expected cost.
"""
from __future__ import annotations

import enum
import graphlib
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import RadiusEstimate, SingularMatrixError, gauss_solve, spectral_radius
from .model import Bmdp, expected_offspring

log = logging.getLogger(__name__)

Strategy = tuple[int, ...]


@dataclass(frozen=True)
class SolveParams:
    tolerance: float = 1e-9
    max_iterations: int = 10**6
    divergence_threshold: float = 1e12
    # Iterations between policy-based divergence probes; 0 disables them.
    probe_every: int = 1000
    # After convergence, replace the iterate by the exact value of its greedy strategy when that is safe.
    refine: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.divergence_threshold > self.tolerance:
            raise ValueError("divergence_threshold must exceed tolerance")


class Status(enum.Enum):
    CONVERGED = "converged"
    NOT_CONVERGED = "not-converged"


@dataclass
class SolveResult:
    values: np.ndarray
    strategy: Strategy
    iterations: int
    converged_types: np.ndarray
    status: Status
    residual: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


@dataclass
class StrategyEvaluation:
    values: np.ndarray
    radius: RadiusEstimate
    method: str  # "linear" or "iteration"
    discrepancy: float | None = None

    @property
    def spectral_radius(self) -> float:
        return self.radius.value


class CyclicModelError(ValueError):
    """Raised by :func:`solve_acyclic` when some type can (indirectly) spawn itself."""


class BellmanSystem:
    """Vectorised form of the per-type equations.

    Rows of ``counts`` are the expected offspring count vectors of every
    (type, action) pair in table order; ``starts[q]`` is the first row of type q.
    """

    def __init__(self, model: Bmdp):
        self.model = model
        self.pairs = model.pairs()
        self.costs = np.array([model.action(q, a).cost for q, a in self.pairs])
        n = model.n_types
        self.counts = np.array([expected_offspring(model, q, a) for q, a in self.pairs]).reshape(-1, n)
        self.starts = np.array([0] + list(np.cumsum([model.n_actions(q) for q in range(n)])[:-1]), dtype=int)

    def pair_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inf = ~np.isfinite(x)
        out = self.costs + self.counts @ np.where(inf, 0.0, x)
        if inf.any():
            out[(self.counts[:, inf] > 0).any(axis=1)] = math.inf
        assert not np.isnan(out).any(), "NaN in Bellman operator"
        return out

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.minimum.reduceat(self.pair_values(x), self.starts)

    def greedy(self, x: np.ndarray) -> Strategy:
        v = self.pair_values(x)
        return tuple(int(np.argmin(v[s:s + self.model.n_actions(q)]))
                     for q, s in enumerate(self.starts))

    def row(self, q: int, a: int) -> int:
        return int(self.starts[q]) + a


def _as_vector(model: Bmdp, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_types,):
        raise ValueError(f"expected {model.n_types} values, got shape {x.shape}")
    if np.isnan(x).any() or (x < 0).any():
        raise ValueError("value vectors must be non-negative and NaN-free")
    return x


def apply_target(model: Bmdp, x) -> np.ndarray:
    """One application of the Bellman operator F, with ``inf`` absorbing."""
    return BellmanSystem(model).apply(_as_vector(model, x))


def check_strategy(model: Bmdp, sigma: Sequence[int]) -> Strategy:
    sigma = tuple(int(a) for a in sigma)
    if len(sigma) != model.n_types:
        raise ValueError(f"strategy has {len(sigma)} entries for {model.n_types} types")
    for q, a in enumerate(sigma):
        if not 0 <= a < model.n_actions(q):
            raise ValueError(f"action {a} not available to type {model.types[q].name}")
    return sigma


def expected_offspring_matrix(model: Bmdp, sigma: Sequence[int]) -> np.ndarray:
    """B_sigma: entry (q, r) is the expected number of r-children of q under sigma."""
    sigma = check_strategy(model, sigma)
    return np.array([expected_offspring(model, q, a) for q, a in enumerate(sigma)]).reshape(
        model.n_types, model.n_types)


def value_iterate(model: Bmdp, params: SolveParams = SolveParams()) -> SolveResult:
    """Kleene iteration from zero with divergence pinning.

    Components above ``divergence_threshold`` become ``inf``. Every
    ``probe_every`` iterations the current greedy strategy is evaluated
    exactly; if its value vector is itself a fixed point of F, types where it
    is infinite are pinned too. Both rules are heuristics.
    """
    system = BellmanSystem(model)
    x = np.zeros(model.n_types)
    diff = math.inf
    k = 0
    status = Status.NOT_CONVERGED
    for k in range(1, params.max_iterations + 1):
        fx = system.apply(x)
        fx[fx > params.divergence_threshold] = math.inf
        fin = np.isfinite(fx)
        diff = float(np.max(np.abs(fx[fin] - x[fin]), initial=0.0))
        x = fx
        if diff < params.tolerance:
            status = Status.CONVERGED
            break
        if params.probe_every and k % params.probe_every == 0:
            pinned = _divergence_probe(model, system, x, params)
            if pinned.any():
                log.debug("iteration %d: pinned %s to inf", k, np.flatnonzero(pinned))
                x[pinned] = math.inf
    if status is Status.CONVERGED and params.refine:
        x = _refine(model, system, x, params)
    fin = np.isfinite(x)
    residual = float(np.max(np.abs(system.apply(x)[fin] - x[fin]), initial=0.0))
    return SolveResult(
        values=x,
        strategy=system.greedy(x),
        iterations=k,
        converged_types=fin & (status is Status.CONVERGED),
        status=status,
        residual=residual,
    )


def _refine(model, system, x, params) -> np.ndarray:
    """Exact value of the greedy strategy, if it is a fixed point of F next to ``x``.

    Kleene iterates lie below the least fixed point and any strategy's value
    lies above it, so a fixed point squeezed that close to ``x`` is the least
    one up to rounding. Otherwise ``x`` is returned unchanged.
    """
    v = evaluate_static_strategy(model, system.greedy(x), params).values
    fin = np.isfinite(x)
    if (np.isfinite(v) != fin).any():
        return x
    scale = np.maximum(1.0, np.abs(x[fin]))
    gap = v[fin] - x[fin]
    if gap.min(initial=0.0) < -1e-12 * scale.max(initial=1.0) or (gap > 1e-6 * scale).any():
        return x
    fv = system.apply(v)
    if np.max(np.abs(fv[fin] - v[fin]), initial=0.0) > params.tolerance:
        return x
    return v


def _divergence_probe(model, system, x, params) -> np.ndarray:
    sigma = system.greedy(x)
    ev = evaluate_static_strategy(model, sigma, params)
    v = ev.values
    inf = ~np.isfinite(v)
    if not (inf & np.isfinite(x)).any():
        return np.zeros(model.n_types, dtype=bool)
    fv = system.apply(v)
    fin = ~inf
    if (np.isfinite(fv) != fin).any():
        return np.zeros(model.n_types, dtype=bool)
    if np.max(np.abs(fv[fin] - v[fin]), initial=0.0) > max(params.tolerance, 1e-9 * np.max(v[fin], initial=1.0)):
        return np.zeros(model.n_types, dtype=bool)
    return inf & np.isfinite(x)


def _reachability(adj: np.ndarray) -> np.ndarray:
    """Reflexive-transitive closure of a boolean adjacency matrix."""
    n = adj.shape[0]
    r = adj | np.eye(n, dtype=bool)
    while True:
        nxt = (r.astype(np.int64) @ r.astype(np.int64)) > 0
        if (nxt == r).all():
            return r
        r = nxt


def _infinite_types(b: np.ndarray, rounds: int, tol: float) -> tuple[np.ndarray, RadiusEstimate]:
    """Types whose offspring process (positive costs) has infinite expected cost.

    A type is infinite iff it reaches a strongly connected class with
    spectral radius >= 1. Also returns the estimate for the whole matrix
    (the maximum over classes).
    """
    n = b.shape[0]
    adj = b > 0
    reach = _reachability(adj)
    done = np.zeros(n, dtype=bool)
    critical = np.zeros(n, dtype=bool)
    best = RadiusEstimate(0.0, 0.0, 0.0, 0)
    for q in range(n):
        if done[q]:
            continue
        cls = reach[q] & reach[:, q]
        done |= cls
        idx = np.flatnonzero(cls)
        if len(idx) == 1 and not adj[q, q]:
            continue
        est = spectral_radius(b[np.ix_(idx, idx)], rounds=rounds, tol=tol)
        if est.value > best.value:
            best = est
        if est.value >= 1.0 - tol:
            critical |= cls
    infinite = (reach[:, critical]).any(axis=1) if critical.any() else np.zeros(n, dtype=bool)
    return infinite, best


def evaluate_static_strategy(model: Bmdp, sigma: Sequence[int],
                             params: SolveParams = SolveParams(),
                             power_rounds: int = 200, power_tol: float = 1e-12) -> StrategyEvaluation:
    """Expected total cost per type when every entity of type q always takes sigma(q).

    Solves (I - B) x = c on the types with finite value by Gaussian
    elimination; falls back to iterating x <- B x + c when the system is
    numerically singular.
    """
    sigma = check_strategy(model, sigma)
    b = expected_offspring_matrix(model, sigma)
    c = np.array([model.action(q, a).cost for q, a in enumerate(sigma)])
    infinite, radius = _infinite_types(b, power_rounds, power_tol)
    fin = np.flatnonzero(~infinite)
    values = np.full(model.n_types, math.inf)
    if len(fin) == 0:
        return StrategyEvaluation(values, radius, "linear")
    bf = b[np.ix_(fin, fin)]
    try:
        values[fin] = gauss_solve(np.eye(len(fin)) - bf, c[fin])
        if (values[fin] < 0).any() or not np.isfinite(values[fin]).all():
            raise SingularMatrixError("solution left the non-negative orthant")
        return StrategyEvaluation(values, radius, "linear")
    except SingularMatrixError as exc:
        log.warning("linear solve failed (%s); falling back to iteration", exc)
    it = iterate_static_strategy(model, sigma, params)
    disc = None
    if np.isfinite(it[fin]).all():
        disc = float(np.max(np.abs(it[fin] - np.nan_to_num(values[fin], posinf=0.0))))
    values = it
    return StrategyEvaluation(values, radius, "iteration", disc)


def iterate_static_strategy(model: Bmdp, sigma: Sequence[int],
                            params: SolveParams = SolveParams()) -> np.ndarray:
    """Value iteration on the affine map x <- B_sigma x + c_sigma, with threshold pinning."""
    sigma = check_strategy(model, sigma)
    b = expected_offspring_matrix(model, sigma)
    c = np.array([model.action(q, a).cost for q, a in enumerate(sigma)])
    x = np.zeros(model.n_types)
    for _ in range(params.max_iterations):
        inf = ~np.isfinite(x)
        fx = c + b @ np.where(inf, 0.0, x)
        if inf.any():
            fx[(b[:, inf] > 0).any(axis=1)] = math.inf
        fx[fx > params.divergence_threshold] = math.inf
        fin = np.isfinite(fx)
        diff = np.max(np.abs(fx[fin] - x[fin]), initial=0.0)
        x = fx
        if diff < params.tolerance:
            break
    return x


def config_value(values: Sequence[float], alpha: Sequence[int]) -> float:
    """Expected total cost of a configuration: the sum of its entities' values."""
    return math.fsum(float(values[q]) for q in alpha)


def solve_acyclic(model: Bmdp) -> np.ndarray:
    """Single backward pass over the type dependency graph.

    Raises :class:`CyclicModelError` if some type can reach itself.
    """
    deps = {q: set() for q in range(model.n_types)}
    for q, t in enumerate(model.types):
        for act in t.actions:
            for o in act.outcomes:
                deps[q].update(o.offspring)
    try:
        order = list(graphlib.TopologicalSorter(deps).static_order())
    except graphlib.CycleError as exc:
        raise CyclicModelError(f"cyclic type dependency: {exc.args[1]}") from None
    x = np.full(model.n_types, math.nan)
    for q in order:
        best = math.inf
        for act in model.types[q].actions:
            v = act.cost + math.fsum(o.probability * math.fsum(x[r] for r in o.offspring)
                                     for o in act.outcomes)
            best = min(best, v)
        x[q] = best
    return x


def strategy_names(model: Bmdp, sigma: Sequence[int]) -> dict[str, str]:
    return {t.name: t.actions[a].name for t, a in zip(model.types, sigma)}
