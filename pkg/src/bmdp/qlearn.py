"""Model-free Q-learning of optimal expected total cost.

A Q-value update for an entity of type q that took action a, paid cost c and
spawned offspring beta is

    Q(q, a) <- (1 - lam) * Q(q, a) + lam * (c + sum_i min_a' Q(beta_i, a'))

and touches no other entry. Costs are undiscounted.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Bmdp, Config, QTable
from .rng import Rng
from .simulator import Sampler
from .solver import BellmanSystem

HARMONIC_DECAY = 0.001


class Schedule(enum.Enum):
    CONSTANT = "constant"
    HARMONIC = "harmonic"


@dataclass(frozen=True)
class LearnParams:
    epsilon: float = 0.1
    alpha: float = 0.1
    schedule: Schedule = Schedule.CONSTANT
    tol: float = 0.01
    ep_l: int = 30
    ep_n: int = 20000
    seed: int = 0
    q_init: float = 0.0

    def __post_init__(self):
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.ep_l < 1 or self.ep_n < 1:
            raise ValueError("ep_l and ep_n must be >= 1")
        if self.q_init < 0:
            raise ValueError("q_init must be non-negative")
        object.__setattr__(self, "schedule", Schedule(self.schedule))


@dataclass
class LearnResult:
    q: QTable
    estimate: float
    strategy: tuple[int, ...]
    curve: list[tuple[int, float]] = field(default_factory=list)
    updates: int = 0
    seconds: float = 0.0


def q_update(q: QTable, type_: int, a: int, cost: float, offspring: Sequence[int], lam: float) -> QTable:
    """Functional single-entry update; returns a new table."""
    out = q.copy()
    target = cost + sum(min(out.values[r]) for r in offspring)
    out.values[type_][a] = (1 - lam) * q.values[type_][a] + lam * target
    return out


def apply_q_target(model: Bmdp, q: QTable) -> QTable:
    """Exact expected target T(Q), computed from the model's distributions."""
    system = BellmanSystem(model)
    flat = system.pair_values(q.minima())
    return QTable([flat[s:s + model.n_actions(t)] for t, s in enumerate(system.starts)])


def extract_greedy_strategy(q: QTable, tol: float) -> tuple[int, ...]:
    """Per type, the lowest-index action whose Q-value is within ``tol`` of the minimum."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    out = []
    for row in q.values:
        m = min(row)
        out.append(next(a for a, v in enumerate(row) if v <= m + tol))
    return tuple(out)


def run_learning(model: Bmdp, params: LearnParams = LearnParams()) -> LearnResult:
    """Episodic Q-learning from the model's initial configuration."""
    return learn(Sampler(model), params)


def learn(env: Sampler, params: LearnParams) -> LearnResult:
    """Episodic Q-learning against a black-box sampler.

    Each step picks an entity uniformly, then an action epsilon-greedily
    (greedy ties go to the lowest index), samples its outcome and updates the
    pair. An episode ends at the empty configuration or after ``ep_l`` steps.
    """
    t0 = time.perf_counter()
    rng = Rng(params.seed)
    rand = rng.random
    sample = env.sample
    Q = [[params.q_init] * k for k in env.action_counts]
    mins = [params.q_init] * env.n_types
    visits = [[0] * k for k in env.action_counts]
    eps, alpha, ep_l = params.epsilon, params.alpha, params.ep_l
    harmonic = params.schedule is Schedule.HARMONIC
    init = list(env.init)
    every = max(1, params.ep_n // 200)
    curve = []
    updates = 0
    for ep in range(params.ep_n):
        config = init[:]
        for _ in range(ep_l):
            if not config:
                break
            n = len(config)
            j = int(rand() * n)
            if j == n:
                j -= 1
            q = config[j]
            row = Q[q]
            k = len(row)
            if rand() < eps:
                a = min(int(rand() * k), k - 1)
            else:
                a = row.index(mins[q])
            c, kids = sample(q, a, rand())
            target = c
            for r in kids:
                target += mins[r]
            if harmonic:
                lam = alpha / (1.0 + HARMONIC_DECAY * visits[q][a])
                visits[q][a] += 1
            else:
                lam = alpha
            row[a] = (1.0 - lam) * row[a] + lam * target
            mins[q] = min(row)
            config[j:j + 1] = kids
            updates += 1
        if (ep + 1) % every == 0 or ep + 1 == params.ep_n:
            curve.append((ep + 1, sum(mins[r] for r in init)))
    table = QTable(Q)
    return LearnResult(
        q=table,
        estimate=sum(mins[r] for r in init),
        strategy=extract_greedy_strategy(table, params.tol),
        curve=curve,
        updates=updates,
        seconds=time.perf_counter() - t0,
    )


def run_random_update(model: Bmdp, params: LearnParams, updates: int,
                      q0: QTable | None = None, start: Config | None = None) -> LearnResult:
    """Asynchronous updates with each (type, action) pair drawn uniformly per step.

    The pair draws and outcome draws depend only on ``params.seed``, so runs
    that differ only in ``q0`` see identical randomness.
    """
    if updates < 1:
        raise ValueError("updates must be >= 1")
    t0 = time.perf_counter()
    env = Sampler(model)
    sample = env.sample
    rng = Rng(params.seed)
    Q = q0.copy().values if q0 is not None else [[params.q_init] * k for k in env.action_counts]
    mins = [min(row) for row in Q]
    pairs = [(q, a) for q, k in enumerate(env.action_counts) for a in range(k)]
    visits = [0] * len(pairs)
    alpha = params.alpha
    harmonic = params.schedule is Schedule.HARMONIC
    init = list(env.init if start is None else start)
    every = max(1, updates // 200)
    curve = []
    block = 1 << 14
    done = 0
    while done < updates:
        n = min(block, updates - done)
        picks = rng.integers(len(pairs), n).tolist()
        us = rng.uniforms(n).tolist()
        for i in range(n):
            p = picks[i]
            q, a = pairs[p]
            c, kids = sample(q, a, us[i])
            target = c
            for r in kids:
                target += mins[r]
            if harmonic:
                lam = alpha / (1.0 + HARMONIC_DECAY * visits[p])
                visits[p] += 1
            else:
                lam = alpha
            row = Q[q]
            row[a] = (1.0 - lam) * row[a] + lam * target
            mins[q] = min(row)
            if (done + i + 1) % every == 0:
                curve.append((done + i + 1, sum(mins[r] for r in init)))
        done += n
    table = QTable(Q)
    return LearnResult(
        q=table,
        estimate=sum(mins[r] for r in init),
        strategy=extract_greedy_strategy(table, params.tol),
        curve=curve,
        updates=updates,
        seconds=time.perf_counter() - t0,
    )


def expected_update_trajectory(model: Bmdp, q0, lambdas: Sequence[float], p=1.0,
                               c_star: np.ndarray | None = None, stop_tol: float | None = None) -> np.ndarray:
    """Deterministic iteration of the expected update for a branching Markov chain.

    ``E Q_{i+1} = (1 - lam_i p) E Q_i + lam_i p T(E Q_i)``, exact because T is
    affine when every type has one action. Returns an array with one row per
    iterate (row 0 is ``q0``). With ``c_star`` and ``stop_tol`` given, stops
    once ``max|Q - c_star| < stop_tol``.
    """
    if not model.is_bmc():
        raise ValueError("expected-update recursion is exact only when every type has one action")
    system = BellmanSystem(model)
    q = np.asarray(q0.flat() if isinstance(q0, QTable) else q0, dtype=float).copy()
    p = np.broadcast_to(np.asarray(p, dtype=float), q.shape)
    if ((p <= 0) | (p > 1)).any():
        raise ValueError("update probabilities must lie in (0, 1]")
    traj = [q]
    for lam in lambdas:
        w = lam * p
        q = (1.0 - w) * q + w * system.pair_values(q)
        traj.append(q)
        if stop_tol is not None and np.max(np.abs(q - c_star)) < stop_tol:
            break
    return np.array(traj)
