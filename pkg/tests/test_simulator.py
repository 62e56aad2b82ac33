import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmdp.bench import embedded_model
from bmdp.generator import GenParams, gen_random_bmdp
from bmdp.rng import Rng, derive_seeds
from bmdp.simulator import (UNIFORM, Sampler, format_trace, monte_carlo_estimate, run_episode, sample_offspring,
                            step)
from bmdp.solver import evaluate_static_strategy

from conftest import build

T, S = 0, 1
A1, A2 = 0, 1
CLOUD1 = embedded_model("cloud1")


def test_deterministic_outcome(cloud1):
    rng = Rng(3)
    assert all(sample_offspring(cloud1, T, A1, rng) == (S, S, S) for _ in range(100))


def test_outcome_frequency(cloud1):
    rng = Rng(11)
    n = 100_000
    hits = sum(sample_offspring(cloud1, S, A2, rng) == (S,) for _ in range(n))
    assert abs(hits / n - 0.4) <= 4 * math.sqrt(0.4 * 0.6 / n)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 2**32))
def test_outcome_frequencies_generated(seed, rseed):
    model = gen_random_bmdp(GenParams(seed=seed, n_types=2))
    act = model.action(0, 0)
    rng = Rng(rseed)
    n = 4000
    draws = [sample_offspring(model, 0, 0, rng) for _ in range(n)]
    for o in act.outcomes:
        freq = sum(d == o.offspring for d in draws) / n
        # 5 sigma keeps the false alarm rate negligible across hypothesis examples.
        assert abs(freq - o.probability) <= 5 * math.sqrt(o.probability * (1 - o.probability) / n) + 1e-12


def test_sampler_matches_model(cloud2):
    sampler = Sampler(cloud2)
    assert sampler.n_types == 3 and sampler.init == (0,)
    assert sampler.sample(2, 0, 0.1) == (0.1, (2, 2))
    assert sampler.sample(2, 0, 0.5) == (0.1, ())
    assert not hasattr(sampler, "model")


def test_step_replaces_chosen_entity(cloud1):
    rec = step(cloud1, (S, T, S), 2, A2, Rng(0))
    assert rec.next_config == (S, S)
    assert rec.cost == 8.0
    assert (rec.entity_index, rec.type, rec.action, rec.offspring) == (2, T, A2, ())
    rec = step(cloud1, (S, T, S), 2, A1, Rng(0))
    assert rec.next_config == (S, S, S, S, S)


def test_step_rejects_bad_input(cloud1):
    with pytest.raises(ValueError):
        step(cloud1, (T,), 2, A1, Rng(0))
    with pytest.raises(ValueError):
        step(cloud1, (T,), 1, 5, Rng(0))
    with pytest.raises(ValueError):
        step(cloud1, (), 1, A1, Rng(0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=6), st.data(), st.integers(0, 2**32))
def test_step_conservation(config, data, seed):
    model = CLOUD1
    idx = data.draw(st.integers(1, len(config)))
    a = data.draw(st.integers(0, 1))
    rec = step(model, config, idx, a, Rng(seed))
    assert len(rec.next_config) == len(config) - 1 + len(rec.offspring)
    assert rec.next_config[:idx - 1] == tuple(config[:idx - 1])
    assert rec.next_config[idx - 1 + len(rec.offspring):] == tuple(config[idx:])


def test_run_episode_examples(cloud1):
    r = run_episode(cloud1, (T,), (A1, A1), 100, Rng(0))
    assert r.total_cost == pytest.approx(5.8)
    assert r.steps == 4 and r.terminated
    r = run_episode(cloud1, (T,), (A2, A1), 100, Rng(0))
    assert (r.total_cost, r.steps, r.terminated) == (8.0, 1, True)
    r = run_episode(cloud1, (), (A1, A1), 100, Rng(0))
    assert (r.total_cost, r.steps, r.terminated) == (0.0, 0, True)


def test_run_episode_truncates(cloud1):
    r = run_episode(cloud1, (T,), (A1, A1), 2, Rng(0))
    assert r.steps == 2 and not r.terminated
    assert r.total_cost == pytest.approx(2.6)


def test_uniform_selection_same_total_for_deterministic_model(cloud1):
    for seed in range(5):
        r = run_episode(cloud1, (T, S, T), (A1, A1), 1000, Rng(seed), select=UNIFORM)
        assert r.total_cost == pytest.approx(5.8 * 2 + 1.6)


def test_trace_format(cloud1):
    r = run_episode(cloud1, (T,), (A1, A1), 100, Rng(0), trace=True)
    lines = format_trace(cloud1, r.trace).splitlines()
    assert lines[0] == "1\t1\tT\ta1\t1.0\t3"
    assert lines[-1] == "4\t1\tS\ta1\t1.6\t0"
    assert len(lines) == r.steps


def test_monte_carlo_unreliable_server(cloud1):
    est = monte_carlo_estimate(cloud1, (T,), (A1, A2), 20_000, rng=Rng(5))
    assert abs(est.mean - 6.0) <= 4 * est.stderr
    assert est.truncated_fraction == 0.0
    assert est.episodes == 20_000


def test_monte_carlo_deterministic_strategy_has_zero_error(cloud1):
    est = monte_carlo_estimate(cloud1, (T,), (A1, A1), 100)
    assert est.stderr == 0.0 and est.mean == pytest.approx(5.8)


def test_monte_carlo_reproducible(cloud2):
    a = monte_carlo_estimate(cloud2, (T,), (0, 1, 0), 2500, rng=Rng(42))
    b = monte_carlo_estimate(cloud2, (T,), (0, 1, 0), 2500, rng=Rng(42))
    c = monte_carlo_estimate(cloud2, (T,), (0, 1, 0), 2500, rng=Rng(43))
    assert a == b
    assert a != c


def test_monte_carlo_truncation_reported(cloud2_p50):
    est = monte_carlo_estimate(cloud2_p50, (2,), (0, 0, 0), 200, max_steps=50, rng=Rng(1))
    assert 0.0 < est.truncated_fraction < 1.0


def test_monte_carlo_rejects_zero_episodes(cloud1):
    with pytest.raises(ValueError):
        monte_carlo_estimate(cloud1, (T,), (A1, A1), 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.data())
def test_monte_carlo_agrees_with_exact(seed, n, data):
    model = gen_random_bmdp(GenParams(seed=seed, n_types=n))
    sigma = tuple(data.draw(st.integers(0, model.n_actions(q) - 1)) for q in range(n))
    exact = evaluate_static_strategy(model, sigma).values[0]
    est = monte_carlo_estimate(model, (0,), sigma, 4000, rng=Rng(seed))
    # Subcritical generated models can still have heavy tails; 5 stderr plus a hair for stderr==0.
    assert abs(est.mean - exact) <= 5 * est.stderr + 1e-9 * exact


def test_rng_streams():
    assert derive_seeds(1, 3) == derive_seeds(1, 3)
    assert len(set(derive_seeds(1, 50))) == 50
    r = Rng(9)
    u = [r.random() for _ in range(10_000)]
    assert all(0.0 <= x < 1.0 for x in u)
    assert Rng(9).uniforms(5).tolist() == Rng(9).uniforms(5).tolist()
    a, b = Rng(9).spawn(2)
    assert a.random() != b.random()
    counts = np.bincount([r.below(3) for _ in range(3000)], minlength=3)
    assert counts.min() > 800


def test_single_type_branching_mean():
    m = build({"Q": {"a": (1.0, [(0.25, ["Q", "Q"]), (0.75, [])])}})
    est = monte_carlo_estimate(m, (0,), (0,), 20_000, rng=Rng(2))
    assert abs(est.mean - 2.0) <= 4 * est.stderr
