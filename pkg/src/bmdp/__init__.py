"""Branching Markov decision processes: exact optimal costs and model-free Q-learning."""
from .bench import embedded_model
from .generator import GenParams, gen_random_bmdp
from .model import Action, Bmdp, Outcome, QTable, TypeSpec, Violation, config_concat, validate
from .parser import ErrorKind, ParseError, SourceSpan, load_model, parse_model, serialize_model
from .qlearn import (LearnParams, LearnResult, Schedule, apply_q_target, expected_update_trajectory,
                     extract_greedy_strategy, q_update, run_learning, run_random_update)
from .rng import Rng
from .simulator import monte_carlo_estimate, run_episode, sample_offspring, step
from .solver import (CyclicModelError, SolveParams, SolveResult, apply_target, config_value,
                     evaluate_static_strategy, solve_acyclic, value_iterate)

__version__ = "0.1.0"
