"""loopsim: coupled dynamical systems for recommender, viewer and creator feedback loops.

A run couples one recommender with any number of users. Every tick the
recommender reads the users' previous outputs, emits recommendations, and each
user reacts to its slice of them, updating its hidden state. All randomness
comes from a counter-based stream keyed by (seed, entity, tick), so runs are
reproducible bit for bit.

>>> from loopsim import Scenario, simulate
>>> from loopsim.policies import FixedPolicy
>>> from loopsim.viewer_models import Boredom
>>> traj = simulate(Scenario.build(FixedPolicy([1.0]), [Boredom()], horizon=40))
>>> round(float(traj.final_states[traj.entities[1]].vec[0]), 6)
2.0
"""

from .config import ScenarioConfig, SweepSpec, load_scenario, parse_scenario
from .creator_games import (
    ActionSpace,
    CreatorGame,
    MatrixGame,
    assign_recommendations,
    best_response,
    best_response_dynamics,
    creator_utility,
    enumerate_pure_nash,
    verify_pure_nash,
)
from .engine import (
    RECOMMENDER,
    EntityId,
    EntityState,
    InteractionModel,
    Noise,
    Record,
    RngStream,
    Scenario,
    Trajectory,
    detect_fixed_point,
    simulate,
    step_coupled,
)
from .errors import BudgetExceededError, ConfigurationError, DegenerateUpdateError, LoopsimError, NumericError

__version__ = "0.1.0"

__all__ = [
    "RECOMMENDER",
    "ActionSpace",
    "BudgetExceededError",
    "ConfigurationError",
    "CreatorGame",
    "DegenerateUpdateError",
    "EntityId",
    "EntityState",
    "InteractionModel",
    "LoopsimError",
    "MatrixGame",
    "Noise",
    "NumericError",
    "Record",
    "RngStream",
    "Scenario",
    "ScenarioConfig",
    "SweepSpec",
    "Trajectory",
    "assign_recommendations",
    "best_response",
    "best_response_dynamics",
    "creator_utility",
    "detect_fixed_point",
    "enumerate_pure_nash",
    "load_scenario",
    "parse_scenario",
    "simulate",
    "step_coupled",
    "verify_pure_nash",
]
