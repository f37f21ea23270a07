"""Adaptive control of unknown linear-quadratic mean-field teams.

Simulation of the coupled multi-agent system, its exact Riccati planning
solution, the Thompson-sampling learner that exploits the mean-field /
relative decomposition, a naive joint-system baseline, and a seeded
Monte-Carlo harness that measures regret.
"""

from .errors import ConfigError, NotStabilizable
from .inference import (
    ColumnPosterior,
    Regressor,
    SampleOutcome,
    SelectionScheme,
    sample_truncated,
    select_agent,
)
from .model import (
    DecomposedState,
    GlobalState,
    SystemSpec,
    TypeParams,
    decompose,
    per_step_cost,
    per_step_cost_split,
    step,
)
from .planning import (
    GainPair,
    PlanResult,
    StabilitySet,
    ThetaMF,
    ThetaRel,
    assemble_mf,
    assemble_rel,
    gain_for,
    in_stability_set,
    optimal_avg_cost,
    plan,
    solve_dare,
)
from .tsde import (
    ActorState,
    GainController,
    NaiveTsdeController,
    Policy,
    PriorSpec,
    RunRecord,
    RunResult,
    TsdeMfController,
    advance_episode,
    episode_should_end,
    joint_noise_cov,
    joint_system_matrices,
    run_policy,
)

__version__ = "0.1.0"
