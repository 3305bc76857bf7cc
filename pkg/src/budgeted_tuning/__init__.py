"""Budgeted hyper-parameter tuning with a Freeze-Thaw GP belief and value-of-information selection."""
from .baselines import (
    HyperbandSchedule,
    RolloutConfig,
    accumulated_improvement,
    expected_improvement,
    gauss_hermite,
    hyperband_schedule,
    rollout_value,
    run_gp_ei,
    run_hyperband,
    run_random,
    run_rollout,
    sh_schedule,
)
from .bench import (
    ExperimentSpec,
    RunRecord,
    budget_fraction_on_output,
    emit_csv,
    emit_plot,
    hit_rate_at_k,
    read_csv,
    run_experiment,
)
from .curve_env import (
    CurveSet,
    ReplayEnv,
    TuningResult,
    load_curves,
    normalized_regret,
    optimal_loss,
    save_curves,
)
from .gp import BeliefConfig, BeliefState, GaussianScalar, GPHypers, make_belief, slice_sample_hypers
from .policy import DecisionContext, PolicySpec, action_value, q_all, run_tuning, select_bhpt, select_eps
from .synthgen import SynthSpec, sample_curveset

__all__ = [
    "BeliefConfig",
    "BeliefState",
    "CurveSet",
    "DecisionContext",
    "ExperimentSpec",
    "GPHypers",
    "GaussianScalar",
    "HyperbandSchedule",
    "PolicySpec",
    "ReplayEnv",
    "RolloutConfig",
    "RunRecord",
    "SynthSpec",
    "TuningResult",
    "accumulated_improvement",
    "action_value",
    "budget_fraction_on_output",
    "emit_csv",
    "emit_plot",
    "expected_improvement",
    "gauss_hermite",
    "hit_rate_at_k",
    "hyperband_schedule",
    "load_curves",
    "make_belief",
    "normalized_regret",
    "optimal_loss",
    "q_all",
    "read_csv",
    "rollout_value",
    "run_experiment",
    "run_gp_ei",
    "run_hyperband",
    "run_random",
    "run_rollout",
    "run_tuning",
    "sample_curveset",
    "save_curves",
    "select_bhpt",
    "select_eps",
    "sh_schedule",
    "slice_sample_hypers",
]

__version__ = "0.1.0"
