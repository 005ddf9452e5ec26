"""Experiments, the model-driven simulator and theory checks."""
from .experiments import (
    CoverageRow,
    RegretCurve,
    run_coverage_experiment,
    run_episode,
    run_regret_experiment,
    write_coverage_csv,
    write_regret_csv,
)
from .simulator import SimulatedEnvironment, check_sim_to_real, run_simulated_episode, simulator_penalty
from .theory import (
    CheckResult,
    check_loss_kl_identity,
    check_optimum_gap,
    check_prob_matching,
    check_prop1_bound,
    run_lower_bound_instance,
    ts_regret_bound,
)
