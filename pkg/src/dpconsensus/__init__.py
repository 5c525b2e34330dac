"""Differentially private iterative consensus: simulation and analysis toolkit."""

from .analysis import (
    AccuracyReport,
    ConvergenceEstimate,
    CouplingResult,
    PrivacyReport,
    accuracy_radius,
    build_coupled_noise,
    contraction_check_centralized,
    convergence_estimate,
    epsilon_bound,
    monte_carlo_accuracy,
    potential,
    trace_potentials,
    verify_coupling,
)
from .graph import (
    ConvergenceCheck,
    Graph,
    check_convergence_condition,
    complete_graph,
    eigenvalues_symmetric,
    erdos_renyi,
    laplacian,
    path_graph,
    read_graph,
    ring_graph,
)
from .mechanism import (
    ExecutionTrace,
    MechanismParams,
    Observation,
    RoundRecord,
    default_horizon,
    inject_noise_sequence,
    observe,
    run_execution,
    run_round_centralized,
    run_round_distributed,
    weighted_mean,
)
from .noise import ClientStreams, NoiseSchedule, laplace_pdf, sample_laplace, schedule_scale

__version__ = "0.1.0"
