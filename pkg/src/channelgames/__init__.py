"""Equilibria, Pareto frontiers and uplink/downlink duality for Gaussian
channel power-allocation games.

The package models the downlink (one transmitter, K receivers, precoding
with interference pre-cancellation) and the sum-power uplink (K
transmitters, successive cancellation) as K-player games whose strategies
are transmit covariance matrices coupled by one shared power budget. It
computes and certifies normalized equilibria, probes their uniqueness,
maps between equilibrium weights and Pareto scalarization weights, runs
penalty-priced decoupled dynamics, and converts covariance profiles
between the two channel types while preserving every user's rate and the
total power.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .channel import (
    BCChannel,
    ChannelFormatError,
    ColoredNoise,
    IndividualPowers,
    MACChannel,
    OrderSpec,
    SumPower,
    ValidationReport,
    WhiteNoise,
    channel_from_dict,
    channel_to_dict,
    is_aligned_degraded,
    load_channel,
    to_white_noise,
    validate,
)
from .conic import FeasibleSet, min_eigenvalue, project
from .duality import (
    DualityReport,
    ScalingWeights,
    TransformError,
    bc_to_mac,
    mac_to_bc,
    verify_individual_powers,
    verify_scaled_budgets,
)
from .pareto import (
    ParetoWeights,
    WeightMapResult,
    frontier_sweep,
    pareto_kkt_residuals,
    pareto_solve,
    simplex_grid,
    sweep_to_csv,
    two_user_closed_form,
    weight_map_gamma_to_r,
    weight_map_r_to_gamma,
)
from .penalty import PenaltyConfig, PenaltyRunResult, penalty_value, run_penalty_game
from .rates import (
    BroadcastGame,
    CovarianceProfile,
    MultipleAccessGame,
    RateTuple,
    bc_dpc_rates,
    cross_gradient,
    mac_sic_rates,
    own_gradient,
)
from .solver import (
    ConvergenceError,
    EquilibriumCertificate,
    NoEWeights,
    SolveOptions,
    best_response,
    certify,
    induced_weights,
    initial_profile,
    solve_noe,
    weighted_utility,
)
from .uniqueness import (
    DSCReport,
    dsc_gap,
    pseudo_gradient,
    sample_dsc,
    trace_inequality,
    trace_inequality_tight2,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "__version__",
    # channel
    "BCChannel",
    "MACChannel",
    "WhiteNoise",
    "ColoredNoise",
    "SumPower",
    "IndividualPowers",
    "OrderSpec",
    "ValidationReport",
    "ChannelFormatError",
    "validate",
    "to_white_noise",
    "is_aligned_degraded",
    "channel_from_dict",
    "channel_to_dict",
    "load_channel",
    # conic
    "FeasibleSet",
    "project",
    "min_eigenvalue",
    # rates
    "CovarianceProfile",
    "RateTuple",
    "BroadcastGame",
    "MultipleAccessGame",
    "bc_dpc_rates",
    "mac_sic_rates",
    "own_gradient",
    "cross_gradient",
    # solver
    "NoEWeights",
    "SolveOptions",
    "EquilibriumCertificate",
    "ConvergenceError",
    "weighted_utility",
    "best_response",
    "solve_noe",
    "certify",
    "induced_weights",
    "initial_profile",
    # uniqueness
    "DSCReport",
    "pseudo_gradient",
    "dsc_gap",
    "sample_dsc",
    "trace_inequality",
    "trace_inequality_tight2",
    # pareto
    "ParetoWeights",
    "WeightMapResult",
    "pareto_solve",
    "frontier_sweep",
    "sweep_to_csv",
    "simplex_grid",
    "weight_map_gamma_to_r",
    "weight_map_r_to_gamma",
    "two_user_closed_form",
    "pareto_kkt_residuals",
    # duality
    "ScalingWeights",
    "DualityReport",
    "TransformError",
    "mac_to_bc",
    "bc_to_mac",
    "verify_individual_powers",
    "verify_scaled_budgets",
    # penalty
    "PenaltyConfig",
    "PenaltyRunResult",
    "penalty_value",
    "run_penalty_game",
]
