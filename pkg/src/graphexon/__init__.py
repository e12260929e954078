"""Margulis expander graphs, their continuum limits, and linear-quadratic
mean-field games coupled through them."""
from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DimensionError,
    DomainError,
    GraphexonError,
    NoRealSolutionError,
    NoStabilizingSolutionError,
    SizeError,
)
from .margulis import AffineGenerator, MargulisGraph, default_generators
from .mfg import (
    REFERENCE_PARAMETERS,
    Coupling,
    MfgParameters,
    classify_coupling,
    closed_loop_rate,
    sare_solution,
    solve_riccati,
    stability_atlas,
)
from .operators import (
    LimitGenerators,
    QuadratureGrid,
    TorusFunction,
    strong_convergence_gap,
    weak_convergence_gap,
)
from .simulation import SimulationConfig, decompose, evolve_mean_field, run_mean_field, simulate_agents
from .spectral import (
    GABBER_GALIL_BOUND,
    KESTEN_RADIUS,
    build_orbit_graph,
    dense_spectrum,
    iterative_norm,
    kazhdan_ratio,
    orbit_spectral_radius,
)

__version__ = "0.1.0"

__all__ = [
    "AffineGenerator",
    "ConfigurationError",
    "ConvergenceError",
    "Coupling",
    "DimensionError",
    "DomainError",
    "GABBER_GALIL_BOUND",
    "GraphexonError",
    "KESTEN_RADIUS",
    "LimitGenerators",
    "MargulisGraph",
    "MfgParameters",
    "NoRealSolutionError",
    "NoStabilizingSolutionError",
    "REFERENCE_PARAMETERS",
    "QuadratureGrid",
    "SimulationConfig",
    "SizeError",
    "TorusFunction",
    "build_orbit_graph",
    "classify_coupling",
    "closed_loop_rate",
    "decompose",
    "default_generators",
    "dense_spectrum",
    "evolve_mean_field",
    "iterative_norm",
    "kazhdan_ratio",
    "orbit_spectral_radius",
    "run_mean_field",
    "sare_solution",
    "simulate_agents",
    "solve_riccati",
    "stability_atlas",
    "strong_convergence_gap",
    "weak_convergence_gap",
]
