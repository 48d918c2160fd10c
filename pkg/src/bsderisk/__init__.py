"""Monte Carlo engine for dynamic convex risk measures driven by
quadratic-exponential backward equations on jump-diffusion paths."""

__version__ = "0.1.0"

from .errors import (
    BsdeRiskError,
    ConfigParseError,
    ConfigValidationError,
    EstimatorFailure,
    RootFailure,
    SignedDensityFailure,
    SolverFailure,
    UnsupportedPayoff,
)
from .market import (
    AffinePayoff,
    ClippedPayoff,
    ExpAffinePayoff,
    JumpMark,
    LevyModel,
    PathBundle,
    Payoff,
    PolynomialPayoff,
    PortfolioPayoff,
    TimeGrid,
    build_grid,
    simulate_paths,
    terminal_values,
)
from .drivers import (
    Driver,
    LinearForm,
    SampleBox,
    check_growth_bound,
    check_local_lipschitz,
    check_positive_homogeneity,
    make_entropic_driver,
    make_qexp_driver,
    make_sublinear_driver,
)
from .bsde import (
    BsdeSolution,
    RegressionConfig,
    condexp_at_node,
    regress_condexp,
    residual_replay,
    solve_bsde,
)
from .measure import (
    RNProcess,
    doleans_dade,
    girsanov_shift_check,
    kazamaki_check,
    martingale_diagnostic,
    reweighted_expectation,
    weighted_condexp,
)
from .risk import (
    RiskEngine,
    axiom_suite,
    dynamic_risk,
    entropic_closed_form,
    entropic_coherent_static,
    risk_solution,
)
from .allocation import (
    AllocationReport,
    aumann_shapley,
    build_allocation_report,
    coherent_representation,
    convex_representation,
    full_allocation_check,
    gradient_fd,
    gradient_measure,
)
from .malliavin import (
    clark_ocone,
    entropic_controls,
    gamma_exponential_check,
    malliavin_derivative,
)
from .reporting import Row, RunReport, emit_report, read_report
from .scenario import ScenarioConfig, apply_overrides, build_scenario, load_config, run_scenario

__all__ = [
    "__version__",
    "BsdeRiskError",
    "ConfigParseError",
    "ConfigValidationError",
    "EstimatorFailure",
    "RootFailure",
    "SignedDensityFailure",
    "SolverFailure",
    "UnsupportedPayoff",
    "AffinePayoff",
    "ClippedPayoff",
    "ExpAffinePayoff",
    "JumpMark",
    "LevyModel",
    "PathBundle",
    "Payoff",
    "PolynomialPayoff",
    "PortfolioPayoff",
    "TimeGrid",
    "build_grid",
    "simulate_paths",
    "terminal_values",
    "Driver",
    "LinearForm",
    "SampleBox",
    "check_growth_bound",
    "check_local_lipschitz",
    "check_positive_homogeneity",
    "make_entropic_driver",
    "make_qexp_driver",
    "make_sublinear_driver",
    "BsdeSolution",
    "RegressionConfig",
    "condexp_at_node",
    "regress_condexp",
    "residual_replay",
    "solve_bsde",
    "RNProcess",
    "doleans_dade",
    "girsanov_shift_check",
    "kazamaki_check",
    "martingale_diagnostic",
    "reweighted_expectation",
    "weighted_condexp",
    "RiskEngine",
    "axiom_suite",
    "dynamic_risk",
    "entropic_closed_form",
    "entropic_coherent_static",
    "risk_solution",
    "AllocationReport",
    "aumann_shapley",
    "build_allocation_report",
    "coherent_representation",
    "convex_representation",
    "full_allocation_check",
    "gradient_fd",
    "gradient_measure",
    "clark_ocone",
    "entropic_controls",
    "gamma_exponential_check",
    "malliavin_derivative",
    "Row",
    "RunReport",
    "emit_report",
    "read_report",
    "ScenarioConfig",
    "apply_overrides",
    "build_scenario",
    "load_config",
    "run_scenario",
]
