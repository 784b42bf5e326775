"""Equilibrium consumption-investment strategies for the time-inconsistent
mean-variance-utility portfolio problem, with Monte Carlo, perturbation
audit and finite-difference verification."""

try:
    from importlib.metadata import version as _version

    __version__ = _version("artifact")
except Exception:  # not installed
    __version__ = "0.0.0"

from .errors import *  # noqa: F401,F403
from .utility import (
    AdmissibilityReport,
    CustomUtility,
    ExponentialUtility,
    LogUtility,
    PowerUtility,
    UtilityModel,
    admissibility_report,
    inverse_marginal,
    marginal,
    utility_eval,
)
from .problem import (
    ConsumptionMode,
    IncomeSchedule,
    MarketParams,
    Policy,
    Preferences,
    ProblemSpec,
    baseline_spec,
    drift_diffusion,
    income_at,
    objective_of_triple,
    validate_spec,
)
from .closed_form import (
    CoefficientTable,
    EquilibriumSolution,
    Sensitivity,
    accumulated_utility,
    build_coefficients,
    consumption_star,
    dollar_amount_star,
    equilibrium_policy,
    investment_star,
    sensitivity_beta,
    solve,
    terminal_mean,
    terminal_second_moment,
    terminal_variance,
    value_function,
)
from .montecarlo import EstimateTriple, PathSample, SimConfig, estimate_objective, simulate_estimates, simulate_paths
from .audit import (
    AuditReport,
    Continuation,
    Perturbation,
    audit_report,
    equilibrium_gap,
    perturbed_objective,
    propagate_moments,
    spliced_policy,
)
from .verify import (
    FDGrid,
    FDResult,
    ResidualCheck,
    ResidualReport,
    fd_solve_pdes,
    foc_residuals,
    hjb_argmin_check,
    hjb_expression,
    ode_residuals,
)
from .config import RunConfig, RunSettings, parse_config, parse_config_text
