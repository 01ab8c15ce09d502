"""Energy-stable finite differences for 1-D hyperbolic initial boundary value
problems, plus tooling to measure how uncertain data (forcing, boundary data,
initial data) propagates into the solution over short and long times.

The package is organised bottom-up:

- :mod:`ibvplab.sbp` -- summation-by-parts derivative operators and the
  diagonal quadrature norms they induce.
- :mod:`ibvplab.systems` -- symmetric hyperbolic model systems in split form
  and the characteristic decomposition of their boundary terms.
- :mod:`ibvplab.solver` -- semi-discrete assembly with weak (penalty)
  boundary conditions and an explicit RK4 time stepper.
- :mod:`ibvplab.deviations` -- paired perturbed/unperturbed runs, deviation
  norms, damping-rate estimates, a-priori bounds and growth-rate fits.
- :mod:`ibvplab.experiments` -- config-driven experiment suites.
- :mod:`ibvplab.cli` -- command line front end.
"""

from ibvplab._version import __version__
from ibvplab.sbp import (
    Grid1D,
    SbpOperatorSet,
    build_sbp_operator,
    polynomial_exactness_report,
    quad_inner_product,
)
from ibvplab.systems import (
    BoundaryCondition,
    BoundaryEigenstructure,
    DataBundle,
    SystemSpec,
    boundary_eigenstructure,
    boundary_term_split,
    count_required_bcs,
    make_advection,
    make_burgers_split,
    make_wave_system,
    matched_boundary_data,
    system_from_label,
    verify_dissipativity,
)
from ibvplab.solver import (
    AdmissibilityError,
    SemiDiscreteProblem,
    SolverBlowupError,
    Trajectory,
    assemble_rhs,
    energy_rate_identity,
    make_problem,
    norm_history,
    rk4_solve,
)
from ibvplab.deviations import (
    BoundReport,
    CauchySchwarzCertificate,
    DampingEstimate,
    DeviationSeries,
    LongtimeVerdict,
    PerturbationSpec,
    RateFit,
    bound_rhs_boundary,
    bound_rhs_forcing,
    bound_rhs_initial,
    cauchy_schwarz_check,
    classify_longtime,
    constant_perturbation,
    deviation_series,
    estimate_delta0,
    eta_series,
    fit_short_time_rate,
    run_perturbation_pair,
    theta_integral,
    verify_bound,
    write_series_csv,
)
from ibvplab.experiments import (
    ConfigError,
    ExperimentConfig,
    SuiteReport,
    convergence_study,
    emit_plotdata,
    parse_config,
    run_suite,
    smooth_switch_on,
)

__all__ = [
    "Grid1D",
    "SbpOperatorSet",
    "build_sbp_operator",
    "quad_inner_product",
    "polynomial_exactness_report",
    "SystemSpec",
    "BoundaryCondition",
    "BoundaryEigenstructure",
    "DataBundle",
    "make_advection",
    "make_wave_system",
    "make_burgers_split",
    "boundary_eigenstructure",
    "count_required_bcs",
    "boundary_term_split",
    "verify_dissipativity",
    "SemiDiscreteProblem",
    "Trajectory",
    "SolverBlowupError",
    "AdmissibilityError",
    "make_problem",
    "assemble_rhs",
    "rk4_solve",
    "energy_rate_identity",
    "norm_history",
    "constant_perturbation",
    "PerturbationSpec",
    "DeviationSeries",
    "DampingEstimate",
    "BoundReport",
    "RateFit",
    "run_perturbation_pair",
    "deviation_series",
    "estimate_delta0",
    "bound_rhs_forcing",
    "bound_rhs_boundary",
    "bound_rhs_initial",
    "verify_bound",
    "fit_short_time_rate",
    "classify_longtime",
    "cauchy_schwarz_check",
    "eta_series",
    "theta_integral",
    "write_series_csv",
    "LongtimeVerdict",
    "CauchySchwarzCertificate",
    "ConfigError",
    "ExperimentConfig",
    "SuiteReport",
    "parse_config",
    "run_suite",
    "convergence_study",
    "emit_plotdata",
    "smooth_switch_on",
    "matched_boundary_data",
    "system_from_label",
    "__version__",
]
