"""Implicit solver for degenerate nonlinear diffusion.

The package discretizes du/dt = div(D(u) grad u) on uniform Dirichlet
grids in one and two space dimensions, advances it with a fully implicit
step solved by Newton's method, and provides the linear-algebra stack
the Newton systems call for: full GMRES, CG, a Galerkin V-cycle
multigrid (as solver or preconditioner), and a symmetric-part
preconditioner. Analysis helpers verify convergence orders, Jacobian
assembly, and the spectral structure the method's theory predicts.
"""
from .analysis import (
    ConvergenceTable,
    RecordedSystem,
    SigmaMinBound,
    SpectralDiagnostics,
    fd_jacobian,
    fit_iteration_growth,
    fit_order,
    fit_stability_constant,
    grid_error,
    newton_system_chain,
    replay_systems,
    spectral_report,
    verify_sigma_min_bound,
)
from .discretization import (
    AssemblyContext,
    AssemblyError,
    StructuredMatrix,
    antisymmetric_part,
    assemble_jacobian,
    assemble_operator,
    midpoint_coefficients,
    residual,
    symmetric_part,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .linsolve import (
    ConfigurationError,
    KrylovReport,
    LinearOperator,
    MultigridHierarchy,
    NonsymmetricMatrixWarning,
    Preconditioner,
    SmootherConfig,
    assemble_x_part,
    build_hierarchy,
    cg_solve,
    gmres_solve,
    mgm_solve,
    symmetric_part_preconditioner,
    thomas_solve,
    vcycle,
    vcycle_preconditioner,
)
from .newton import (
    IntegrationResult,
    NewtonReport,
    NewtonSolveError,
    SolveStats,
    TimeStepperConfig,
    TimeStepWarning,
    integrate,
    newton_step,
)
from .problem import (
    BarenblattSolution,
    DiffusionLaw,
    PowerLawDiffusion,
    StateVector,
    UniformGrid,
    evaluate_barenblatt,
    sample_on_grid,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyContext",
    "AssemblyError",
    "BarenblattSolution",
    "ConfigurationError",
    "ConvergenceTable",
    "DiffusionLaw",
    "IntegrationResult",
    "KERNEL_BACKEND",
    "KrylovReport",
    "LinearOperator",
    "MultigridHierarchy",
    "NewtonReport",
    "NewtonSolveError",
    "NonsymmetricMatrixWarning",
    "Preconditioner",
    "PowerLawDiffusion",
    "RecordedSystem",
    "SigmaMinBound",
    "SmootherConfig",
    "SolveStats",
    "SpectralDiagnostics",
    "StateVector",
    "StructuredMatrix",
    "TimeStepWarning",
    "TimeStepperConfig",
    "UniformGrid",
    "antisymmetric_part",
    "assemble_jacobian",
    "assemble_operator",
    "assemble_x_part",
    "build_hierarchy",
    "cg_solve",
    "evaluate_barenblatt",
    "fd_jacobian",
    "fit_iteration_growth",
    "fit_order",
    "fit_stability_constant",
    "gmres_solve",
    "grid_error",
    "integrate",
    "mgm_solve",
    "midpoint_coefficients",
    "newton_step",
    "newton_system_chain",
    "replay_systems",
    "residual",
    "sample_on_grid",
    "spectral_report",
    "symmetric_part",
    "symmetric_part_preconditioner",
    "thomas_solve",
    "vcycle",
    "vcycle_preconditioner",
    "verify_sigma_min_bound",
]
