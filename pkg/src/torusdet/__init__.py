"""Traces and determinants for l1 lattice matrices, toroidal symbols, and Hill's method."""

from .lattice import (
    InvalidOrderError,
    TruncationWindow,
    bracket,
    enumerate_window,
    forward_difference,
)
from .l1_algebra import (
    DeterminantResult,
    DimensionMismatchError,
    FiniteSection,
    LadderStep,
    NonConvergenceError,
    SparseL1Matrix,
    TailModel,
    TraceResult,
    apply,
    compose,
    determinant_decision,
    finite_determinant,
    finite_trace,
    invertibility_test,
    l1_norm,
    lp_norm,
    poincare_determinant,
    poincare_trace,
    transpose,
    truncate,
)
from .toroidal import (
    AliasingError,
    CoefficientTableSymbol,
    EllipticityReport,
    GridFunction,
    L1MembershipReport,
    MultiplicationSymbol,
    MultiplierSymbol,
    NonSummableSymbolError,
    OrderDiagnostic,
    SymbolSum,
    ToroidalSymbol,
    coeffs_to_grid,
    det_gamma,
    fourier_coeffs,
    fractional_laplacian_symbol,
    gamma_apply,
    l1_membership_check,
    matrix_to_symbol,
    sobolev_norm,
    strong_ellipticity_check,
    symbol_order_diagnostic,
    symbol_to_matrix,
)
from .hill import (
    ExistenceResult,
    HillProblem,
    InfeasibleOrderError,
    NoNullSolutionError,
    SolutionCandidate,
    SpectralScan,
    build_hill_matrix,
    damped_lattice_tail,
    existence_test,
    extract_null_solution,
    hill_determinant,
    spectral_shift_scan,
)

__version__ = "0.1.0"
