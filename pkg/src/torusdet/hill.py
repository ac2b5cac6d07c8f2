"""Hill's determinant method for (-Delta)^{nu/2} u + Q u = 0 on the torus.

Inserting the Fourier series of Q and u into the equation gives the
coefficient system

    (2pi)^nu |k|^nu b_k + sum_m g_{k-m} b_m = 0        for every k in Z^n,

where g are the Fourier coefficients of Q.  Dividing row k by the damping
weight d(k) = (2pi)^nu |k|^nu + 1 turns this into (I + B) b = 0 with

    B[k, m] = (g_{k-m} - delta_{km}) / d(k);

the -delta_{km} keeps the two systems equivalent, since
(2pi)^nu |k|^nu = d(k) - 1.  For nu > n the damping makes B summable
(sum_k 1/d(k) < infinity), so the extended determinant of I + B is defined
and vanishes exactly when the equation has a nontrivial periodic solution.
Multiplying a null vector of I + B back by d(k) recovers a solution of the
undamped system, and conversely.

Note the equivalence is exact including the k = 0 mode: for Q = 0 the
constants solve the equation and correspondingly the k = 0 column of I + B
vanishes, so the determinant is zero.

The spectral shift scan replaces g_0 by g_0 + lambda and locates determinant
roots in lambda; a root lambda* certifies that -lambda* is an approximate
eigenvalue of (-Delta)^{nu/2} + Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import TruncationWindow, as_index, euclid_norm_array, sup_norm_array
from .l1_algebra import (
    DeterminantResult,
    NonConvergenceError,
    SparseL1Matrix,
    TailModel,
    determinant_decision,
    poincare_determinant,
    truncate,
)

_ENTRY_BUDGET = 4_000_000  # cap on stored entries for auto coverage windows


class InfeasibleOrderError(ValueError):
    """The order nu does not exceed the dimension; the damping is not l1."""


class NoNullSolutionError(RuntimeError):
    """No near-null vector below the singular value threshold."""

    def __init__(self, message, singular_value):
        super().__init__(message)
        self.singular_value = singular_value


@dataclass(frozen=True)
class HillProblem:
    """Equation data: dimension n, order nu > n, potential coefficients g."""

    dimension: int
    nu: float
    potential: dict

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not self.nu > self.dimension:
            raise InfeasibleOrderError(
                f"nu must exceed the dimension: nu={self.nu}, n={self.dimension}"
            )
        clean = {}
        for k, v in self.potential.items():
            v = complex(v)
            if v != 0:
                clean[as_index(k, self.dimension)] = v
        object.__setattr__(self, "potential", clean)

    def potential_l1(self):
        return float(sum(abs(v) for v in self.potential.values()))

    def shifted(self, lam):
        """The problem for Q + lam (g_0 replaced by g_0 + lam)."""
        zero = (0,) * self.dimension
        g = dict(self.potential)
        g[zero] = g.get(zero, 0.0) + lam
        return HillProblem(self.dimension, self.nu, g)

    def damped_coeffs(self):
        """Offsets and values of g - delta_0 (the damped numerators)."""
        zero = (0,) * self.dimension
        g = dict(self.potential)
        g[zero] = g.get(zero, 0.0) - 1.0
        return {l: v for l, v in g.items() if v != 0}


def damping(coords, nu):
    """Damping weights d(k) = (2pi)^nu |k|^nu + 1, vectorized."""
    return (2.0 * np.pi * euclid_norm_array(coords)) ** nu + 1.0


def damped_lattice_tail(radius, dimension, nu):
    """Rigorous upper bound on sum_{|k|_inf > radius} 1/d(k).

    Exact sup-norm shell counts for 1024 shells, then integral comparison;
    each point with |k|_inf = j has 1/d(k) <= (2pi)^{-nu} j^{-nu}.
    """
    if not nu > dimension:
        raise InfeasibleOrderError(f"tail diverges for nu={nu} <= n={dimension}")
    j0 = int(radius) + 1
    j1 = j0 + 1024
    js = np.arange(j0, j1, dtype=np.float64)
    counts = (2 * js + 1) ** dimension - (2 * js - 1) ** dimension
    head = float(np.sum(counts / ((2.0 * np.pi * js) ** nu + 1.0)))
    c = 2 * dimension * 3 ** (dimension - 1) * (2.0 * np.pi) ** (-nu)
    p = dimension - 1 - nu
    tail = c * (j1 - 1) ** (p + 1) / (-(p + 1))
    return head + tail


def build_hill_matrix(p: HillProblem, w: TruncationWindow):
    """Damped coefficient matrix B[k, m] = (g_{k-m} - delta_{km}) / d(k).

    Entries are stored for k, m in the window; the tail model bounds the
    remaining mass by ||g - delta||_1 times damped lattice tails (union bound
    over row-outside and column-outside index pairs).
    """
    if w.dimension != p.dimension:
        raise ValueError(f"dimension {p.dimension} vs window {w.dimension}")
    coeffs = p.damped_coeffs()
    ks = w.coords_array()
    weights = damping(ks, p.nu)
    rows_out, cols_out, vals_out = [], [], []
    for l, v in coeffs.items():
        cols = ks - np.asarray(l, dtype=np.int64)
        keep = sup_norm_array(cols) <= w.radius
        if np.any(keep):
            rows_out.append(ks[keep])
            cols_out.append(cols[keep])
            vals_out.append(v / weights[keep])
    if vals_out:
        matrix = SparseL1Matrix.from_arrays(
            p.dimension,
            np.concatenate(rows_out),
            np.concatenate(cols_out),
            np.concatenate(vals_out),
        )
    else:
        matrix = SparseL1Matrix.zero(p.dimension)

    mass = float(sum(abs(v) for v in coeffs.values()))
    reach = max((max(abs(c) for c in l) for l in coeffs), default=0)

    def bound(radius, _m=mass, _r=reach, _n=p.dimension, _nu=p.nu):
        if _m == 0.0:
            return 0.0
        return _m * (
            damped_lattice_tail(radius, _n, _nu)
            + damped_lattice_tail(max(radius - _r, 0), _n, _nu)
        )

    return matrix, TailModel.user_bound(bound)


def _auto_coverage(p: HillProblem, tol, max_radius):
    """Coverage radius for which the tail bound stays well under tol."""
    coeffs = p.damped_coeffs()
    mass = float(sum(abs(v) for v in coeffs.values()))
    n, nu = p.dimension, p.nu
    offsets = max(len(coeffs), 1)
    cap = int((_ENTRY_BUDGET / offsets) ** (1.0 / n)) // 2
    if mass == 0.0:
        return max(4 * max_radius, 64)
    budget = tol / 16.0
    c = 2 * mass * 2 * n * 3 ** (n - 1) * (2.0 * np.pi) ** (-nu) / (nu - n)
    k = (c / budget) ** (1.0 / (nu - n))
    return int(min(max(k, 4 * max_radius, 64), max(cap, 4 * max_radius)))


def hill_determinant(p: HillProblem, tol, max_radius=64, coverage_radius=None):
    """Extended determinant of I + B with a tail model from the g-decay.

    The matrix is materialized on a coverage window wide enough that the
    unstored remainder does not dominate the certified error at ``tol``
    (subject to an entry budget), then handed to the window-ladder
    determinant.
    """
    if coverage_radius is None:
        coverage_radius = _auto_coverage(p, tol, max_radius)
    matrix, tail = build_hill_matrix(
        p, TruncationWindow(int(coverage_radius), p.dimension)
    )
    return poincare_determinant(matrix, tail, tol, max_radius=max_radius)


@dataclass
class ExistenceResult:
    decision: str  # nontrivial-solution | only-trivial | undecided
    determinant: DeterminantResult
    kernel_certified: bool = False


def _best_determinant(p, tol, max_radius, coverage_radius=None):
    try:
        return hill_determinant(
            p, tol, max_radius=max_radius, coverage_radius=coverage_radius
        )
    except NonConvergenceError as err:
        return DeterminantResult(
            value=err.last_value,
            ladder=err.ladder,
            certified_error=err.last_bound,
            converged=False,
        )


def existence_test(p: HillProblem, tol=1e-8, max_radius=64, coverage_radius=None):
    """Decide existence of nontrivial periodic solutions.

    Maps the three-valued determinant test: a certified nonzero determinant means
    only the trivial solution, a certified zero means a nontrivial solution
    exists.  When the determinant alone stays undecided, a finitely supported
    candidate null vector from the window SVD is checked against every row of
    the infinite matrix it touches (exactly computable because g has finite
    support); a vanishing residual certifies singularity.
    """
    if coverage_radius is None:
        coverage_radius = max(4 * max_radius, 1024)
    det = _best_determinant(p, tol, max_radius, coverage_radius=coverage_radius)
    decision = determinant_decision(det, tol)
    if decision == "invertible":
        return ExistenceResult("only-trivial", det)
    if decision == "singular":
        return ExistenceResult("nontrivial-solution", det)
    if _exact_kernel_vector(p, max_radius) is not None:
        return ExistenceResult("nontrivial-solution", det, kernel_certified=True)
    return ExistenceResult("undecided", det)


def _dense_section(p: HillProblem, radius):
    w = TruncationWindow(radius, p.dimension)
    matrix, tail = build_hill_matrix(p, w)
    section, _ = truncate(matrix, TailModel.exact_finite(), w)
    return w, np.eye(w.size) + section.matrix


def _full_residual(p: HillProblem, w: TruncationWindow, b_vec):
    """(I + B) b over every row the window-supported b touches, undamped-free.

    Rows inside the window use the dense section; rows outside receive only
    the g-convolution term, computed exactly from the finite potential.
    """
    coeffs = p.damped_coeffs()
    pts = w.coords_array()
    _, dense = _dense_section(p, w.radius)
    inside = dense @ b_vec
    outside = {}
    for l, v in coeffs.items():
        rows = pts + np.asarray(l, dtype=np.int64)
        out = sup_norm_array(rows) > w.radius
        if not np.any(out):
            continue
        weights = damping(rows[out], p.nu)
        for r, d, bv in zip(rows[out], weights, b_vec[out]):
            key = tuple(int(c) for c in r)
            outside[key] = outside.get(key, 0.0) + v * bv / d
    out_sq = sum(abs(v) ** 2 for v in outside.values())
    return math.sqrt(float(np.sum(np.abs(inside) ** 2)) + out_sq)


def _exact_kernel_vector(p: HillProblem, radius):
    """Window null vector that annihilates the infinite matrix, or None."""
    w, dense = _dense_section(p, radius)
    _, svals, vh = np.linalg.svd(dense)
    if svals[-1] > 1e-10 * max(svals[0], 1.0):
        return None
    b_vec = np.conj(vh[-1])
    residual = _full_residual(p, w, b_vec)
    if residual <= 1e-13 * (1.0 + p.potential_l1() + 1.0):
        return w, b_vec
    return None


@dataclass
class SolutionCandidate:
    """Normalized Fourier coefficients of a reconstructed null solution."""

    coefficients: dict
    residual: float  # l2 norm of the undamped coefficient equation over the window
    regularity_mass: float  # sum over the window of |k|^nu |b_k|
    regularity_bound: float  # (2pi)^{-nu} ||b||_1 ||g||_1, the a-posteriori bound
    window: TruncationWindow
    singular_value: float


def extract_null_solution(p: HillProblem, w: TruncationWindow, threshold=1e-6):
    """Reconstruct a null solution from the smallest singular vector.

    SVD of the dense section of I + B on the window; the right singular
    vector of the smallest singular value is the candidate (robust under the
    +-k degeneracies of even problems).  The residual reports the undamped
    coefficient equation: each damped row is multiplied back by d(k).
    """
    if w.dimension != p.dimension:
        raise ValueError(f"dimension {p.dimension} vs window {w.dimension}")
    _, dense = _dense_section(p, w.radius)
    _, svals, vh = np.linalg.svd(dense)
    smallest = float(svals[-1])
    if smallest > threshold:
        raise NoNullSolutionError(
            f"smallest singular value {smallest:.3e} exceeds threshold "
            f"{threshold:.3e}; no null solution on this window",
            singular_value=smallest,
        )
    b_vec = np.conj(vh[-1])
    b_vec = b_vec / np.linalg.norm(b_vec)
    pts = w.coords_array()
    weights = damping(pts, p.nu)
    residual = float(np.linalg.norm((dense @ b_vec) * weights))
    norms = euclid_norm_array(pts)
    regularity_mass = float(np.sum(norms**p.nu * np.abs(b_vec)))
    g_mass = p.potential_l1()
    b_mass = float(np.sum(np.abs(b_vec)))
    bound = (2.0 * np.pi) ** (-p.nu) * b_mass * g_mass
    coeffs = {
        tuple(int(c) for c in pts[i]): complex(b_vec[i])
        for i in range(len(pts))
        if b_vec[i] != 0
    }
    return SolutionCandidate(
        coefficients=coeffs,
        residual=residual,
        regularity_mass=regularity_mass,
        regularity_bound=bound,
        window=w,
        singular_value=smallest,
    )


@dataclass
class ScanFailure:
    lo: float
    hi: float
    reason: str


@dataclass
class SpectralScan:
    lambdas: list
    values: list  # determinant at each grid shift, section radius fixed
    certified: list  # best certified bound per grid point
    brackets: list  # (lambda_lo, lambda_hi) candidate root intervals
    roots: list  # (lambda_star, |det(lambda_star)|) refined and accepted
    failures: list = field(default_factory=list)


def _scan_value(p, lam, radius, coverage):
    """Raw determinant of the shifted problem at the fixed section radius.

    Requests an unreachable tolerance so the ladder always runs to the same
    final radius (values stay comparable across shifts), then reads the raw
    value carried by the convergence failure.  Tail corrections are skipped:
    only the raw section ladder is wanted here.
    """
    matrix, tail = build_hill_matrix(
        p.shifted(lam), TruncationWindow(coverage, p.dimension)
    )
    try:
        res = poincare_determinant(
            matrix, tail, tol=1e-300, max_radius=radius, corrections=False
        )
        return res.ladder[-1].value, res.certified_error
    except NonConvergenceError as err:
        return err.ladder[-1].value, err.last_bound


def _bisect(fn, lo, hi, flo, fhi, tol, max_iter=60):
    for _ in range(max_iter):
        if hi - lo <= tol:
            return 0.5 * (lo + hi), True
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0:
            return mid, True
        if (flo < 0) != (fm < 0):
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi), hi - lo <= tol


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fn, lo, hi, tol, max_iter=60):
    a, b = lo, hi
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = fn(d)
    mid = 0.5 * (a + b)
    return mid, b - a <= tol


def spectral_shift_scan(p: HillProblem, lambdas, tol, radius=32, coverage_radius=None):
    """Locate determinant roots of the shifted family Q + lambda.

    Every grid point is evaluated at the same section radius so values are
    comparable across shifts.  Sign changes of the real part are refined by
    bisection; strict local minima of the magnitude (even-order roots, e.g.
    the +-k degenerate shifts of diagonal problems) by golden-section search.
    A refined root lambda* is reported only when |det(lambda*)| <
    max(tol, 10 x certified error there); it certifies -lambda* as an
    approximate eigenvalue of the operator.
    """
    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ValueError("scan grid is empty")
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("scan grid must be strictly increasing")
    if coverage_radius is None:
        coverage_radius = max(8 * radius, 1024)

    evaluations = {}

    def value_at(lam):
        if lam not in evaluations:
            evaluations[lam] = _scan_value(p, lam, radius, coverage_radius)
        return evaluations[lam][0]

    values = [value_at(lam) for lam in lambdas]
    certified = [evaluations[lam][1] for lam in lambdas]

    brackets = []
    kinds = []
    re_vals = np.real(np.asarray(values))
    abs_vals = np.abs(np.asarray(values))
    for i in range(len(lambdas)):
        if re_vals[i] == 0.0 and abs_vals[i] == 0.0:
            brackets.append((lambdas[i], lambdas[i]))
            kinds.append("exact")
    for i in range(len(lambdas) - 1):
        if re_vals[i] == 0.0 or re_vals[i + 1] == 0.0:
            continue
        if (re_vals[i] < 0) != (re_vals[i + 1] < 0):
            brackets.append((lambdas[i], lambdas[i + 1]))
            kinds.append("sign")
    for i in range(1, len(lambdas) - 1):
        if abs_vals[i] < abs_vals[i - 1] and abs_vals[i] < abs_vals[i + 1]:
            covered = any(
                lo <= lambdas[i] <= hi
                for (lo, hi), kd in zip(brackets, kinds)
                if kd == "sign"
            )
            if not covered:
                brackets.append((lambdas[i - 1], lambdas[i + 1]))
                kinds.append("dip")

    def refine_sign(lo, hi):
        return _bisect(
            lambda lam: float(np.real(value_at(lam))),
            lo,
            hi,
            float(np.real(value_at(lo))),
            float(np.real(value_at(hi))),
            tol,
        )

    roots = []
    failures = []
    for (lo, hi), kind in zip(brackets, kinds):
        candidates = []
        if kind == "exact":
            candidates.append((lo, True))
        elif kind == "sign":
            candidates.append(refine_sign(lo, hi))
        else:
            # a dip can hide an even-order root or a pair of close simple
            # roots; a fine subgrid separates the cases
            sub = np.linspace(lo, hi, 65)
            sub_re = [float(np.real(value_at(float(x)))) for x in sub]
            found_pair = False
            for a, b, fa, fb in zip(sub[:-1], sub[1:], sub_re[:-1], sub_re[1:]):
                if fa == 0.0:
                    candidates.append((float(a), True))
                    found_pair = True
                elif (fa < 0) != (fb < 0):
                    candidates.append(refine_sign(float(a), float(b)))
                    found_pair = True
            if not found_pair:
                candidates.append(
                    _golden_min(lambda lam: float(abs(value_at(lam))), lo, hi, tol)
                )
        for star, ok in candidates:
            if not ok:
                failures.append(
                    ScanFailure(lo, hi, f"{kind} refinement did not reach width {tol}")
                )
                continue
            val = value_at(star)
            cert = evaluations[star][1]
            if abs(val) < max(tol, 10.0 * cert):
                roots.append((star, float(abs(val))))

    # merge refinements that landed on the same root
    roots.sort()
    merged = []
    for lam, mag in roots:
        if merged and abs(lam - merged[-1][0]) <= 4.0 * tol:
            if mag < merged[-1][1]:
                merged[-1] = (lam, mag)
        else:
            merged.append((lam, mag))
    return SpectralScan(
        lambdas=lambdas,
        values=values,
        certified=certified,
        brackets=brackets,
        roots=merged,
        failures=failures,
    )
