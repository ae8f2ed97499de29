"""
This module builds the finite-difference semi-discretization
v' = A_n v + B_n f of the parabolic problem, together with the grid
restriction/extension operators, the discrete L2 norm, steady states and the
diagonal symmetrizer of A_n.
"""

import logging
from functools import cached_property

import numpy as np
from scipy import linalg

from .constants import (DENOMINATOR_THRESHOLD, GROWTH_MARGIN, MIN_ORDER,
                        PIVOT_THRESHOLD)
from .errors import (DegenerateDiscretizationError, OffDiagonalSignError,
                     SingularSystemError, ValidationError)

log = logging.getLogger(__name__)


def grid_points(n):
    """The nodes jh, j=1..n, with h=1/(n+1)"""
    return np.arange(1, n + 1) / (n + 1)


class GridVector:
    """Samples at the nodes jh, j=1..n"""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 1:
            raise ValidationError("discretize", "grid vectors are one-dimensional")

    @property
    def n(self):
        return len(self.values)

    @property
    def h(self):
        return 1.0 / (self.n + 1)

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __getitem__(self, index):
        return self.values[index]


class StepFunction:
    """[S_n v](x) = v_j for (j-1)h < x <= jh, v_1 at x=0, zero on (nh, 1]"""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.n = len(self.values)
        self.h = 1.0 / (self.n + 1)
        self.edges = grid_points(self.n)

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(self.edges, x, side="left")
        padded = np.append(self.values, 0.0)
        out = padded[np.minimum(idx, self.n)]
        return float(out[0]) if scalar else out

    def l2_norm(self):
        widths = np.diff(np.concatenate([[0.0], self.edges]))
        return float(np.sqrt(np.sum(widths * self.values ** 2)))


class SemiDiscreteSystem:
    """
    Tridiagonal A_n (sub, main, sup diagonals) and B_n = e_n b_n/h^2 of the
    n-th order semi-discretization, with the boundary-stencil constants.
    """

    def __init__(self, n, h, sub, main, sup, r0, r1, q0, b_n, theta_grid, sigma_grid,
                 lambda_grid, alpha0, beta0, alpha1, beta1):
        self.n = n
        self.h = h
        self.sub = sub
        self.main = main
        self.sup = sup
        self.r0 = r0
        self.r1 = r1
        self.q0 = q0
        self.b_n = b_n
        self.theta_grid = theta_grid
        self.sigma_grid = sigma_grid
        self.lambda_grid = lambda_grid
        self.alpha0 = alpha0
        self.beta0 = beta0
        self.alpha1 = alpha1
        self.beta1 = beta1

    @property
    def B(self):
        b = np.zeros(self.n)
        b[-1] = self.b_n / self.h ** 2
        return b

    @property
    def flat_scale(self):
        """alpha0 - q0 beta0, the factor between v_1 and the flat output"""
        return self.alpha0 - self.q0 * self.beta0

    def matvec(self, v):
        """A_n v for v of shape (..., n)"""
        v = np.asarray(v, dtype=float)
        out = self.main * v
        out[..., :-1] += self.sup * v[..., 1:]
        out[..., 1:] += self.sub * v[..., :-1]
        return out

    def dense(self):
        return np.diag(self.main) + np.diag(self.sup, 1) + np.diag(self.sub, -1)

    def norm_inf(self):
        row = np.abs(self.main)
        row[:-1] += np.abs(self.sup)
        row[1:] += np.abs(self.sub)
        return float(row.max())

    def rows(self):
        """(sub, main, super) per row, with zeros outside the matrix"""
        return np.column_stack([np.concatenate([[0.0], self.sub]), self.main,
                                np.concatenate([self.sup, [0.0]])])

    @cached_property
    def symmetrizer(self):
        return symmetrize(self)


def _boundary_constants(p, n, h):
    denominators = {
        "r0 (3*alpha0 - 2*h*beta0)": 3 * p.alpha0 - 2 * h * p.beta0,
        "r1 (3*alpha1 + 2*h*beta1)": 3 * p.alpha1 + 2 * h * p.beta1,
        "q0 (alpha0 - h*beta0)": p.alpha0 - h * p.beta0,
    }
    for name, value in denominators.items():
        if abs(value) <= DENOMINATOR_THRESHOLD:
            raise DegenerateDiscretizationError(
                "discretize", f"denominator of {name} vanishes at n={n}; use a larger n")
    r0 = p.alpha0 / (3 * p.alpha0 - 2 * h * p.beta0)
    r1 = p.alpha1 / (3 * p.alpha1 + 2 * h * p.beta1)
    q0 = -p.beta0 / (p.alpha0 - h * p.beta0)
    return r0, r1, q0


def build_semidiscrete(p, n):
    """
    Builds A_n = Theta_n L_n + Sigma_n D_n + Lambda_n and B_n for the problem p.
    Raises:
        ValidationError: If n is below the minimum order
        DegenerateDiscretizationError: If a boundary-stencil denominator vanishes
    """
    n = int(n)
    if n < MIN_ORDER:
        raise ValidationError("discretize", f"order n must be at least {MIN_ORDER}, got {n}")
    h = 1.0 / (n + 1)
    r0, r1, q0 = _boundary_constants(p, n, h)
    x = grid_points(n)
    theta, sigma, lam = p.theta(x), p.sigma(x), p.lam(x)

    l_main = np.full(n, -2.0)
    l_main[0] = -2.0 + 4.0 * r0
    l_main[-1] = -2.0 + 4.0 * r1
    l_sup = np.ones(n - 1)
    l_sup[0] = 1.0 - r0
    l_sub = np.ones(n - 1)
    l_sub[-1] = 1.0 - r1
    l_main, l_sup, l_sub = l_main / h ** 2, l_sup / h ** 2, l_sub / h ** 2

    d_main = np.full(n, 1.0 / h)
    d_main[0] = q0
    d_sub = np.full(n - 1, -1.0 / h)

    main = theta * l_main + sigma * d_main + lam
    sup = theta[:-1] * l_sup
    sub = theta[1:] * l_sub + sigma[1:] * d_sub
    b_n = 2 * h * theta[-1] / (3 * p.alpha1 + 2 * h * p.beta1)

    return SemiDiscreteSystem(n=n, h=h, sub=sub, main=main, sup=sup, r0=r0, r1=r1, q0=q0,
                              b_n=b_n, theta_grid=theta, sigma_grid=sigma, lambda_grid=lam,
                              alpha0=p.alpha0, beta0=p.beta0, alpha1=p.alpha1, beta1=p.beta1)


def stencil_matrices(sys):
    """Dense L_n and D_n, used to check A_n against its factor definition"""
    n, h = sys.n, sys.h
    lap = (np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1)
           + np.diag(np.ones(n - 1), -1))
    lap[0, 0], lap[0, 1] = -2.0 + 4.0 * sys.r0, 1.0 - sys.r0
    lap[-1, -1], lap[-1, -2] = -2.0 + 4.0 * sys.r1, 1.0 - sys.r1
    diff = np.diag(np.ones(n)) - np.diag(np.ones(n - 1), -1)
    diff[0, 0] = sys.h * sys.q0
    return lap / h ** 2, diff / h


def solve_tridiagonal(sub, main, sup, rhs):
    """
    Solves the tridiagonal system with LAPACK's banded LU (partial pivoting).
    Raises:
        SingularSystemError: If the factorization hits a zero pivot
    """
    ab = np.zeros((3, len(main)))
    ab[0, 1:] = sup
    ab[1, :] = main
    ab[2, :-1] = sub
    try:
        return linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
    except linalg.LinAlgError as e:
        raise SingularSystemError("discretize", f"tridiagonal solve failed: {e}") from e


def restrict(f, n):
    """R_n f: samples of f at jh, j=1..n"""
    return GridVector(f(grid_points(int(n))))


def extend(v):
    """S_n v as a step function on [0,1]"""
    return StepFunction(np.asarray(v, dtype=float))


def norm_2d(v):
    """sqrt(h) times the Euclidean norm, so that ||S_n v||_L2 = ||v||_2d"""
    v = np.asarray(v, dtype=float)
    h = 1.0 / (v.shape[-1] + 1)
    return np.sqrt(h) * np.linalg.norm(v, axis=-1)


def steady_state(sys, f_ss):
    """
    Solves A_n v + B_n f_ss = 0.
    Raises:
        SingularSystemError: If A_n is singular or the residual check fails
    """
    rhs = -sys.B * f_ss
    v = solve_tridiagonal(sys.sub, sys.main, sys.sup, rhs)
    residual = np.max(np.abs(sys.matvec(v) - rhs))
    scale = sys.norm_inf() * np.max(np.abs(v)) + abs(f_ss) * np.max(np.abs(sys.B))
    if not np.all(np.isfinite(v)) or residual > 1e-10 * max(scale, PIVOT_THRESHOLD):
        raise SingularSystemError(
            "discretize", f"steady state residual {residual:.3g} too large; "
                          "zero is likely in the spectrum of A_n")
    return GridVector(v)


class Symmetrizer:
    """
    Diagonal P_n with p_1 = 1 such that M = P^-1 A_n P is symmetric
    tridiagonal (diagonal `diag`, off-diagonal `off`).
    """

    def __init__(self, p, diag, off):
        self.p = p
        self.diag = diag
        self.off = off

    def similarity_offdiagonals(self, sys):
        """Upper and lower off-diagonals of P^-1 A P computed from A directly"""
        ratio = self.p[1:] / self.p[:-1]
        return sys.sup * ratio, sys.sub / ratio

    def eigenvalues(self):
        return linalg.eigvalsh_tridiagonal(self.diag, self.off)

    @cached_property
    def modes(self):
        """Eigenvalues and orthonormal eigenvectors of the symmetric form"""
        return linalg.eigh_tridiagonal(self.diag, self.off)

    def modal_weights(self, u, row=0):
        """
        Weights c_i with [A^m e^{At} u]_row = sum_i c_i lam_i^m e^{lam_i t}.
        """
        lam, vecs = self.modes
        coords = vecs.T @ (np.asarray(u, dtype=float) / self.p)
        return lam, self.p[row] * vecs[row, :] * coords

    def propagate(self, u, t):
        """e^{A t} u evaluated through the eigen-expansion"""
        lam, vecs = self.modes
        coords = vecs.T @ (np.asarray(u, dtype=float) / self.p)
        return self.p * (vecs @ (np.exp(lam * t) * coords))

    @property
    def condition(self):
        return float(self.p.max() / self.p.min())


def symmetrize(sys):
    """
    Raises:
        OffDiagonalSignError: If an off-diagonal entry of A_n is not positive
    """
    for name, values in (("super", sys.sup), ("sub", sys.sub)):
        bad = np.flatnonzero(values <= 0)
        if bad.size:
            raise OffDiagonalSignError(
                "discretize", f"{name}-diagonal entry {int(bad[0]) + 1} of A_n is "
                              f"{values[bad[0]]:.3g} <= 0; increase n for this convection")
    ratio = np.sqrt(sys.sub / sys.sup)
    p = np.concatenate([[1.0], np.cumprod(ratio)])
    return Symmetrizer(p=p, diag=sys.main.copy(), off=np.sqrt(sys.sub * sys.sup))


def eigenvalues(sys):
    return sys.symmetrizer.eigenvalues()


def growth_bound(sys):
    """(M, omega) with ||e^{A_n t}||_2 <= M e^{omega t}"""
    omega = max(float(eigenvalues(sys).max()), 0.0)
    return sys.symmetrizer.condition, omega


def growth_certificate(problem, n_list):
    """
    Fits (M, omega) at the first order of n_list, with a margin, and checks
    that it bounds every other order.
    """
    rows = []
    for n in n_list:
        sys = build_semidiscrete(problem, n)
        lam_max = float(eigenvalues(sys).max())
        rows.append({"n": n, "lambda_max": lam_max, "condition": sys.symmetrizer.condition})
    first = rows[0]
    omega = max(first["lambda_max"], 0.0) + GROWTH_MARGIN * (1.0 + abs(first["lambda_max"]))
    M = first["condition"] * (1.0 + GROWTH_MARGIN)
    valid = all(r["lambda_max"] <= omega and r["condition"] <= M for r in rows)
    log.info("growth certificate M=%.6g omega=%.6g valid=%s", M, omega, valid)
    return {"M": M, "omega": omega, "rows": rows, "valid": valid}


def consistency_residual(sys, xi, f_xi):
    """
    R_n(A xi) - A_n R_n xi - B_n f_xi, where A xi = theta xi'' + sigma xi' + lam xi
    is evaluated from the coefficient samples of the system.
    """
    x = grid_points(sys.n)
    op = (sys.theta_grid * xi.second_derivative(x) + sys.sigma_grid * xi.derivative(x)
          + sys.lambda_grid * xi(x))
    return GridVector(op - sys.matvec(xi(x)) - sys.B * f_xi)


def tridiag_matvec(sys, v):
    """A_n v for one vector or a stack of vectors along the last axis"""
    return sys.matvec(v)
