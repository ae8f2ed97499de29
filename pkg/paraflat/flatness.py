"""
This module computes the flat parametrization of the semi-discrete system:
the d_{j,k} table expressing the state through the flat output, the input
coefficients a_{n,k}, and the truncated input series built from them.
"""

import logging

import numpy as np
from progress.bar import Bar
from scipy import integrate, special

from .constants import COEFFICIENT_BOUND_MARGIN
from .discretize import build_semidiscrete
from .errors import JetOrderError, ValidationError

log = logging.getLogger(__name__)


def log_factorial_2k2(k):
    """log((2k-2)!) with the convention (2k-2)! = 1 for k <= 1"""
    k = np.asarray(k, dtype=float)
    return np.where(k <= 1, 0.0, special.gammaln(np.maximum(2 * k - 1, 1.0)))


class FlatTable:
    """
    d[j-1, k] = d_{j,k} (state coefficients) and a[k] = a_{n,k} (input
    coefficients) for k = 0..K.
    """

    def __init__(self, n, K, d, a, flat_scale):
        self.n = n
        self.K = K
        self.d = d
        self.a = a
        self.flat_scale = flat_scale

    def largest_entry(self):
        return float(np.max(np.abs(self.d)))


class SampledSignal:
    """Values (and optionally derivatives) of an input on an increasing time grid"""

    def __init__(self, times, values, derivative=None):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.derivative = None if derivative is None else np.asarray(derivative, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValidationError("flatness", "times and values must be 1-D and of equal length")
        if self.derivative is not None and self.derivative.shape != self.times.shape:
            raise ValidationError("flatness", "derivative samples do not match the time grid")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("flatness", "sample times must be strictly increasing")

    def __call__(self, t):
        """Linear interpolation; exact at the sample times"""
        return np.interp(t, self.times, self.values)

    def __add__(self, other):
        if not np.array_equal(self.times, other.times):
            raise ValidationError("flatness", "signals live on different time grids")
        derivative = None
        if self.derivative is not None and other.derivative is not None:
            derivative = self.derivative + other.derivative
        return SampledSignal(self.times, self.values + other.values, derivative)

    def __sub__(self, other):
        return self + SampledSignal(other.times, -other.values,
                                    None if other.derivative is None else -other.derivative)

    def l2_norm(self):
        return float(np.sqrt(integrate.trapezoid(self.values ** 2, self.times)))

    def l2_distance(self, other):
        return (self - other).l2_norm()


def flat_table(sys, K):
    """
    Runs the d_{j,k} recursion row by row in j (all k at once), then reads
    the input coefficients a_{n,k} off the last boundary row.
    Raises:
        ValidationError: If K exceeds n
    """
    n, h = sys.n, sys.h
    K = int(K)
    if not 0 <= K <= n:
        raise ValidationError("flatness", f"retained order K={K} must lie in [0, n={n}]")
    theta, sigma, lam = sys.theta_grid, sys.sigma_grid, sys.lambda_grid

    def shifted(row):
        out = np.zeros_like(row)
        out[1:] = row[:-1]
        return out

    d = np.zeros((n, K + 1))
    d[0, 0] = 1.0 / sys.flat_scale
    c = (1.0 - sys.r0) * theta[0]
    d[1] = ((1.0 + sys.q0 * h - h ** 2 * (sigma[0] * sys.q0 + lam[0]) / c) * d[0]
            + h ** 2 / c * shifted(d[0]))
    for j in range(1, n - 1):
        th = theta[j]
        d[j + 1] = ((-th + h * sigma[j]) / th * d[j - 1]
                    + (2 * th - h * sigma[j] - h ** 2 * lam[j]) / th * d[j]
                    + h ** 2 / th * shifted(d[j]))

    th_n, sig_n, lam_n = theta[-1], sigma[-1], lam[-1]
    a = (h ** 2 / sys.b_n * shifted(d[-1])
         - ((3 * sys.r1 - 1) * th_n + h ** 2 * lam_n) / sys.b_n * d[-1]
         - (h * sig_n - (1 - sys.r1) * th_n) / sys.b_n * (d[-1] - d[-2]))

    underflowed = int(np.count_nonzero(a[: min(K, n - 1) + 1] == 0.0))
    tab = FlatTable(n=n, K=K, d=d, a=a, flat_scale=sys.flat_scale)
    log.debug("flat table n=%d K=%d largest |d|=%.3g underflowed a entries=%d",
              n, K, tab.largest_entry(), underflowed)
    return tab


def _require_order(jets, order, what):
    if jets.order < order:
        raise JetOrderError("flatness", f"{what} needs jets of order {order}, got {jets.order}")


def flat_state(tab, jets):
    """v_j = sum_k d_{j,k} y^(k) for one jet or a batch of jets"""
    _require_order(jets, tab.K, "flat_state")
    return jets.derivs[..., : tab.K + 1] @ tab.d.T


def input_contributions(tab, jets, truncation):
    """Per-k terms a_{n,k} y^(k), shape (..., truncation + 1)"""
    if truncation > tab.K:
        raise JetOrderError("flatness", f"truncation {truncation} exceeds table order {tab.K}")
    _require_order(jets, truncation, "synthesize_input")
    return jets.derivs[..., : truncation + 1] * tab.a[: truncation + 1]


def synthesize_input(tab, jets, truncation):
    """
    f(t) = sum_{k<=i} a_{n,k} y^(k)(t) on the jets' time points; derivative
    samples come from the shifted sum when the jets are one order longer.
    """
    values = input_contributions(tab, jets, truncation).sum(axis=-1)
    derivative = None
    if jets.order >= truncation + 1:
        derivative = jets.derivs[..., 1: truncation + 2] @ tab.a[: truncation + 1]
    return SampledSignal(np.atleast_1d(jets.t), np.atleast_1d(values),
                         None if derivative is None else np.atleast_1d(derivative))


class FlatInput:
    """
    Input evaluator f(t) = sum_{k<=i} a_{n,k} y^(k)(t) for any trajectory
    exposing jets(times, order).
    """

    def __init__(self, tab, trajectory, truncation):
        if truncation > tab.K:
            raise JetOrderError("flatness", f"truncation {truncation} exceeds table order {tab.K}")
        self.tab = tab
        self.trajectory = trajectory
        self.truncation = truncation

    def contributions(self, times):
        jets = self.trajectory.jets(np.atleast_1d(times), self.truncation)
        return input_contributions(self.tab, jets, self.truncation)

    def __call__(self, times):
        return self.contributions(times).sum(axis=-1)

    def sample(self, times):
        jets = self.trajectory.jets(np.atleast_1d(times), self.truncation + 1)
        return synthesize_input(self.tab, jets, self.truncation)


def fit_coefficient_bound(a_rows):
    """
    Smallest R with |a_{n,k}| <= R^{k+1}/(2k-2)! over every supplied row of
    coefficients. Zero entries do not constrain R.
    """
    best = 0.0
    for a in a_rows:
        a = np.asarray(a, dtype=float)
        k = np.arange(len(a))
        nonzero = a != 0
        if not np.any(nonzero):
            continue
        logs = (np.log(np.abs(a[nonzero])) + log_factorial_2k2(k[nonzero])) / (k[nonzero] + 1)
        best = max(best, float(np.exp(logs.max())))
    return best


def bound_violations(a_rows, R):
    if R <= 0:
        return sum(int(np.count_nonzero(np.asarray(a))) for a in a_rows)
    count = 0
    for a in a_rows:
        a = np.asarray(a, dtype=float)
        k = np.arange(len(a))
        limit = np.exp((k + 1) * np.log(R) - log_factorial_2k2(k))
        count += int(np.count_nonzero(np.abs(a) > limit * (1 + 1e-12)))
    return count


def truncation_tail_estimate(R, L, alpha, truncation, k_max=200):
    """sum_{k>i} R^{k+1} L^{k+1} (k!)^alpha / (2k-2)!"""
    k = np.arange(truncation + 1, k_max + 1)
    logs = (k + 1) * np.log(R * L) + alpha * special.gammaln(k + 1) - log_factorial_2k2(k)
    return float(np.sum(np.exp(logs)))


def coefficient_limit_study(problem, k_max, n_list, show_progress=False):
    """
    a_{n,k} for every n of n_list and k <= k_max, the differences between
    consecutive orders of n_list (doublings in the intended use) and, per k,
    whether they shrink monotonically. The bound constant R is fitted on the
    first order with a margin and checked against the other orders.
    """
    n_list = [int(n) for n in n_list]
    rows = np.zeros((len(n_list), k_max + 1))
    bar = Bar("Coefficients", max=len(n_list), suffix="%(percent)d%%") if show_progress else None
    for i, n in enumerate(n_list):
        tab = flat_table(build_semidiscrete(problem, n), min(k_max, n))
        rows[i, : tab.K + 1] = tab.a
        if bar:
            bar.next()
    if bar:
        bar.finish()

    R = fit_coefficient_bound(rows[:1]) * (1.0 + COEFFICIENT_BOUND_MARGIN)
    violations = bound_violations(rows[1:], R)
    if violations:
        log.warning("R=%.6g fitted on n=%d is exceeded by %d coefficients of the finer orders",
                    R, n_list[0], violations)
    cauchy = np.abs(np.diff(rows, axis=0))
    monotone = np.all(np.diff(cauchy, axis=0) <= 0, axis=0)
    if not np.all(monotone):
        log.info("Cauchy differences grow somewhere along n for k in %s",
                 np.flatnonzero(~monotone).tolist())
    underflow = [(n, int(k)) for n, row in zip(n_list, rows)
                 for k in np.flatnonzero(row == 0.0)]
    if underflow:
        log.info("%d coefficients underflowed to zero", len(underflow))
    return {"n_list": n_list, "a": rows, "cauchy": cauchy, "cauchy_monotone": monotone,
            "R": R, "violations": violations, "underflow": underflow}
