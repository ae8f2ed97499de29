"""
This module handles smooth trajectories for the flat output: truncated
Taylor jets and their arithmetic, the Gevrey step function psi built from
the bump exp(-[(1 - t/Gamma) t/Gamma]^(-1/(alpha-1))), the endpoint series
of the flat output and the reference trajectory gluing them together.
"""

import logging

import numpy as np
from scipy import integrate, special

from .constants import (GAMMA_SHRINK_FACTOR, GEVREY_MIN_ALPHA, JET_MAGNITUDE_LIMIT,
                        PSI0_CLAMP_EXPONENT, QUAD_TOLERANCE, SERIES_MAX_TERMS,
                        SERIES_RELATIVE_CUTOFF, SURROGATE_DIVERGENCE_RATIO)
from .discretize import build_semidiscrete, restrict, steady_state
from .errors import (MagnitudeOverflowError, QuadratureError, SeriesConvergenceError,
                     ValidationError)

log = logging.getLogger(__name__)


def _factorials(order):
    return special.factorial(np.arange(order + 1), exact=False)


def _series_mul(a, b):
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(out.shape[-1]):
        out[..., k] = np.sum(a[..., : k + 1] * b[..., k::-1], axis=-1)
    return out


def _series_reciprocal(a):
    out = np.zeros_like(a)
    out[..., 0] = 1.0 / a[..., 0]
    for k in range(1, a.shape[-1]):
        out[..., k] = -np.sum(a[..., 1: k + 1] * out[..., k - 1::-1], axis=-1) / a[..., 0]
    return out


def _series_exp(a):
    out = np.zeros_like(a)
    out[..., 0] = np.exp(a[..., 0])
    j = np.arange(a.shape[-1])
    for k in range(1, a.shape[-1]):
        out[..., k] = np.sum(j[1: k + 1] * a[..., 1: k + 1] * out[..., k - 1::-1], axis=-1) / k
    return out


def _series_power(a, p):
    out = np.zeros_like(a)
    out[..., 0] = a[..., 0] ** p
    j = np.arange(a.shape[-1])
    for k in range(1, a.shape[-1]):
        weights = (p + 1) * j[1: k + 1] - k
        out[..., k] = (np.sum(weights * a[..., 1: k + 1] * out[..., k - 1::-1], axis=-1)
                       / (k * a[..., 0]))
    return out


class TaylorJet:
    """
    Values y(t), y'(t), ..., y^(order)(t) at one base point or a batch of base
    points. derivs has shape (order+1,) or (len(t), order+1). Arithmetic runs
    on the normalized coefficients y^(m)/m!.
    """

    def __init__(self, t, derivs):
        self.t = np.asarray(t, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        if self.derivs.shape[:-1] != self.t.shape:
            raise ValidationError("gevrey", "jet batch shape does not match its base points")

    @classmethod
    def from_taylor(cls, t, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(t, coeffs * _factorials(coeffs.shape[-1] - 1))

    @classmethod
    def constant(cls, t, c, order):
        t = np.asarray(t, dtype=float)
        derivs = np.zeros(t.shape + (order + 1,))
        derivs[..., 0] = c
        return cls(t, derivs)

    @classmethod
    def zeros(cls, t, order):
        return cls.constant(t, 0.0, order)

    @property
    def order(self):
        return self.derivs.shape[-1] - 1

    @property
    def value(self):
        return self.derivs[..., 0]

    @property
    def taylor(self):
        return self.derivs / _factorials(self.order)

    def truncate(self, order):
        if order > self.order:
            raise ValidationError("gevrey", f"cannot extend a jet of order {self.order} to {order}")
        return TaylorJet(self.t, self.derivs[..., : order + 1])

    def reversed(self, T):
        """Jet of s -> y(T - s) at the base points T - t"""
        signs = (-1.0) ** np.arange(self.order + 1)
        return TaylorJet(T - self.t, self.derivs * signs)

    def _coerce(self, other):
        if isinstance(other, TaylorJet):
            if other.order != self.order:
                raise ValidationError("gevrey", "jets of different orders")
            return other
        return TaylorJet.constant(self.t, other, self.order)

    def __add__(self, other):
        return TaylorJet(self.t, self.derivs + self._coerce(other).derivs)

    __radd__ = __add__

    def __neg__(self):
        return TaylorJet(self.t, -self.derivs)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, TaylorJet):
            return TaylorJet(self.t, self.derivs * other)
        return TaylorJet.from_taylor(self.t, _series_mul(self.taylor, self._coerce(other).taylor))

    __rmul__ = __mul__

    def reciprocal(self):
        if np.any(self.value == 0):
            raise ValidationError("gevrey", "reciprocal of a jet with zero value")
        return TaylorJet.from_taylor(self.t, _series_reciprocal(self.taylor))

    def exp(self):
        return TaylorJet.from_taylor(self.t, _series_exp(self.taylor))

    def power(self, p):
        if np.any(self.value <= 0) and not float(p).is_integer():
            raise ValidationError("gevrey", "non-integer power of a jet with non-positive value")
        if np.any(self.value == 0):
            raise ValidationError("gevrey", "power of a jet with zero value")
        return TaylorJet.from_taylor(self.t, _series_power(self.taylor, p))


def _check_gevrey_params(alpha, gamma):
    if not alpha > 1:
        raise ValidationError("gevrey", f"Gevrey order alpha must exceed 1, got {alpha}")
    if not gamma > 0:
        raise ValidationError("gevrey", f"support length Gamma must be positive, got {gamma}")


def _bump_exponent(alpha, gamma, t):
    """[(1 - t/Gamma) t/Gamma]^(-1/(alpha-1)), +inf outside (0, Gamma)"""
    u = np.asarray(t, dtype=float) / gamma
    z = u * (1.0 - u)
    out = np.full(z.shape, np.inf)
    inside = z > 0
    out[inside] = z[inside] ** (-1.0 / (alpha - 1.0))
    return out


def _peak_exponent(alpha):
    """The bump exponent at t = Gamma/2, 4^(1/(alpha-1))"""
    return 4.0 ** (1.0 / (alpha - 1.0))


def _offset_exponent(alpha, d):
    """
    Bump exponent minus its peak value at the signed offset d = 2t/Gamma - 1,
    +inf outside |d| < 1. Written as 4^p expm1(-p log1p(-d^2)) so that it
    stays accurate next to the peak however large 4^p is.
    """
    d2 = np.atleast_1d(np.asarray(d, dtype=float)) ** 2
    p = 1.0 / (alpha - 1.0)
    out = np.full(d2.shape, np.inf)
    inside = d2 < 1.0
    with np.errstate(over="ignore"):
        out[inside] = _peak_exponent(alpha) * np.expm1(-p * np.log1p(-d2[inside]))
    return out


def _clamped_exp(w):
    return np.where(w > PSI0_CLAMP_EXPONENT, 0.0, np.exp(-np.minimum(w, PSI0_CLAMP_EXPONENT)))


def psi0(alpha, gamma, t):
    """The bump exp(-[(1 - t/Gamma) t/Gamma]^(-1/(alpha-1))), zero outside (0, Gamma)"""
    scalar = np.ndim(t) == 0
    out = _clamped_exp(_bump_exponent(alpha, gamma, np.atleast_1d(t)))
    return float(out[0]) if scalar else out


def scaled_bump(alpha, gamma, t):
    """psi0(t) / psi0(Gamma/2), which stays representable when psi0 itself underflows"""
    scalar = np.ndim(t) == 0
    d = 2.0 * np.atleast_1d(np.asarray(t, dtype=float)) / gamma - 1.0
    out = _clamped_exp(_offset_exponent(alpha, d))
    return float(out[0]) if scalar else out


def psi0_jet(alpha, gamma, t, order, scaled=False):
    """
    Jet of the bump at the points t, or of psi0/psi0(Gamma/2) when scaled.
    Where the exponent exceeds the clamp, underflow makes the whole jet zero
    and it is returned as such.
    """
    _check_gevrey_params(alpha, gamma)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if scaled:
        exponent = _offset_exponent(alpha, 2.0 * t / gamma - 1.0)
    else:
        exponent = _bump_exponent(alpha, gamma, t)
    derivs = np.zeros(t.shape + (order + 1,))
    live = exponent <= PSI0_CLAMP_EXPONENT
    if np.any(live):
        u = t[live] / gamma
        z = np.zeros(u.shape + (order + 1,))
        z[..., 0] = u * (1.0 - u)
        if order >= 1:
            z[..., 1] = (1.0 - 2.0 * u) / gamma
        if order >= 2:
            z[..., 2] = -1.0 / gamma ** 2
        series = -TaylorJet.from_taylor(t[live], z).power(-1.0 / (alpha - 1.0)).taylor
        series[..., 0] = -exponent[live]
        derivs[live] = TaylorJet.from_taylor(t[live], _series_exp(series)).derivs
    return TaylorJet(t, derivs)


class Psi:
    """
    The Gevrey step psi(t) = 1 - int_0^t psi0 / int_0^Gamma psi0: equal to 1
    for t <= 0 and 0 for t >= Gamma, with every derivative vanishing at both
    ends. The integrals run over the bump divided by its peak value, in units
    of the peak width, so that narrow peaks (alpha close to 1) are resolved.
    """

    def __init__(self, alpha, gamma, tol=QUAD_TOLERANCE):
        _check_gevrey_params(alpha, gamma)
        if alpha < GEVREY_MIN_ALPHA:
            raise ValidationError(
                "gevrey", f"Gevrey order alpha={alpha} is below {GEVREY_MIN_ALPHA}, where the "
                          "peak exponent 4^(1/(alpha-1)) overflows")
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.tol = tol
        p = 1.0 / (self.alpha - 1.0)
        # offset d = 2t/Gamma - 1 at which the exponent has grown by about 1
        self.width = 1.0 / np.sqrt(p * _peak_exponent(self.alpha))
        self.peak_integral = self._peak_integral()
        self.norm = self.gamma * self.width * self.peak_integral

    def _left_of_peak(self, xi):
        """Scaled bump xi peak widths left of Gamma/2"""
        return _clamped_exp(_offset_exponent(self.alpha, -self.width * np.asarray(xi)))

    def _peak_integral(self):
        """int_0^inf of the scaled bump over offsets left of the peak, in peak widths"""
        result = integrate.quad(lambda xi: float(self._left_of_peak(np.atleast_1d(xi))[0]),
                                0.0, np.inf, epsabs=self.tol, epsrel=self.tol, limit=200,
                                full_output=1)
        value, abserr = result[0], result[1]
        # a fourth entry carries the QUADPACK message when ier > 0
        if len(result) > 3:
            if abserr > 1e3 * self.tol * max(value, 1.0):
                raise QuadratureError("gevrey", f"normalization integral did not converge: {result[3]}")
            log.warning("normalization quadrature flagged: %s (error %.3g)", result[3], abserr)
        if not value > 0:
            raise QuadratureError("gevrey", "normalization integral is not positive")
        return value

    def cumulative(self, t):
        """
        int_0^t of the scaled bump for t clipped to [0, Gamma], for a whole
        grid at once. Times past the peak use the symmetry of the bump.
        """
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, self.gamma)
        right = t > 0.5 * self.gamma
        # offset of min(t, Gamma - t) from the peak, in peak widths
        start = np.abs(1.0 - 2.0 * t / self.gamma) / self.width
        res, err, info = integrate.quad_vec(lambda xi: self._left_of_peak(start + xi), 0.0, np.inf,
                                            epsabs=self.tol * self.peak_integral, epsrel=self.tol,
                                            norm="max", limit=2000, full_output=True)
        if not info.success:
            raise QuadratureError("gevrey", f"cumulative integral failed: {info.message}")
        left = 0.5 * self.gamma * self.width * res
        return np.where(right, self.norm - left, left)

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        out = self._values(np.atleast_1d(np.asarray(t, dtype=float)))
        return float(out[0]) if scalar else out

    def _values(self, t):
        out = 1.0 - self.cumulative(t) / self.norm
        out[t <= 0] = 1.0
        out[t >= self.gamma] = 0.0
        return out

    def jets(self, t, order):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        derivs = np.zeros(t.shape + (order + 1,))
        derivs[..., 0] = self._values(t)
        if order >= 1:
            bump = psi0_jet(self.alpha, self.gamma, t, order - 1, scaled=True)
            derivs[..., 1:] = -bump.derivs / self.norm
        return TaylorJet(t, derivs)


def psi_jet(alpha, gamma, t, order):
    return Psi(alpha, gamma).jets(t, order)


class EndpointSeries:
    """y_m = (alpha0 - beta0 q0)[A_n^m u]_1 for m = 0..M"""

    def __init__(self, values, diverged=False):
        self.values = np.asarray(values, dtype=float)
        self.diverged = bool(diverged)


def _surrogate_series(sys, u, order):
    values = np.zeros(order + 1)
    w = np.asarray(u, dtype=float)
    for m in range(order + 1):
        values[m] = sys.flat_scale * w[0]
        if not np.isfinite(values[m]) or abs(values[m]) > JET_MAGNITUDE_LIMIT:
            raise MagnitudeOverflowError(
                "gevrey", f"endpoint series entry m={m} exceeds the representable range")
        w = sys.matvec(w)
    return values


def endpoint_series(problem, state, sys, order):
    """
    Flat-output derivatives at an endpoint state. Steady states give a
    constant flat output; explicit profiles use A_n^m applied to the samples,
    which is only meaningful when the profile is smooth enough, so the series
    is recomputed on the doubled grid and flagged when the two disagree.
    """
    if state.kind == "zero":
        return EndpointSeries(np.zeros(order + 1))
    if state.kind == "steady_state":
        values = np.zeros(order + 1)
        values[0] = sys.flat_scale * steady_state(sys, state.f_ss)[0]
        return EndpointSeries(values)

    values = _surrogate_series(sys, restrict(state.profile, sys.n), order)
    fine = build_semidiscrete(problem, 2 * sys.n + 1)
    fine_values = _surrogate_series(fine, restrict(state.profile, fine.n), order)
    floor = 1e-12 * max(1.0, float(np.max(np.abs(values))))
    ratio = np.abs(fine_values - values) / np.maximum(np.abs(values), floor)
    diverged = bool(np.any(ratio > SURROGATE_DIVERGENCE_RATIO))
    if diverged:
        m = int(np.argmax(ratio > SURROGATE_DIVERGENCE_RATIO))
        log.warning("endpoint series of the explicit profile is grid dependent from m=%d "
                    "(relative change %.3g on refinement)", m, ratio[m])
    return EndpointSeries(values, diverged)


def _series_constant(series):
    """Smallest c with |y_m| <= c^(m+2) (m+2)! over the entries m >= 1"""
    m = np.arange(len(series))
    mask = (m >= 1) & (series != 0)
    if not np.any(mask):
        return 0.0
    logs = (np.log(np.abs(series[mask])) - special.gammaln(m[mask] + 3)) / (m[mask] + 2)
    return float(np.exp(logs.max()))


def _terms_needed(series, span):
    """Number of series terms after which the remainder is negligible on [0, span]"""
    series = np.asarray(series, dtype=float)
    nonzero = np.flatnonzero(series)
    if nonzero.size == 0:
        return 1
    last = int(nonzero[-1])
    m = np.arange(len(series))
    terms = np.abs(series) * np.exp(m * np.log(max(span, 1e-300)) - special.gammaln(m + 1))
    partial = np.cumsum(terms)
    for k in range(1, min(last, SERIES_MAX_TERMS) + 1):
        if np.all(terms[k:] <= SERIES_RELATIVE_CUTOFF * partial[k - 1]):
            return k
    if last < SERIES_MAX_TERMS:
        if last + 1 == len(series) and last > 0:
            log.warning("endpoint series used to its last available term (%d) without "
                        "reaching the relative cutoff on [0, %.3g]", len(series), span)
        return last + 1
    raise SeriesConvergenceError(
        "gevrey", f"endpoint series has not converged within {SERIES_MAX_TERMS} terms "
                  f"on [0, {span:.3g}]")


def _polynomial_jets(series, t, order):
    """Jets of g(t) = sum_m y_m t^m/m! truncated to the available terms"""
    t = np.atleast_1d(t)
    derivs = np.zeros(t.shape + (order + 1,))
    L = len(series)
    for j in range(min(order, L - 1) + 1):
        coeffs = series[j:] / _factorials(L - 1 - j)
        derivs[..., j] = np.polynomial.polynomial.polyval(t, coeffs)
    return TaylorJet(t, derivs)


class ReferenceTrajectory:
    """
    y(t) = g0(t) psi(t) + gT(T - t) psi(T - t) with g0(t) = sum y_{m,0} t^m/m!
    and gT(s) = sum y_{m,T} (-s)^m/m!, so that y^(m)(0) = y_{m,0} and
    y^(m)(T) = y_{m,T}. Derivatives of every order are evaluated exactly
    through jets.
    """

    def __init__(self, y0_series, yT_series, T, alpha, gamma=None):
        if not T > 0:
            raise ValidationError("gevrey", f"horizon T must be positive, got {T}")
        gamma = float(T if gamma is None else gamma)
        if gamma > T:
            raise ValidationError("gevrey", f"Gamma={gamma} exceeds the horizon T={T}")
        self.T = float(T)
        self.alpha = float(alpha)
        self.y0_series = np.asarray(y0_series, dtype=float)
        self.yT_series = np.asarray(yT_series, dtype=float)

        c = max(_series_constant(self.y0_series), _series_constant(self.yT_series))
        self.gamma_shrunk = c * gamma >= 1.0
        if self.gamma_shrunk:
            shrunk = GAMMA_SHRINK_FACTOR / c
            log.info("shrinking Gamma from %.6g to %.6g so the endpoint series converge",
                     gamma, shrunk)
            gamma = shrunk
        self.gamma = gamma
        self.psi = Psi(self.alpha, self.gamma)
        self.terms0 = _terms_needed(self.y0_series, self.gamma)
        self.termsT = _terms_needed(self.yT_series, self.gamma)
        # the end leg runs backwards in time, so its odd coefficients change sign
        self._yT_backward = self.yT_series * (-1.0) ** np.arange(len(self.yT_series))

    def _leg_jets(self, series, terms, t, order):
        """jets of g(t) psi(t) on the points t, zero beyond Gamma"""
        t = np.atleast_1d(t)
        derivs = np.zeros(t.shape + (order + 1,))
        live = t < self.gamma
        if np.any(live) and np.any(series):
            g = _polynomial_jets(series[: terms + order], t[live], order)
            derivs[live] = (g * self.psi.jets(t[live], order)).derivs
        return TaylorJet(t, derivs)

    def jets(self, times, order):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        start = self._leg_jets(self.y0_series, self.terms0, times, order)
        end = self._leg_jets(self._yT_backward, self.termsT, self.T - times, order).reversed(self.T)
        return TaylorJet(times, start.derivs + end.derivs)

    def __call__(self, times):
        return self.jets(times, 0).value

    def gevrey_constant(self, order, samples=401):
        """
        Smallest D with sup|y^(m)| <= D^(m+1) (m!)^alpha for m <= order,
        measured on a uniform grid of [0, T].
        """
        jets = self.jets(np.linspace(0.0, self.T, samples), order)
        sup = np.max(np.abs(jets.derivs), axis=0)
        return fit_gevrey_constant(sup, self.alpha)


def fit_gevrey_constant(sup, alpha):
    m = np.arange(len(sup))
    mask = sup > 0
    if not np.any(mask):
        return 0.0
    logs = (np.log(sup[mask]) - alpha * special.gammaln(m[mask] + 1)) / (m[mask] + 1)
    return float(np.exp(logs.max()))


def reference_trajectory(y0_series, yT_series, T, alpha, gamma=None):
    return ReferenceTrajectory(y0_series, yT_series, T, alpha, gamma)
