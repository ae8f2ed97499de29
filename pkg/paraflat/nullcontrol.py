"""
This module plans inputs steering a rough initial state to zero: the state
is left to smooth freely for a time s, then the flat output of the smoothed
state phi(t) = (alpha0 - beta0 q0)[e^{A_n(t+s)} R_n u0]_1 is multiplied by
the Gevrey step and fed through the flat parametrization.
"""

import logging

import numpy as np

from .constants import (JET_MAGNITUDE_LIMIT, PROPAGATION_RICHARDSON_TOL,
                        PROPAGATION_STEPS_PER_S, SURROGATE_DIVERGENCE_RATIO)
from .discretize import build_semidiscrete
from .errors import JetOrderError, MagnitudeOverflowError, ValidationError
from .flatness import SampledSignal, input_contributions
from .gevrey import TaylorJet
from .simulate import initial_vector, integrate, zero_input

log = logging.getLogger(__name__)

METHODS = ("spectral", "crank_nicolson")


def _check_magnitude(derivs, times):
    bad = np.argwhere(~np.isfinite(derivs) | (np.abs(derivs) > JET_MAGNITUDE_LIMIT))
    if bad.size:
        row, m = bad[0][0], bad[0][-1]
        raise MagnitudeOverflowError(
            "nullcontrol", f"derivative of order {m} at t={np.atleast_1d(times)[row]:.6g} "
                           "exceeds the representable range")


class SmoothedState:
    """
    The free evolution e^{A_n(t+s)} R_n u0 through the eigen-expansion of
    A_n, so that every derivative A_n^m e^{A_n(t+s)} R_n u0 is exact up to
    rounding.
    """

    def __init__(self, sys, u0_tilde, s, scaled=True):
        if not s > 0:
            raise ValidationError("nullcontrol", f"smoothing time s must be positive, got {s}")
        self.sys = sys
        self.s = float(s)
        self.u0 = initial_vector(u0_tilde, sys)
        self.lam, self.weights = sys.symmetrizer.modal_weights(self.u0)
        if scaled:
            self.weights = self.weights * sys.flat_scale

    def jets(self, times, order):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(times + self.s < 0):
            raise ValidationError("nullcontrol", "smoothed state is only defined for t >= -s")
        exponent = np.outer(times + self.s, self.lam)
        with np.errstate(divide="ignore"):
            log_lam = np.log(np.abs(self.lam))
        sign = np.sign(self.lam)
        derivs = np.zeros(times.shape + (order + 1,))
        for m in range(order + 1):
            if m == 0:
                factors = np.exp(exponent)
            else:
                factors = sign ** m * np.exp(m * log_lam + exponent)
            derivs[:, m] = factors @ self.weights
        _check_magnitude(derivs, times)
        return TaylorJet(times, derivs)

    def states(self, times):
        """z(t) for every t of times, one row each"""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.array([self.sys.symmetrizer.propagate(self.u0, t + self.s) for t in times])


class SmoothedStateJets:
    """States z(t) and jets of phi at the control-window times t"""

    def __init__(self, s, times, states, phi, richardson_ok=True):
        self.s = s
        self.times = times
        self.states = states
        self.phi = phi
        self.richardson_ok = richardson_ok


def _crank_nicolson_phi(sys, u0, s, times, order, substeps):
    horizon = s + float(times[-1])
    steps = max(1, int(np.ceil(horizon * substeps / s)))
    traj = integrate(sys, u0, zero_input, horizon, horizon / steps)
    idx = np.searchsorted(traj.times, times + s, side="right") - 1
    idx = np.clip(idx, 0, len(traj.times) - 2)
    w = ((times + s - traj.times[idx]) / (traj.times[idx + 1] - traj.times[idx]))[:, None]
    z = (1 - w) * traj.states[idx] + w * traj.states[idx + 1]
    derivs = np.zeros(times.shape + (order + 1,))
    power = z
    for m in range(order + 1):
        derivs[:, m] = sys.flat_scale * power[:, 0]
        power = sys.matvec(power)
    return z, derivs


def propagate(sys, u0_tilde, s, times, order, method="spectral"):
    """
    Jets of phi up to `order` at the control-window times. The spectral
    method is the default; Crank-Nicolson stepping (with a half-step
    comparison) is kept for cross-checking.
    """
    if method not in METHODS:
        raise ValidationError("nullcontrol", f"unknown propagation method {method!r}")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if method == "spectral":
        smoothed = SmoothedState(sys, u0_tilde, s)
        phi = smoothed.jets(times, order)
        return SmoothedStateJets(s=float(s), times=times, states=smoothed.states(times), phi=phi)

    if not s > 0:
        raise ValidationError("nullcontrol", f"smoothing time s must be positive, got {s}")
    u0 = initial_vector(u0_tilde, sys)
    z, derivs = _crank_nicolson_phi(sys, u0, s, times, order, PROPAGATION_STEPS_PER_S)
    _, half = _crank_nicolson_phi(sys, u0, s, times, order, 2 * PROPAGATION_STEPS_PER_S)
    _check_magnitude(derivs, times)
    gap = np.abs(derivs - half) / np.maximum(np.abs(half), 1e-300)
    ok = bool(np.all(gap <= PROPAGATION_RICHARDSON_TOL))
    if not ok:
        m = int(np.argwhere(gap > PROPAGATION_RICHARDSON_TOL)[0][-1])
        log.warning("stepped propagation disagrees with its half-step rerun from order %d", m)
    return SmoothedStateJets(s=float(s), times=times, states=z, phi=TaylorJet(times, derivs),
                             richardson_ok=ok)


class NullInput:
    """
    g~(t) = 0 for t < s and sum_{k<=i} a_{n,k} (phi psi)^(k)(t - s) after,
    evaluated at arbitrary times.
    """

    def __init__(self, smoothed, psi, tab, truncation):
        if truncation > tab.K:
            raise JetOrderError("nullcontrol", f"truncation {truncation} exceeds table order {tab.K}")
        self.smoothed = smoothed
        self.psi = psi
        self.tab = tab
        self.truncation = truncation

    @property
    def s(self):
        return self.smoothed.s

    def contributions(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros(times.shape + (self.truncation + 1,))
        live = times >= self.s
        if np.any(live):
            t = times[live] - self.s
            y = self.smoothed.jets(t, self.truncation) * self.psi.jets(t, self.truncation)
            out[live] = input_contributions(self.tab, y, self.truncation)
        return out

    def __call__(self, times):
        return self.contributions(times).sum(axis=-1)

    def sample(self, times):
        return SampledSignal(np.atleast_1d(times), self(times))


def null_input(jets, psi, tab, truncation):
    """
    Samples of g~ on [0, tau] from precomputed jets: zeros on a grid of
    [0, s) with the jets' spacing, then g(t) at s + t for each jet time.
    """
    if jets.phi.order < truncation:
        raise JetOrderError("nullcontrol", f"jets of order {jets.phi.order} cannot carry "
                                           f"truncation {truncation}")
    y = jets.phi.truncate(truncation) * psi.jets(jets.times, truncation)
    g = input_contributions(tab, y, truncation).sum(axis=-1)
    spacing = jets.times[1] - jets.times[0] if len(jets.times) > 1 else jets.s
    prefix = np.arange(0.0, jets.s, spacing)
    prefix = prefix[prefix < jets.s - 1e-9 * spacing]
    return SampledSignal(np.concatenate([prefix, jets.s + jets.times]),
                         np.concatenate([np.zeros_like(prefix), g]))


def surrogate_convergence_check(problem, u0_tilde, s, times, k_max, n_list):
    """
    sup over t of |[A_n^k e^{A_n(t+s)} R_n u0]_1| differences between
    consecutive orders of n_list, for k <= k_max.
    """
    n_list = [int(n) for n in n_list]
    values = []
    for n in n_list:
        smoothed = SmoothedState(build_semidiscrete(problem, n), u0_tilde, s, scaled=False)
        values.append(smoothed.jets(times, k_max).derivs)
    diffs = np.array([np.max(np.abs(b - a), axis=0) for a, b in zip(values, values[1:])])
    scale = np.maximum(np.max(np.abs(values[-1]), axis=0), 1e-300)
    diverged = bool(diffs.size and np.any(diffs[-1] > SURROGATE_DIVERGENCE_RATIO * scale))
    if diverged:
        log.warning("smoothed-state derivatives still change by more than %d%% between "
                    "the two finest grids", int(100 * SURROGATE_DIVERGENCE_RATIO))
    return {"n_list": n_list, "sup_diff": diffs, "diverged": diverged}
