"""
This module chains the components into complete plans: transfer between
two states, null control of a rough state, and their superposition. Each
plan samples the planned input, and optionally checks it by simulating on
an independent finer grid.
"""

import logging

import numpy as np

from .constants import (DEFAULT_DT, DEFAULT_N, DEFAULT_N_SIM, DEFAULT_TABLE_ORDER,
                        DEFAULT_TOLERANCE, DEFAULT_TRUNCATION, NULL_CONTROL_N,
                        VERIFY_SNAPSHOTS)
from .discretize import build_semidiscrete, growth_bound, norm_2d
from .errors import OffDiagonalSignError, SingularSystemError, ValidationError
from .flatness import (FlatInput, SampledSignal, fit_coefficient_bound, flat_state,
                       flat_table, truncation_tail_estimate)
from .gevrey import Psi, endpoint_series, reference_trajectory
from .nullcontrol import NullInput, SmoothedState, null_input, propagate
from .problem import EndpointState
from .simulate import Trajectory, initial_vector, integrate, verify

log = logging.getLogger(__name__)

DESIGN_SNAPSHOTS = 101
GEVREY_FIT_ORDER = 12


class Plan:
    """
    A planned input: its samples, an evaluator for arbitrary times and the
    report. `snapshots` is the simulated state trajectory under the input:
    the verification run when the plan was checked, otherwise a run on the
    design grid computed on first access.
    """

    def __init__(self, kind, signal, evaluator, report, design=None, levels=None,
                 trajectory=None, simulate=None):
        self.kind = kind
        self.signal = signal
        self.evaluator = evaluator
        self.report = report
        self.design = design
        self.levels = levels or {}
        self._trajectory = trajectory
        self._simulate = simulate

    @property
    def verified(self):
        return self.report["verified"]

    @property
    def snapshots(self):
        if self._trajectory is None and self._simulate is not None:
            self._trajectory = self._simulate()
        return self._trajectory


class CombinedInput:
    """Superposition of input evaluators with a common truncation"""

    def __init__(self, *parts):
        self.parts = parts
        self.truncation = min(p.truncation for p in parts)

    def contributions(self, times):
        return sum(p.contributions(times)[..., : self.truncation + 1] for p in self.parts)

    def __call__(self, times):
        return self.contributions(times).sum(axis=-1)


def time_grid(T, dt):
    steps = max(1, int(round(T / dt)))
    times = np.arange(steps + 1) * (T / steps)
    times[-1] = T
    return times


def _design(problem, n, truncation, table_order):
    if truncation < 0:
        raise ValidationError("pipeline", f"truncation must be non-negative, got {truncation}")
    sys = build_semidiscrete(problem, n)
    K = min(max(table_order, truncation + 1), sys.n)
    if truncation > K:
        raise ValidationError("pipeline", f"truncation {truncation} exceeds the order n={sys.n}")
    return sys, flat_table(sys, K)


def _growth(sys):
    try:
        M, omega = growth_bound(sys)
    except OffDiagonalSignError as e:
        log.warning("no symmetrizer, growth bound unavailable: %s", e)
        return None
    return {"M": M, "omega": omega}


def truncation_levels(evaluator, times, levels):
    """r^i = sum_{k<=i} of the per-k contributions, for each requested i"""
    contributions = evaluator.contributions(times)
    cumulative = np.cumsum(contributions, axis=-1)
    return {int(i): SampledSignal(times, cumulative[:, i]) for i in levels
            if i <= evaluator.truncation}


def level_gaps(levels):
    keys = sorted(levels)
    return {(a, b): levels[b].l2_distance(levels[a]) for a, b in zip(keys, keys[1:])}


def _finish(report, check, tolerance, flags):
    """
    Records the raised flags and the verdict: the check decides when there
    is one, and a raised flag makes the plan unverified in any case.
    """
    raised = sorted(name for name, up in flags.items() if up)
    report["flags"] = raised
    for name in raised:
        log.warning("plan flagged: %s", name)
    if check is None:
        report["verified"] = False if raised else None
        return report
    report["verification"] = {k: v for k, v in check.items() if k not in ("final", "trajectory")}
    richardson = check["dt_richardson"]
    report["verified"] = bool(check["terminal_error"] <= tolerance
                              and (richardson is None or richardson["passed"])
                              and not raised)
    return report


def _design_run(problem, n, v0, inputs, T, dt):
    """Deferred simulation of `inputs` from v0 on the design grid"""
    def run():
        sys = build_semidiscrete(problem, n)
        steps = max(1, int(round(T / dt)))
        return integrate(sys, v0, inputs, T, dt, store_every=max(1, steps // VERIFY_SNAPSHOTS))
    return run


def _transfer_leg(problem, spec, sys, tab, truncation):
    y0 = endpoint_series(problem, spec.u0, sys, tab.K + 1)
    yT = endpoint_series(problem, spec.uT, sys, tab.K + 1)
    traj = reference_trajectory(y0.values, yT.values, spec.T, spec.gevrey_alpha, spec.gevrey_gamma)
    return traj, FlatInput(tab, traj, truncation), y0.diverged or yT.diverged


def _transfer_report(spec, sys, tab, traj, truncation, diverged):
    R = fit_coefficient_bound([tab.a])
    D = traj.gevrey_constant(min(truncation, GEVREY_FIT_ORDER))
    design_times = np.linspace(0.0, spec.T, DESIGN_SNAPSHOTS)
    design = Trajectory(design_times, flat_state(tab, traj.jets(design_times, tab.K)))
    report = {
        "n": sys.n, "truncation": truncation, "table_order": tab.K,
        "T": spec.T, "gamma": traj.gamma, "gamma_shrunk": traj.gamma_shrunk,
        "R": R, "gevrey_D": D, "gevrey_alpha": spec.gevrey_alpha,
        "tail_estimate": truncation_tail_estimate(R, D, spec.gevrey_alpha, truncation),
        "growth": _growth(sys),
        "surrogate_diverged": diverged,
        "design_terminal_error": float(norm_2d(design.final - initial_vector(spec.uT, sys))),
    }
    return report, design


def plan_transfer(problem, spec, n=DEFAULT_N, truncation=DEFAULT_TRUNCATION, n_sim=DEFAULT_N_SIM,
                  dt=DEFAULT_DT, table_order=DEFAULT_TABLE_ORDER, tolerance=DEFAULT_TOLERANCE,
                  check=True, levels=()):
    """
    Plans the input steering spec.u0 to spec.uT over [0, T].
    Returns:
        Plan with the sampled input, its evaluator and the report
    """
    sys, tab = _design(problem, n, truncation, table_order)
    traj, evaluator, diverged = _transfer_leg(problem, spec, sys, tab, truncation)
    times = time_grid(spec.T, dt)
    signal = evaluator.sample(times)
    report, design = _transfer_report(spec, sys, tab, traj, truncation, diverged)
    report["kind"] = "transfer"

    result = None
    if check:
        result = verify(problem, spec.u0, spec.uT, evaluator, spec.T, n_sim, dt, design_n=sys.n,
                        reference=lambda t: flat_state(tab, traj.jets(t, tab.K)))
    _finish(report, result, tolerance, {"surrogate_diverged": diverged})
    return Plan("transfer", signal, evaluator, report, design,
                truncation_levels(evaluator, times, levels),
                trajectory=result["trajectory"] if result else None,
                simulate=_design_run(problem, sys.n, spec.u0, evaluator, spec.T, dt))


def _null_leg(spec, sys, tab, truncation):
    psi = Psi(spec.gevrey_alpha, spec.T)
    smoothed = SmoothedState(sys, spec.u0_tilde, spec.s)
    return psi, NullInput(smoothed, psi, tab, truncation)


def _free_decay(problem, u0, T, n):
    """||e^{A_n T} R_n u0||_2d, the terminal norm without any input"""
    try:
        sys = build_semidiscrete(problem, n)
        return float(norm_2d(sys.symmetrizer.propagate(initial_vector(u0, sys), T)))
    except (OffDiagonalSignError, SingularSystemError) as e:
        log.warning("free decay unavailable on n=%d: %s", n, e)
        return None


def plan_null_control(problem, spec, n=NULL_CONTROL_N, truncation=DEFAULT_TRUNCATION,
                      n_sim=DEFAULT_N_SIM, dt=DEFAULT_DT, table_order=DEFAULT_TABLE_ORDER,
                      tolerance=DEFAULT_TOLERANCE, check=True, levels=(), method="spectral"):
    """
    Plans the input steering spec.u0_tilde to zero over [0, tau], with no
    input during the smoothing time s.
    """
    sys, tab = _design(problem, n, truncation, table_order)
    psi, evaluator = _null_leg(spec, sys, tab, truncation)
    times = time_grid(spec.tau, dt)
    propagation_ok = None
    if method == "spectral":
        signal = evaluator.sample(times)
    else:
        window = time_grid(spec.T, dt)
        jets = propagate(sys, spec.u0_tilde, spec.s, window, truncation, method)
        propagation_ok = bool(jets.richardson_ok)
        signal = null_input(jets, psi, tab, truncation)
        evaluator = signal

    report = {
        "kind": "null_control", "n": sys.n, "truncation": truncation, "table_order": tab.K,
        "tau": spec.tau, "s": spec.s, "gamma": psi.gamma, "method": method,
        "R": fit_coefficient_bound([tab.a]), "growth": _growth(sys),
        "free_decay": _free_decay(problem, spec.u0_tilde, spec.tau, n_sim),
        "propagation_richardson_ok": propagation_ok,
    }
    result = None
    if check:
        result = verify(problem, spec.u0_tilde, EndpointState.zero(), evaluator, spec.tau,
                        n_sim, dt, design_n=sys.n)
    _finish(report, result, tolerance, {"propagation_richardson": propagation_ok is False})
    levels = truncation_levels(evaluator, times, levels) if method == "spectral" else {}
    return Plan("null_control", signal, evaluator, report, None, levels,
                trajectory=result["trajectory"] if result else None,
                simulate=_design_run(problem, sys.n, spec.u0_tilde, evaluator, spec.tau, dt))


def plan_composite(problem, spec, n=DEFAULT_N, truncation=DEFAULT_TRUNCATION,
                   n_sim=DEFAULT_N_SIM, dt=DEFAULT_DT, table_order=DEFAULT_TABLE_ORDER,
                   tolerance=DEFAULT_TOLERANCE, check=True, levels=()):
    """
    r = f + g~: the transfer input of spec.transfer plus the null input of
    spec.null_control, both built from one flat table. Starting from
    u0 + u0_tilde, r reaches spec.transfer.uT at tau by linearity.
    """
    transfer, null = spec.transfer, spec.null_control
    sys, tab = _design(problem, n, truncation, table_order)
    traj, f, diverged = _transfer_leg(problem, transfer, sys, tab, truncation)
    _, g = _null_leg(null, sys, tab, truncation)
    evaluator = CombinedInput(f, g)
    times = time_grid(null.tau, dt)
    signal = SampledSignal(times, evaluator(times))

    report, design = _transfer_report(transfer, sys, tab, traj, truncation, diverged)
    report.update({"kind": "composite", "tau": null.tau, "s": null.s,
                   "null_gamma": null.T,
                   "free_decay": _free_decay(problem, null.u0_tilde, null.tau, n_sim)})
    level_signals = truncation_levels(evaluator, times, levels)
    if level_signals:
        report["level_gaps"] = {f"{a}-{b}": gap for (a, b), gap in level_gaps(level_signals).items()}

    result = None
    if check:
        result = verify(problem, (transfer.u0, null.u0_tilde), transfer.uT, evaluator, null.tau,
                        n_sim, dt, design_n=sys.n)
    _finish(report, result, tolerance, {"surrogate_diverged": diverged})
    return Plan("composite", signal, evaluator, report, design, level_signals,
                trajectory=result["trajectory"] if result else None,
                simulate=_design_run(problem, sys.n, (transfer.u0, null.u0_tilde), evaluator,
                                     null.tau, dt))


def plan(problem, task, **options):
    """Dispatches on the task type"""
    kind = type(task).__name__
    planners = {"TransferSpec": plan_transfer, "NullControlSpec": plan_null_control,
                "CompositeSpec": plan_composite}
    if kind not in planners:
        raise ValidationError("pipeline", f"unsupported task {kind}")
    if kind != "NullControlSpec":
        options.pop("method", None)
    return planners[kind](problem, task, **options)
