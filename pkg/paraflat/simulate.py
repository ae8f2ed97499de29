"""
This module integrates the semi-discrete system v' = A_n v + B_n f in time
(Crank-Nicolson after a short implicit-Euler start-up) and checks planned
inputs against an independent finer discretization.
"""

import logging

import numpy as np
from progress.bar import Bar

from .constants import (REFERENCE_REFINEMENT, RICHARDSON_TOLERANCE, STARTUP_HALF_STEPS,
                        VERIFY_SNAPSHOTS)
from .discretize import (build_semidiscrete, grid_points, norm_2d, restrict,
                         solve_tridiagonal, steady_state)
from .errors import IntegrationError, ValidationError

log = logging.getLogger(__name__)


class Trajectory:
    """State snapshots (one row per time) of an n-th order system"""

    def __init__(self, times, states):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] != len(self.times):
            raise ValidationError("simulate", "one state row is needed per snapshot time")

    @property
    def n(self):
        return self.states.shape[1]

    @property
    def final(self):
        return self.states[-1]

    def norms(self):
        return norm_2d(self.states)


def zero_input(times):
    return np.zeros_like(np.asarray(times, dtype=float))


def _step_count(T, dt):
    if not T > 0 or not dt > 0:
        raise ValidationError("simulate", f"horizon and step must be positive (T={T}, dt={dt})")
    steps = max(1, int(round(T / dt)))
    return steps, T / steps


def initial_vector(state, sys):
    """
    Grid vector of an initial or target state: an EndpointState, a function
    of x, an array already of length n, or a tuple of these to be summed.
    """
    if isinstance(state, (tuple, list)):
        return sum(initial_vector(part, sys) for part in state)
    kind = getattr(state, "kind", None)
    if kind == "zero":
        return np.zeros(sys.n)
    if kind == "steady_state":
        return np.asarray(steady_state(sys, state.f_ss), dtype=float)
    if kind == "profile":
        return np.asarray(restrict(state.profile, sys.n), dtype=float)
    if callable(state):
        return np.asarray(restrict(state, sys.n), dtype=float)
    v = np.asarray(state, dtype=float)
    if v.shape != (sys.n,):
        raise ValidationError("simulate", f"state has shape {v.shape}, expected ({sys.n},)")
    return v


def integrate(sys, v0, inputs, T, dt, startup_steps=STARTUP_HALF_STEPS, store_every=1):
    """
    Integrates from v0 over [0, T] with input evaluator `inputs` (called on
    arrays of times). The first step is replaced by `startup_steps` implicit
    Euler sub-steps, which damps the stiff modes excited by rough data;
    afterwards the scheme is Crank-Nicolson. Every `store_every`-th state
    and the final one are kept.
    Raises:
        IntegrationError: If the state stops being finite
    """
    steps, dt = _step_count(T, dt)
    v = np.array(initial_vector(v0, sys), dtype=float)
    b = sys.B

    times = np.arange(steps + 1) * dt
    times[-1] = T
    f = np.asarray(inputs(times), dtype=float)

    kept_times, kept = [0.0], [v.copy()]
    first = 0
    if startup_steps > 0:
        delta = dt / startup_steps
        sub_times = np.arange(1, startup_steps + 1) * delta
        sub_f = np.asarray(inputs(sub_times), dtype=float)
        for fk in sub_f:
            v = solve_tridiagonal(-delta * sys.sub, 1.0 - delta * sys.main, -delta * sys.sup,
                                  v + delta * b * fk)
        first = 1
        if store_every == 1 or steps == 1:
            kept_times.append(times[1])
            kept.append(v.copy())

    lhs_sub, lhs_main, lhs_sup = -0.5 * dt * sys.sub, 1.0 - 0.5 * dt * sys.main, -0.5 * dt * sys.sup
    for k in range(first, steps):
        rhs = v + 0.5 * dt * sys.matvec(v) + 0.5 * dt * b * (f[k] + f[k + 1])
        v = solve_tridiagonal(lhs_sub, lhs_main, lhs_sup, rhs)
        if (k + 1) % store_every == 0 or k + 1 == steps:
            if not np.all(np.isfinite(v)):
                raise IntegrationError("simulate", f"state became non-finite at t={times[k + 1]:.6g}")
            kept_times.append(times[k + 1])
            kept.append(v.copy())

    if not np.all(np.isfinite(kept[-1])):
        raise IntegrationError("simulate", "final state is not finite")
    return Trajectory(np.array(kept_times), np.array(kept))


def _simulate(problem, n_sim, v0, inputs, T, dt, snapshots):
    sys = build_semidiscrete(problem, n_sim)
    steps, _ = _step_count(T, dt)
    return sys, integrate(sys, v0, inputs, T, dt, store_every=max(1, steps // max(1, snapshots)))


def verify(problem, v0, target, inputs, T, n_sim, dt, design_n=None, richardson=True,
           snapshots=VERIFY_SNAPSHOTS, reference=None):
    """
    Simulates `inputs` from v0 on an n_sim grid and measures the distance to
    `target` at time T. The simulated snapshots are kept in the report. With
    `reference`, a function of times giving design-grid states, the largest
    distance between the two along the snapshots is reported too. With
    `richardson`, the run is repeated at dt/2 and the two errors must agree
    to RICHARDSON_TOLERANCE.
    """
    if design_n is not None and int(n_sim) == int(design_n):
        raise ValidationError("simulate", "verification grid must differ from the design grid")
    sys, traj = _simulate(problem, n_sim, v0, inputs, T, dt, snapshots)
    error = float(norm_2d(traj.final - initial_vector(target, sys)))
    report = {"n_sim": int(n_sim), "dt": dt, "terminal_error": error, "final": traj.final,
              "trajectory": traj, "dt_richardson": None}
    if reference is not None:
        design = np.asarray(reference(traj.times), dtype=float)
        gaps = norm_2d(_restrict_reference(traj.states, design.shape[-1]) - design)
        report["snapshot_error"] = float(np.max(gaps))
    if richardson:
        half_sys, half = _simulate(problem, n_sim, v0, inputs, T, dt / 2, 1)
        half_error = float(norm_2d(half.final - initial_vector(target, half_sys)))
        gap = abs(error - half_error)
        passed = gap <= RICHARDSON_TOLERANCE * max(error, half_error) or gap <= 1e-12
        report["dt_richardson"] = {"error_half": half_error, "gap": gap, "passed": passed}
        if not passed:
            log.warning("terminal error changes from %.3g to %.3g when dt is halved",
                        error, half_error)
    log.info("verification on n=%d: terminal error %.6g", n_sim, error)
    return report


def verify_transfer(problem, spec, inputs, n_sim, dt, design_n=None, richardson=True):
    """Terminal error of a transfer input, measured on an independent grid"""
    return verify(problem, spec.u0, spec.uT, inputs, spec.T, n_sim, dt, design_n, richardson)


def _restrict_reference(fine, n):
    """Fine-grid state sampled at the coarse nodes, by index when the grids nest"""
    n_ref = fine.shape[-1]
    if (n_ref + 1) % (n + 1) == 0:
        stride = (n_ref + 1) // (n + 1)
        return fine[..., stride - 1::stride][..., :n]
    x_fine = np.concatenate([[0.0], grid_points(n_ref), [1.0]])
    x = grid_points(n)
    out = np.empty(fine.shape[:-1] + (n,))
    for idx in np.ndindex(fine.shape[:-1]):
        row = fine[idx]
        # boundary values extrapolated linearly from the first and last nodes
        padded = np.concatenate([[2 * row[0] - row[1]], row, [2 * row[-1] - row[-2]]])
        out[idx] = np.interp(x, x_fine, padded)
    return out


def convergence_study(problem, v0, inputs, n_list, T, dt, n_ref=2048, snapshots=20,
                      show_progress=False):
    """
    Sup over snapshot times of ||v_n(t) - v_ref(t)||_2d for every n of n_list,
    plus the errors of the boundary value v_1 and of the trace derivative
    q0 v_1 against the reference.
    Raises:
        ValidationError: If n_ref is below REFERENCE_REFINEMENT times the largest n
    """
    if n_ref < REFERENCE_REFINEMENT * max(n_list):
        raise ValidationError(
            "simulate", f"reference order {n_ref} is below {REFERENCE_REFINEMENT} x {max(n_list)}")
    steps, dt = _step_count(T, dt)
    store_every = max(1, steps // snapshots)
    ref_sys = build_semidiscrete(problem, n_ref)
    ref = integrate(ref_sys, v0, inputs, T, dt, store_every=store_every)
    x_ref = grid_points(n_ref)

    rows = []
    bar = Bar("Convergence", max=len(n_list), suffix="%(percent)d%%") if show_progress else None
    for n in n_list:
        sys = build_semidiscrete(problem, n)
        traj = integrate(sys, v0, inputs, T, dt, store_every=store_every)
        coarse_ref = _restrict_reference(ref.states, sys.n)
        trace_ref = np.array([np.interp(sys.h, x_ref, s) for s in ref.states])
        rows.append({
            "n": int(n),
            "state_error": float(np.max(norm_2d(traj.states - coarse_ref))),
            "trace_error": float(np.max(np.abs(traj.states[:, 0] - trace_ref))),
            "flux_error": float(np.max(np.abs(sys.q0 * traj.states[:, 0]
                                              - ref_sys.q0 * ref.states[:, 0]))),
        })
        if bar:
            bar.next()
    if bar:
        bar.finish()
    return rows
