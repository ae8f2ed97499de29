"""
Command-line front end: plans, replays, studies and inspections driven by a
JSON problem file.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .constants import (DEFAULT_DT, DEFAULT_N, DEFAULT_N_SIM, DEFAULT_TOLERANCE,
                        DEFAULT_TRUNCATION, NULL_CONTROL_N, TRUNCATION_LEVELS)
from .discretize import build_semidiscrete, growth_bound, norm_2d
from .errors import PlannerError, ValidationError
from .flatness import coefficient_limit_study, flat_table
from .gevrey import Psi
from .pipeline import level_gaps, plan, plan_transfer
from .problem import CompositeSpec, NullControlSpec, TransferSpec, load_problem
from .report import (display_report, format_report, read_signal, write_levels, write_signal,
                     write_table, write_trajectory)
from .simulate import convergence_study, integrate, zero_input

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNVERIFIED = 2
REPLAY_SNAPSHOTS = 100
PSI_SAMPLES = 201


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON problem file")
    common.add_argument("--n", type=int, default=None,
                        help=f"design grid order ({DEFAULT_N}, {NULL_CONTROL_N} for plan null)")
    common.add_argument("--truncation", type=int, default=DEFAULT_TRUNCATION,
                        help="number of retained input series terms")
    common.add_argument("--n-sim", type=int, default=DEFAULT_N_SIM, help="verification grid order")
    common.add_argument("--dt", type=float, default=DEFAULT_DT, help="time step")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE,
                        help="terminal error accepted by verification")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="paraflat",
                                     description="Flatness-based boundary control planning")
    commands = parser.add_subparsers(dest="command", required=True)

    plan_cmd = commands.add_parser("plan", parents=[common], help="plan an input")
    plan_cmd.add_argument("kind", choices=["transfer", "null", "composite"])
    plan_cmd.add_argument("--no-verify", action="store_true", help="skip the fine-grid check")
    plan_cmd.add_argument("--method", choices=["spectral", "crank_nicolson"], default="spectral",
                          help="smoothed-state propagation for null control")

    sim_cmd = commands.add_parser("simulate", parents=[common], help="replay an input CSV")
    sim_cmd.add_argument("--input", required=True, help="CSV with columns t,value")

    study_cmd = commands.add_parser("study", parents=[common], help="numerical studies")
    study_cmd.add_argument("kind", choices=["convergence", "coefficients", "truncation", "growth"])
    study_cmd.add_argument("--n-list", type=_int_list, default=None,
                           help="comma-separated grid orders")
    study_cmd.add_argument("--n-ref", type=int, default=2048, help="reference grid order")
    study_cmd.add_argument("--samples", type=int, default=20, help="random vectors for growth")

    inspect_cmd = commands.add_parser("inspect", parents=[common], help="dump internals")
    inspect_cmd.add_argument("--what", required=True,
                             choices=["matrix", "table", "coefficients", "psi"])
    return parser


def _leg(task, kind):
    """The task leg the subcommand asks for"""
    if kind == "composite":
        if not isinstance(task, CompositeSpec):
            raise ValidationError("cli", "plan composite needs a composite task")
        return task
    wanted = TransferSpec if kind == "transfer" else NullControlSpec
    if isinstance(task, wanted):
        return task
    if isinstance(task, CompositeSpec):
        return task.transfer if kind == "transfer" else task.null_control
    raise ValidationError("cli", f"configuration holds no {kind} task")


def _initial_state(task):
    if isinstance(task, TransferSpec):
        return task.u0
    if isinstance(task, NullControlSpec):
        return task.u0_tilde
    return (task.transfer.u0, task.null_control.u0_tilde)


def _horizon(task):
    if isinstance(task, TransferSpec):
        return task.T
    if isinstance(task, NullControlSpec):
        return task.tau
    return task.null_control.tau


def run_plan(args, problem, task):
    out = Path(args.out)
    options = {"n": args.n, "truncation": args.truncation, "n_sim": args.n_sim, "dt": args.dt,
               "tolerance": args.tolerance, "check": not args.no_verify,
               "levels": TRUNCATION_LEVELS, "method": args.method}
    result = plan(problem, _leg(task, args.kind), **options)
    write_signal(out / "input.csv", result.signal)
    write_levels(out, result.levels)
    if result.snapshots is not None:
        write_trajectory(out / "u_snapshots.csv", result.snapshots)
    (out / "report.txt").write_text(format_report(result.report) + "\n", encoding="utf-8")
    display_report(result.report)
    return EXIT_UNVERIFIED if result.verified is False else EXIT_OK


def run_simulate(args, problem, task):
    signal = read_signal(args.input)
    T = float(signal.times[-1])
    steps = max(1, int(round(T / args.dt)))
    system = build_semidiscrete(problem, args.n_sim)
    traj = integrate(system, _initial_state(task), signal, T, args.dt,
                     store_every=max(1, steps // REPLAY_SNAPSHOTS))
    write_trajectory(Path(args.out) / "trajectory.csv", traj)
    display_report({"n": system.n, "T": T, "initial_norm": float(traj.norms()[0]),
                    "final_norm": float(traj.norms()[-1])}, "SIMULATION")
    return EXIT_OK


def _study_convergence(args, problem, task):
    transfer = _leg(task, "transfer")
    inputs = plan_transfer(problem, transfer, n=args.n, truncation=args.truncation,
                           dt=args.dt, check=False).evaluator
    rows = convergence_study(problem, transfer.u0, inputs, args.n_list or [25, 50, 100, 200],
                             transfer.T, args.dt, n_ref=args.n_ref, show_progress=True)
    write_table(Path(args.out) / "convergence.csv",
                ["n", "state_error", "trace_error", "flux_error"],
                [[r["n"], r["state_error"], r["trace_error"], r["flux_error"]] for r in rows])
    for r in rows:
        print(f"n={r['n']}: state {r['state_error']:.6g}, trace {r['trace_error']:.6g}, "
              f"flux {r['flux_error']:.6g}")


def _study_coefficients(args, problem, task):
    study = coefficient_limit_study(problem, args.truncation, args.n_list or [64, 128, 256, 512],
                                    show_progress=True)
    out = Path(args.out)
    k = np.arange(study["a"].shape[1])
    rows = [[n, kk, v] for n, row in zip(study["n_list"], study["a"]) for kk, v in zip(k, row)]
    write_table(out / "coefficients.csv", ["n", "k", "value"], rows)
    cauchy = [[n, kk, v] for n, row in zip(study["n_list"][1:], study["cauchy"])
              for kk, v in zip(k, row)]
    write_table(out / "cauchy.csv", ["n", "k", "difference"], cauchy)
    display_report({"R": study["R"], "violations": study["violations"],
                    "underflowed": len(study["underflow"])}, "COEFFICIENT STUDY")


def _study_truncation(args, problem, task):
    kind = {TransferSpec: "transfer", NullControlSpec: "null"}.get(type(task), "composite")
    result = plan(problem, _leg(task, kind), n=args.n, truncation=args.truncation, dt=args.dt,
                  check=False, levels=TRUNCATION_LEVELS)
    out = Path(args.out)
    write_levels(out, result.levels)
    gaps = level_gaps(result.levels)
    write_table(out / "gaps.csv", ["i", "j", "l2_gap"], [[a, b, g] for (a, b), g in gaps.items()])
    for (a, b), gap in gaps.items():
        print(f"||r_{b} - r_{a}||_L2 = {gap:.6g}")


def _study_growth(args, problem, task):
    """Checks ||e^{A t} v|| <= M e^{omega t} ||v|| on random vectors"""
    system = build_semidiscrete(problem, args.n)
    M, omega = growth_bound(system)
    rng = np.random.default_rng(args.seed)
    T = _horizon(task)
    rows = []
    for i in range(args.samples):
        v0 = rng.standard_normal(system.n)
        traj = integrate(system, v0, zero_input, T, args.dt, store_every=10)
        ratio = traj.norms() / (M * np.exp(omega * traj.times) * norm_2d(v0))
        rows.append([i, float(ratio.max())])
    write_table(Path(args.out) / "growth.csv", ["sample", "max_ratio"], rows)
    worst = max(r[1] for r in rows)
    display_report({"M": M, "omega": omega, "worst_ratio": worst, "holds": worst <= 1.0},
                   "GROWTH BOUND")


def run_study(args, problem, task):
    studies = {"convergence": _study_convergence, "coefficients": _study_coefficients,
               "truncation": _study_truncation, "growth": _study_growth}
    studies[args.kind](args, problem, task)
    return EXIT_OK


def run_inspect(args, problem, task):
    out = Path(args.out)
    system = build_semidiscrete(problem, args.n)
    if args.what == "matrix":
        write_table(out / "matrix.csv", ["sub", "main", "super"], system.rows())
        print(f"b_n = {system.b_n:.17g}, B_n[n] = {system.B[-1]:.17g}")
    elif args.what in ("table", "coefficients"):
        tab = flat_table(system, min(args.truncation, system.n))
        if args.what == "table":
            j, k = np.meshgrid(np.arange(1, tab.n + 1), np.arange(tab.K + 1), indexing="ij")
            write_table(out / "table.csv", ["j", "k", "value"],
                        np.column_stack([j.ravel(), k.ravel(), tab.d.ravel()]))
        else:
            write_table(out / "coefficients.csv", ["k", "value"],
                        np.column_stack([np.arange(tab.K + 1), tab.a]))
    else:
        leg = task.transfer if isinstance(task, CompositeSpec) else task
        gamma = leg.gevrey_gamma if isinstance(leg, TransferSpec) else leg.T
        psi = Psi(leg.gevrey_alpha, gamma)
        t = np.linspace(0.0, gamma, PSI_SAMPLES)
        write_table(out / "psi.csv", ["t", "value"], np.column_stack([t, psi(t)]))
    return EXIT_OK


def main(argv=None):
    """
    Returns:
        0 on success or a verified plan, 2 when verification fails, 1 on error,
        usage errors included
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_ERROR
    if args.n is None:
        args.n = NULL_CONTROL_N if getattr(args, "kind", None) == "null" else DEFAULT_N
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    commands = {"plan": run_plan, "simulate": run_simulate, "study": run_study,
                "inspect": run_inspect}
    log.debug("running %s with %s", args.command, args.config)
    try:
        problem, task = load_problem(args.config)
        return commands[args.command](args, problem, task)
    except (PlannerError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
