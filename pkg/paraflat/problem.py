"""
This module defines the boundary-controlled parabolic problem: piecewise-smooth
coefficients, boundary parameters, task horizons and endpoint states, and the
JSON configuration loader.
"""

import json
import logging
from tokenize import TokenError

import numpy as np
import sympy
from scipy import optimize
from sympy.parsing.sympy_parser import (convert_xor, parse_expr,
                                        standard_transformations)

from .constants import THETA_SAMPLES_PER_PIECE
from .errors import ConfigParseError, HorizonMismatchError, ValidationError

log = logging.getLogger(__name__)

X = sympy.Symbol("x", real=True)
ALLOWED_FUNCTIONS = (sympy.exp, sympy.sin, sympy.cos)
STATE_KINDS = ("zero", "steady_state", "profile")
TASK_KINDS = ("transfer", "null_control", "composite")


def _as_float_array(value, x):
    return np.asarray(value, dtype=float) + np.zeros_like(x, dtype=float)


class Piece:
    """One closed-form evaluator with its first and second derivatives"""

    def __init__(self, func, deriv, deriv2=None, expr=None):
        self.func = func
        self.deriv = deriv
        self.deriv2 = deriv2
        self.expr = expr

    @classmethod
    def from_expr(cls, text):
        """
        Parses a piece-grammar string (infix arithmetic over x with exp, sin,
        cos and the constant pi; '^' is a power).
        Raises:
            ConfigParseError: If the text is not in the grammar
        """
        try:
            expr = parse_expr(str(text), local_dict={"x": X},
                              transformations=standard_transformations + (convert_xor,))
        except (SyntaxError, TypeError, sympy.SympifyError, TokenError) as e:
            raise ConfigParseError("problem", f"cannot parse piece '{text}': {e}") from e

        if not isinstance(expr, sympy.Expr):
            raise ConfigParseError("problem", f"piece '{text}' is not an expression")
        stray = expr.free_symbols - {X}
        if stray:
            names = ", ".join(sorted(str(s) for s in stray))
            raise ConfigParseError("problem", f"piece '{text}' uses unknown names: {names}")
        for fn in expr.atoms(sympy.Function):
            if not isinstance(fn, ALLOWED_FUNCTIONS):
                raise ConfigParseError(
                    "problem", f"piece '{text}' uses {fn.func}; only exp, sin, cos are allowed")

        d1 = sympy.diff(expr, X)
        d2 = sympy.diff(d1, X)
        funcs = [sympy.lambdify(X, e, "numpy") for e in (expr, d1, d2)]
        return cls(*funcs, expr=str(text))

    @classmethod
    def from_callable(cls, func, deriv, deriv2=None):
        """Wraps arbitrary user callables (library API only, not serializable)"""
        return cls(func, deriv, deriv2)

    def value(self, x):
        return _as_float_array(self.func(x), x)

    def derivative(self, x):
        return _as_float_array(self.deriv(x), x)

    def second_derivative(self, x):
        if self.deriv2 is None:
            raise ValidationError("problem", "piece has no second derivative")
        return _as_float_array(self.deriv2(x), x)


class PiecewiseSmoothFn:
    """
    A function on [0,1] given by breakpoints and one Piece per interval.
    Evaluation is right-continuous: a breakpoint belongs to the piece on its
    right, and x=1 belongs to the last piece.
    """

    def __init__(self, breakpoints, pieces):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.pieces = tuple(pieces)
        self._validate()

    def _validate(self):
        b = self.breakpoints
        if b.ndim != 1 or len(b) < 2:
            raise ValidationError("problem", "need at least the breakpoints 0 and 1")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise ValidationError("problem", "breakpoints must start at 0 and end at 1")
        if np.any(np.diff(b) <= 0):
            raise ValidationError("problem", "breakpoints must be strictly increasing")
        if len(self.pieces) != len(b) - 1:
            raise ValidationError(
                "problem", f"{len(b) - 1} intervals but {len(self.pieces)} pieces")
        for i, piece in enumerate(self.pieces):
            ends = np.array([b[i], b[i + 1]])
            with np.errstate(all="ignore"):
                vals = np.concatenate([piece.value(ends), piece.derivative(ends)])
            if not np.all(np.isfinite(vals)):
                raise ValidationError(
                    "problem", f"piece {i} on [{b[i]}, {b[i + 1]}] is not C1 on its closure")

    @classmethod
    def constant(cls, c):
        return cls([0.0, 1.0], [Piece.from_expr(repr(float(c)))])

    @classmethod
    def from_config(cls, entries):
        """Builds the function from a list of {"from", "to", "expr"} entries"""
        if not entries:
            raise ConfigParseError("problem", "empty piece list")
        try:
            entries = sorted(entries, key=lambda e: float(e["from"]))
            breakpoints = [float(entries[0]["from"])]
            for entry in entries:
                if float(entry["from"]) != breakpoints[-1]:
                    raise ValidationError(
                        "problem", f"pieces are not contiguous at {breakpoints[-1]}")
                breakpoints.append(float(entry["to"]))
            pieces = [Piece.from_expr(entry["expr"]) for entry in entries]
        except (KeyError, TypeError) as e:
            raise ConfigParseError("problem", f"bad piece entry: {e}") from e
        return cls(breakpoints, pieces)

    def to_config(self):
        entries = []
        for i, piece in enumerate(self.pieces):
            if piece.expr is None:
                raise ValidationError("problem", "callable pieces cannot be serialized")
            entries.append({"from": float(self.breakpoints[i]),
                            "to": float(self.breakpoints[i + 1]),
                            "expr": piece.expr})
        return entries

    @property
    def interior_breakpoints(self):
        return self.breakpoints[1:-1]

    def piece_index(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def _evaluate(self, x, method):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = self.piece_index(x)
        out = np.empty_like(x)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = getattr(piece, method)(x[mask])
        return float(out[0]) if scalar else out

    def __call__(self, x):
        return self._evaluate(x, "value")

    def derivative(self, x):
        return self._evaluate(x, "derivative")

    def second_derivative(self, x):
        return self._evaluate(x, "second_derivative")

    def minimum(self):
        """Infimum over [0,1]: endpoints, a sample grid and a bounded search per piece"""
        lowest = np.inf
        for i, piece in enumerate(self.pieces):
            a, b = self.breakpoints[i], self.breakpoints[i + 1]
            grid = np.linspace(a, b, THETA_SAMPLES_PER_PIECE)
            vals = piece.value(grid)
            lowest = min(lowest, float(np.min(vals)))
            res = optimize.minimize_scalar(lambda s, p=piece: float(p.value(s)),
                                           bounds=(a, b), method="bounded")
            if res.success:
                lowest = min(lowest, float(res.fun))
        return lowest


def eval_coeff(f, x):
    """Value of a coefficient under the right-continuous convention"""
    return f(x)


def eval_coeff_deriv(f, x):
    return f.derivative(x)


def eval_coeff_deriv2(f, x):
    return f.second_derivative(x)


class ParabolicProblem:
    """
    u_t = theta u_xx + sigma u_x + lam u on the unit rod with
    alpha0 u_x(0) + beta0 u(0) = 0 and alpha1 u_x(1) + beta1 u(1) = f.
    """

    def __init__(self, theta, sigma, lam, alpha0, beta0, alpha1, beta1):
        inf_theta = theta.minimum()
        if not inf_theta > 0:
            raise ValidationError(
                "problem", f"theta must be positive on [0,1] (inf theta = {inf_theta:.6g})")
        if alpha0 == 0 and beta0 == 0:
            raise ValidationError("problem", "left boundary pair (alpha0, beta0) is (0, 0)")
        if alpha1 == 0 and beta1 == 0:
            raise ValidationError("problem", "right boundary pair (alpha1, beta1) is (0, 0)")
        self.theta = theta
        self.sigma = sigma
        self.lam = lam
        self.alpha0 = alpha0
        self.beta0 = beta0
        self.alpha1 = alpha1
        self.beta1 = beta1

    @property
    def interface_points(self):
        points = set()
        for f in (self.theta, self.sigma, self.lam):
            points.update(float(b) for b in f.interior_breakpoints)
        return frozenset(points)


class EndpointState:
    """Initial or final state of a transfer: zero, a steady state, or an explicit profile"""

    def __init__(self, kind, f_ss=0.0, profile=None):
        if kind not in STATE_KINDS:
            raise ValidationError("problem", f"unknown state kind '{kind}'")
        if kind == "profile" and profile is None:
            raise ValidationError("problem", "profile state needs a profile")
        self.kind = kind
        self.f_ss = f_ss
        self.profile = profile

    def _key(self):
        return self.kind, self.f_ss, self.profile

    def __eq__(self, other):
        if not isinstance(other, EndpointState):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"EndpointState({self.kind!r}, f_ss={self.f_ss})"

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def steady(cls, f_ss):
        return cls("steady_state", f_ss=float(f_ss))


class TransferSpec:
    """Move the rod from u0 to uT in time T; Gamma defaults to T"""

    def __init__(self, T, u0, uT, gevrey_alpha=1.5, gevrey_gamma=None):
        if not T > 0:
            raise ValidationError("problem", f"transfer horizon T must be positive, got {T}")
        if not 1 < gevrey_alpha < 2:
            raise ValidationError("problem", f"gevrey_alpha must lie in (1,2), got {gevrey_alpha}")
        if gevrey_gamma is None:
            gevrey_gamma = T
        if not 0 < gevrey_gamma <= T:
            raise ValidationError(
                "problem", f"gevrey_gamma must lie in (0, T={T}], got {gevrey_gamma}")
        self.T = T
        self.u0 = u0
        self.uT = uT
        self.gevrey_alpha = gevrey_alpha
        self.gevrey_gamma = gevrey_gamma

    def _key(self):
        return self.T, self.u0, self.uT, self.gevrey_alpha, self.gevrey_gamma

    def __eq__(self, other):
        if not isinstance(other, TransferSpec):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"TransferSpec(T={self.T}, u0={self.u0!r}, uT={self.uT!r})"


class NullControlSpec:
    def __init__(self, tau, s, u0_tilde, gevrey_alpha=1.5):
        if not 0 < s < tau:
            raise ValidationError("problem", f"need 0 < s < tau, got s={s}, tau={tau}")
        if not 1 < gevrey_alpha < 2:
            raise ValidationError("problem", f"gevrey_alpha must lie in (1,2), got {gevrey_alpha}")
        self.tau = tau
        self.s = s
        self.u0_tilde = u0_tilde
        self.gevrey_alpha = gevrey_alpha

    @property
    def T(self):
        """Length of the control window after the free evolution"""
        return self.tau - self.s


class CompositeSpec:
    def __init__(self, transfer, null_control):
        if abs(transfer.T - null_control.tau) > 1e-12:
            raise HorizonMismatchError(
                "problem", f"transfer T={transfer.T} differs from null tau={null_control.tau}")
        self.transfer = transfer
        self.null_control = null_control


def _state_from_config(entry):
    kind = entry.get("kind")
    if kind == "zero":
        return EndpointState.zero()
    if kind == "steady_state":
        return EndpointState.steady(entry["f_ss"])
    if kind in ("profile", "explicit_profile"):
        return EndpointState("profile", profile=PiecewiseSmoothFn.from_config(entry["pieces"]))
    raise ConfigParseError("problem", f"unknown state kind '{kind}'")


def _state_to_config(state):
    if state.kind == "zero":
        return {"kind": "zero"}
    if state.kind == "steady_state":
        return {"kind": "steady_state", "f_ss": state.f_ss}
    return {"kind": "profile", "pieces": state.profile.to_config()}


def _task_from_config(task):
    kind = task.get("kind")
    if kind == "transfer":
        return TransferSpec(T=float(task["T"]),
                            u0=_state_from_config(task.get("u0", {"kind": "zero"})),
                            uT=_state_from_config(task.get("uT", {"kind": "zero"})),
                            gevrey_alpha=float(task.get("gevrey_alpha", 1.5)),
                            gevrey_gamma=task.get("gevrey_gamma"))
    if kind == "null_control":
        return NullControlSpec(tau=float(task["tau"]), s=float(task["s"]),
                               u0_tilde=PiecewiseSmoothFn.from_config(task["u0_tilde"]),
                               gevrey_alpha=float(task.get("gevrey_alpha", 1.5)))
    if kind == "composite":
        return CompositeSpec(transfer=_task_from_config({**task["transfer"], "kind": "transfer"}),
                             null_control=_task_from_config(
                                 {**task["null_control"], "kind": "null_control"}))
    raise ConfigParseError("problem", f"unknown task kind '{kind}', expected one of {TASK_KINDS}")


def _task_to_config(task):
    if isinstance(task, TransferSpec):
        return {"kind": "transfer", "T": task.T, "u0": _state_to_config(task.u0),
                "uT": _state_to_config(task.uT), "gevrey_alpha": task.gevrey_alpha,
                "gevrey_gamma": task.gevrey_gamma}
    if isinstance(task, NullControlSpec):
        return {"kind": "null_control", "tau": task.tau, "s": task.s,
                "u0_tilde": task.u0_tilde.to_config(), "gevrey_alpha": task.gevrey_alpha}
    return {"kind": "composite", "transfer": _task_to_config(task.transfer),
            "null_control": _task_to_config(task.null_control)}


def load_problem_dict(config):
    """
    Builds and validates a problem and its task from a configuration dictionary.
    Returns:
        (ParabolicProblem, TransferSpec | NullControlSpec | CompositeSpec)
    Raises:
        ConfigParseError: On missing keys or unparseable pieces
        ValidationError: When a type invariant is violated
    """
    try:
        bc = config["bc"]
        problem = ParabolicProblem(
            theta=PiecewiseSmoothFn.from_config(config["theta"]),
            sigma=PiecewiseSmoothFn.from_config(config["sigma"]),
            lam=PiecewiseSmoothFn.from_config(config["lambda"]),
            alpha0=float(bc["alpha0"]), beta0=float(bc["beta0"]),
            alpha1=float(bc["alpha1"]), beta1=float(bc["beta1"]))
        task = _task_from_config(config["task"])
    except KeyError as e:
        raise ConfigParseError("problem", f"missing key {e}") from e
    except (TypeError, AttributeError) as e:
        raise ConfigParseError("problem", f"malformed configuration: {e}") from e
    log.debug("loaded problem with interface points %s", sorted(problem.interface_points))
    return problem, task


def load_problem(path):
    """Reads a JSON problem file"""
    try:
        with open(path, encoding="utf-8") as handle:
            config = json.load(handle)
    except json.JSONDecodeError as e:
        raise ConfigParseError("problem", f"{path} is not valid JSON: {e}") from e
    except OSError as e:
        raise ConfigParseError("problem", f"cannot read {path}: {e}") from e
    if not isinstance(config, dict):
        raise ConfigParseError("problem", f"{path} must hold a JSON object")
    return load_problem_dict(config)


def dump_problem(problem, task):
    """Serializes a problem and task back to the configuration dictionary"""
    return {
        "theta": problem.theta.to_config(),
        "sigma": problem.sigma.to_config(),
        "lambda": problem.lam.to_config(),
        "bc": {"alpha0": problem.alpha0, "beta0": problem.beta0,
               "alpha1": problem.alpha1, "beta1": problem.beta1},
        "task": _task_to_config(task),
    }
