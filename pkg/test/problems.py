"""
Problems shared by the test modules.
"""
import os

from paraflat.problem import ParabolicProblem, PiecewiseSmoothFn, load_problem

PIECEWISE_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                "configs", "piecewise.json")


def piecewise():
    """The piecewise problem with its composite task"""
    return load_problem(PIECEWISE_CONFIG)


def constant_problem(theta=1.0, sigma=0.0, lam=0.0, alpha0=1.0, beta0=0.0, alpha1=0.0, beta1=1.0):
    """Constant coefficients; defaults to a Neumann left end and input u(1) = f"""
    return ParabolicProblem(theta=PiecewiseSmoothFn.constant(theta),
                            sigma=PiecewiseSmoothFn.constant(sigma),
                            lam=PiecewiseSmoothFn.constant(lam),
                            alpha0=alpha0, beta0=beta0, alpha1=alpha1, beta1=beta1)
