"""
Exceptions raised by the planner components.
"""


class PlannerError(Exception):
    """Base error; the message is prefixed with the component that raised it"""

    def __init__(self, component, message):
        super().__init__(f"{component}: {message}")
        self.component = component
        self.detail = message


class ConfigParseError(PlannerError):
    """Malformed configuration file or piece expression"""


class ValidationError(PlannerError, ValueError):
    """A type invariant does not hold"""


class DegenerateDiscretizationError(PlannerError, ValueError):
    """A boundary-stencil denominator vanishes for the requested order"""


class SingularSystemError(PlannerError):
    """Tridiagonal solve hit a vanishing pivot"""


class OffDiagonalSignError(PlannerError, ValueError):
    """An off-diagonal entry of A_n is not positive, so no symmetrizer exists"""


class JetOrderError(PlannerError, ValueError):
    """A jet is shorter than the order the computation needs"""


class QuadratureError(PlannerError):
    """Adaptive quadrature did not reach its tolerance"""


class SeriesConvergenceError(PlannerError):
    """Endpoint power series did not converge within the term cap"""


class MagnitudeOverflowError(PlannerError):
    """A derivative jet entry exceeded the representable magnitude limit"""


class HorizonMismatchError(PlannerError, ValueError):
    """The two legs of a composite plan do not share the horizon"""


class IntegrationError(PlannerError):
    """Time integration failed"""
