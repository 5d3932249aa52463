"""Exception hierarchy shared by all modules."""


class DichequivError(Exception):
    """Base class for library errors."""


class ContractionViolated(DichequivError):
    """Backward continuation requested where ||A^-1(k)|| gamma(k) >= 1."""


class NoConvergence(DichequivError):
    """An iteration hit its cap before reaching the requested tolerance."""


class TailUnbounded(DichequivError):
    """An infinite series could not be shown to converge."""


class MissingEnvelope(DichequivError):
    """A required bounding sequence was not supplied."""


class MissingDerivative(DichequivError):
    """The perturbation does not provide a derivative of the requested order."""


class SingularJacobian(DichequivError):
    """Jacobian of G is numerically singular."""


class PolicyRejected(DichequivError):
    """Truncation policy cannot meet its tolerance budget."""


class OrderOverflow(DichequivError):
    """A derivation step would leave the declared order r."""


class InvalidParams(DichequivError):
    """Scenario parameters violate a defining constraint."""


class PreconditionFailed(DichequivError):
    """A suite was asked to run on a scenario whose hypotheses fail."""

    def __init__(self, condition, detail=""):
        self.condition = condition
        self.detail = detail
        msg = f"precondition {condition} not satisfied"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ConfigError(DichequivError):
    """Malformed scenario configuration."""
