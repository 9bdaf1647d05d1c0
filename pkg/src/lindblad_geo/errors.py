"""Exception hierarchy.  Every error carries a CLI exit code."""


class LindbladGeoError(Exception):
    exit_code = 3


class ModelDomainError(LindbladGeoError, ValueError):
    """Input outside the model's domain of validity."""

    exit_code = 4


class InvalidParameters(ModelDomainError):
    pass


class PolarSingularity(ModelDomainError):
    """Colatitude left the chart band around the poles."""


class NotIntegrable(ModelDomainError):
    """Operation needs gamma_minus == 0."""


class DomainError(ModelDomainError):
    pass


class CurvatureBlowup(ModelDomainError):
    pass


class NoBarrier(ModelDomainError):
    """|Gamma - gamma_plus| < 2: no singular parallels."""


class GrusinDegenerate(ModelDomainError):
    pass


class BranchError(ModelDomainError):
    pass


class NumericalFailure(LindbladGeoError):
    exit_code = 3


class SwitchingSurface(NumericalFailure):
    """The order-zero field is undefined: Q fell below the guard."""


class StepFailure(NumericalFailure):
    pass


class NotPeriodic(NumericalFailure):
    pass


class ConfigError(LindbladGeoError):
    exit_code = 2
