"""Exception types raised by the update machinery."""


class GermMismatchError(ValueError):
    """Two random vectors cannot be combined on a common germ."""


class UnisolventError(ValueError):
    """The collocation points do not determine the interpolant."""


class RankDeficiencyError(ValueError):
    """A least-squares design matrix lost column rank."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ModelEvaluationError(RuntimeError):
    """A forward-model call failed at a particular germ point."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ConvergenceError(RuntimeError):
    """Newton iteration did not reach the requested tolerance."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class EstimationError(RuntimeError):
    """An estimated moment matrix is too far from a valid covariance."""


class EvidenceError(ValueError):
    """The posterior normalising constant vanished."""


class ConfigError(ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
