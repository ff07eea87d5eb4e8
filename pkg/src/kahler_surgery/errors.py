"""Exception hierarchy shared by all modules."""


class SurgeryLabError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SurgeryLabError, ValueError):
    pass


class NotAmpleError(SurgeryLabError, ValueError):
    pass


class InconsistentBankError(SurgeryLabError):
    """A zero-pairing curve is not a (-1)-curve: the bank cannot generate the Mori cone."""


class InvariantViolationError(SurgeryLabError):
    pass


class LatticeDiagnosticError(SurgeryLabError):
    """The class hit the volume boundary before any curve pairing vanished."""


class UnsupportedPresentationError(SurgeryLabError):
    pass


class MisuseError(SurgeryLabError, ValueError):
    pass


class ProfileError(SurgeryLabError, ValueError):
    pass


class DegenerateMetricError(ProfileError):
    """Non-positive radial eigenvalue (phi not strictly increasing)."""


class PreconditionError(SurgeryLabError, ValueError):
    pass


class DivergedError(SurgeryLabError):
    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class NonConvergenceError(SurgeryLabError):
    pass


class ReduceEpsError(SurgeryLabError, ValueError):
    pass


class ConfigurationError(SurgeryLabError, ValueError):
    pass


class InsufficientDataError(SurgeryLabError):
    pass


class ApexUnreachableError(SurgeryLabError):
    pass


class DisconnectedGraphError(SurgeryLabError):
    pass


class CorrespondenceError(SurgeryLabError, ValueError):
    pass
