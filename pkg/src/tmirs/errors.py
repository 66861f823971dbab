"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidState(ValueError):
    pass


class IllegalTransition(ValueError):
    pass


class IncompleteState(ValueError):
    pass


class NoValidActions(ValueError):
    pass


class InvalidTrajectory(ValueError):
    pass


class CorruptCheckpoint(ValueError):
    pass


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss.

    ``snapshot`` holds the parameters at the time of failure and
    ``trajectory`` the offending trajectory, for post-mortem inspection.
    """

    def __init__(self, message, snapshot=None, trajectory=None):
        super().__init__(message)
        self.snapshot = snapshot
        self.trajectory = trajectory


class ConfigError(InvalidArgument):
    """Malformed or inconsistent experiment file."""
