"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to.
"""


class GradReduceError(Exception):
    exit_code = 10


class ConfigInvalid(GradReduceError):
    exit_code = 1


class ContractionViolated(GradReduceError):
    exit_code = 2


class CheckFailed(GradReduceError):
    """A ``--assert`` check of the CLI did not hold."""

    exit_code = 3


class SlopeAssertionFailed(CheckFailed):
    pass


class BlowUp(GradReduceError):
    exit_code = 4


class NoConvergence(GradReduceError):
    exit_code = 5


class MaxIterations(NoConvergence):
    pass


class CflViolation(GradReduceError):
    exit_code = 6


class BoxTooSmall(GradReduceError):
    exit_code = 7


class SupportMismatch(GradReduceError):
    exit_code = 8


class NonPositiveDensity(GradReduceError):
    exit_code = 8


class StabilityGuard(GradReduceError):
    exit_code = 9
