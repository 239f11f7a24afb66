"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 2,
NumericalError -> 3, anything raised as OSError/IOError -> 4.
"""


class SurvStackError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SurvStackError):
    """Bad input data, configuration, or precondition violation."""


class NumericalError(SurvStackError):
    """A solver failed: non-convergence, singular system, separation."""


class DegenerateEnsembleError(NumericalError):
    """All meta-regression coefficients are zero; callers apply a fallback."""


class LearnerError(SurvStackError):
    """A candidate learner could not be fitted or queried."""
