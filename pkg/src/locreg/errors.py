"""Exception hierarchy.

Two broad families matter for callers (and for the CLI exit codes):
``DataError`` for malformed or insufficient input, ``NumericalError`` for
estimation or linear-algebra failures on otherwise valid input.
"""


class LocregError(Exception):
    """Base class for all library errors."""


class DataError(LocregError):
    """Invalid, malformed or insufficient input data."""


class NumericalError(LocregError):
    """A numerical procedure failed or produced a degenerate result."""


class EmptySample(DataError):
    """A sample with no curves was supplied."""


class DegenerateMu(DataError):
    """Mean number of observations is <= e, so the window-size rule is undefined."""


class LagTooLarge(DataError):
    """The difference lags 8k-7 exceed the window size K0."""


class CurveTooShort(DataError):
    """Curve has too few observations for the requested operation."""


class EmptySn(DataError):
    """A curve contributes no successive differences to the variance estimate."""


class NegativeVariance(DataError):
    """A negative noise variance was requested."""


class NonFiniteInput(DataError):
    """Non-finite values encountered inside a fitting window."""


class LengthMismatch(DataError):
    """Paired sequences have different lengths."""


class ZeroDenominator(DataError):
    """The denominator of a ratio is zero."""


class FormatError(DataError):
    """A data file could not be parsed; carries row/line diagnostics."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NoEffectiveCurves(NumericalError):
    """No curve satisfies the selection event at this point."""


class MaxDerivativeExceeded(NumericalError):
    """The iterative regularity search hit the maximum derivative order."""


class ZeroHolderConstant(NumericalError):
    """The local Hoelder constant estimate is zero; no plug-in constant exists."""


class CholeskyFailure(NumericalError):
    """Covariance matrix not numerically positive definite after jitter retries."""
