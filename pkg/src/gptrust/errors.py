"""Exception hierarchy shared by the library and the CLI."""


class GPTrustError(Exception):
    """Base class for every error raised by gptrust."""


class InputError(GPTrustError, ValueError):
    """Malformed or inconsistent user input (shapes, ranges, parse failures)."""


class NumericalError(GPTrustError, ArithmeticError):
    """A factorization or consistency check failed numerically."""

    def __init__(self, message, jitter_ladder=None):
        super().__init__(message)
        self.jitter_ladder = list(jitter_ladder) if jitter_ladder is not None else []


class FitError(GPTrustError):
    """Every optimizer restart failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class DegenerateError(GPTrustError, ValueError):
    """A computation is undefined for the given data (single-class ROC, zero prior variance)."""
