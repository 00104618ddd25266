class RuinError(ValueError):
    """A portfolio's growth factor relative to the market became nonpositive."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NotConcaveError(ValueError):
    """Raised when a generator produces weights outside the closed simplex."""


class InfeasibleProblemError(ValueError):
    """No point satisfying the optimization constraints could be found."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
