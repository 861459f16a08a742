"""Exception types shared across the package."""


class RipscovError(Exception):
    """Base class for package errors."""


class ParameterError(RipscovError, ValueError):
    """An argument violates a documented precondition."""


class SimplexBudgetError(RipscovError):
    """Simplex enumeration exceeded its configured budget."""

    def __init__(self, budget: int, dimension_reached: int, count: int):
        self.budget = budget
        self.dimension_reached = dimension_reached
        self.count = count
        super().__init__(
            f"simplex budget {budget} exceeded at dimension "
            f"{dimension_reached} ({count} simplices so far)"
        )


class OracleRefusedError(RipscovError):
    """Brute-force oracle refused an input too large to enumerate."""


class DegenerateSimplexError(RipscovError):
    """Negative power applied to a zero-volume simplex."""

    def __init__(self, simplex, alpha):
        self.simplex = tuple(int(v) for v in simplex)
        self.alpha = alpha
        super().__init__(
            f"zero-volume simplex {self.simplex} contributes +inf at power {alpha}"
        )


class NumericalError(RipscovError):
    """A floating-point result fell outside its plausibility tolerance."""


class MissingMomentError(RipscovError, KeyError):
    """A covariance build referenced a moment key absent from the table."""

    def __init__(self, key):
        self.key = key
        super().__init__(f"moment table has no entry for {key}")


class StructureViolationError(RipscovError):
    """A matrix violated the structure implied by its regime/sequence."""


class NearSingularError(RipscovError):
    """Matrix too close to singular for a requested inversion."""


class NotPositiveDefiniteError(RipscovError):
    """Cholesky input is not positive definite.

    Carries a witness vector x with x^T A x <= 0.
    """

    def __init__(self, pivot: float, witness):
        self.pivot = pivot
        self.witness = witness
        super().__init__(f"matrix is not positive definite (pivot {pivot:.3e})")


class InsufficientDataError(RipscovError):
    """Not enough trials/samples to form the requested statistic."""


class ConfigError(RipscovError):
    """Invalid or unparsable experiment configuration."""
