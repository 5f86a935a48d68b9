"""Exception types shared across the package."""


class DualbootError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(DualbootError):
    """Array lengths or feature dimensions disagree."""


class ZeroWeight(DualbootError):
    """A group's probability column sums to zero."""

    def __init__(self, group):
        self.group = group
        super().__init__(f"probability column for group {group!r} sums to zero")


class NotConverged(DualbootError):
    """The fitter exhausted its iteration budget."""

    def __init__(self, message, last_model=None):
        self.last_model = last_model
        super().__init__(message)


class SeparableData(DualbootError):
    """Perfect separation detected: coefficients diverge."""


class RankDeficient(DualbootError):
    """Weighted normal equations are singular and no ridge was requested."""


class InsufficientDraws(DualbootError):
    """Too few bootstrap draws for the requested interval level."""


class TooManyFailedDraws(DualbootError):
    """More than the tolerated fraction of bootstrap draws failed."""

    def __init__(self, failed, total):
        self.failed = failed
        self.total = total
        super().__init__(f"{failed} of {total} bootstrap draws failed")


class SingularBread(DualbootError):
    """The estimating-equation Jacobian is numerically singular."""


class NegativeVariance(DualbootError):
    """A variance quadratic form came out negative beyond tolerance."""


class DegenerateInputs(DualbootError):
    """Both the geolocation prior and the surname likelihood are all zero."""


class ReplicateCountMismatch(DualbootError):
    """A variance-replicate matrix does not have exactly 80 rows."""


class AllZeroDraw(DualbootError):
    """Every clamped entry of a sampled prior vector is zero."""


class MissingGeoid(DualbootError):
    """A record references a geoid absent from the prior table."""

    def __init__(self, geoid):
        self.geoid = geoid
        super().__init__(f"geoid {geoid!r} not found in the prior table")


class InfeasibleSpec(DualbootError):
    """A synthetic-census spec is internally contradictory."""


class InfeasibleTarget(DualbootError):
    """A concentration target cannot be reached from the given bundle."""


class SchemaError(DualbootError):
    """An input file violates its documented schema."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
