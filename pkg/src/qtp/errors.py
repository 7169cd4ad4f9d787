"""Exception hierarchy shared by all modules."""


class QTPError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(QTPError, ValueError):
    """Inputs violate a documented precondition."""


class GridError(ValidationError):
    """A grid is too narrow, too coarse, or mismatched between operands."""


class DomainError(ValidationError):
    """An argument lies outside the domain of a function."""


class ConfigError(ValidationError):
    """A configuration file cannot be parsed or fails its schema."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class NumericalError(QTPError, ArithmeticError):
    """A numerical computation failed or produced an invalid result."""


class ConstructionError(NumericalError):
    """An operator cannot be built from the given kernels (zero on shell, zero denominator)."""


class DivergenceError(NumericalError):
    """A quadrature met a non-integrable integrand."""


class NegativeDensityError(NumericalError):
    """A probability density came out negative beyond the clipping tolerance."""


class ConditioningError(NumericalError):
    """Conditioning on an event of (numerically) zero probability."""


class TailWarning(UserWarning):
    """An integrand does not decay at the edges of its grid."""
