"""Detection-time probabilities, detector models and non-classicality measures."""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConditioningError,
    ConfigError,
    ConstructionError,
    DivergenceError,
    DomainError,
    GridError,
    NegativeDensityError,
    NumericalError,
    QTPError,
    TailWarning,
    ValidationError,
)
