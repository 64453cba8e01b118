"""Exception types shared across qbclab."""


class QbclabError(Exception):
    """Base class for all library errors."""


class ValidationError(QbclabError, ValueError):
    """An input violates a documented invariant (trace, hermiticity, shapes...)."""


class DimensionError(QbclabError, ValueError):
    """Operator shape does not match the requested factorization."""


class CapacityError(QbclabError, RuntimeError):
    """A composite dimension or enumeration would exceed the configured cap."""


class DomainError(QbclabError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class PartialNetError(QbclabError, RuntimeError):
    """Net construction ran out of budget before reaching the target radius."""

    def __init__(self, message, net=None, radius=float("inf")):
        super().__init__(message)
        self.net = net
        self.radius = radius


class ConstructionError(QbclabError, RuntimeError):
    """A combinatorial object could not be built (e.g. an empty typical set)."""


class ExperimentError(QbclabError, RuntimeError):
    """An experiment failed part-way; ``report`` holds the rows finished so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
