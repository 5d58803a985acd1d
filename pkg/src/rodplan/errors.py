"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Incompatible degrees, domains or array shapes."""


class DomainError(ValueError):
    """A parameter lies outside the domain of a surface or operation."""


class SingularityError(ArithmeticError):
    """Euler-angle rate map evaluated too close to gimbal lock."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ValidationError(ValueError):
    """Inconsistent scenario or configuration."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class EvaluationError(RuntimeError):
    """An objective or constraint evaluator failed or returned non-finite values."""

    def __init__(self, message, x=None, index=None):
        super().__init__(message)
        self.x = x
        self.index = index
