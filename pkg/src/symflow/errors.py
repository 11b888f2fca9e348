"""Exception hierarchy shared by all symflow modules."""


class SymflowError(Exception):
    """Base class for every error raised by symflow."""


class ExprSyntaxError(SymflowError, ValueError):
    """Malformed expression text. ``position`` is the 0-based character offset."""

    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        if text:
            message = f"{message} at position {position}\n  {text}\n  {' ' * position}^"
        super().__init__(message)


class UnknownIdentifierError(ExprSyntaxError):
    """Identifier that is neither a declared variable nor a known function."""


class BindingError(SymflowError, ValueError):
    """Expression or field does not match the variables of its owning system."""


class EvaluationError(SymflowError, ArithmeticError):
    """Base for pointwise evaluation failures."""


class DomainError(EvaluationError):
    """log/sqrt of a non-positive value, division by zero, 0 to a negative power, ..."""


class NonFiniteError(EvaluationError):
    """Evaluation overflowed or produced a non-finite value."""


class SamplingError(SymflowError):
    """More than half of the sampled points had to be excluded."""


class DegenerateFieldError(SymflowError, ValueError):
    """Vector field is (numerically) zero where a direction is needed."""


class SingularJacobianError(SymflowError, ArithmeticError):
    """The constants of motion are not functionally independent at the point."""

    def __init__(self, message, condition_number=float("inf"), dependent=()):
        self.condition_number = condition_number
        self.dependent = tuple(dependent)
        super().__init__(message)


class IntegrationFailure(SymflowError, RuntimeError):
    """Step size underflow, step budget exhausted or non-finite state."""


class PreconditionFailed(SymflowError):
    """A check was requested whose premise does not hold."""


class MissingGeneratingFunction(SymflowError, ValueError):
    """A Hamiltonian operation needs G but none was given."""


class ZeroSigmaError(SymflowError, ValueError):
    """A linear rate of the scaling family is zero."""


class SchemaError(SymflowError, ValueError):
    """System file does not match the schema. ``path`` is a JSON pointer."""

    def __init__(self, path, message):
        self.path = path or "/"
        super().__init__(f"{self.path}: {message}")
