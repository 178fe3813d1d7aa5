from typing import Iterable, Optional


class DesignError(Exception):
    """
    Raíz de todos los errores del dominio de diseño óptimo.
    """


class InvalidArgumentError(DesignError, ValueError):
    """Precondition or dimension violation."""


class DegenerateDesignError(DesignError, ValueError):
    """An operation would leave a design without support."""


class NumericDomainError(DesignError, ArithmeticError):
    """
    A model produced a non-finite value.

    The message names the model and the offending inputs. `context` is filled
    in by callers that know which comparison (i, j, k) triggered the fit.
    """

    def __init__(self, message: str, context: Optional[str] = None):
        self.detail = message
        self.context = context
        super().__init__(message if context is None else f"{context}: {message}")

    def with_context(self, context: str) -> "NumericDomainError":
        return NumericDomainError(self.detail, context=context)


class InvalidStartError(DesignError, ValueError):
    """T_P of the starting design is zero."""

    def __init__(self, message: str, comparisons: Iterable[str] = ()):
        self.comparisons = list(comparisons)
        super().__init__(message)


class ExprSyntaxError(DesignError, ValueError):
    """
    Syntax error in a model expression.

    Args:
        message: Human readable description.
        position: 0-based character offset in the source.
        expected: Set of token kinds that would have been accepted.
    """

    def __init__(self, message: str, position: int, expected: Iterable[str] = ()):
        self.position = position
        self.expected = frozenset(expected)
        hint = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at offset {position}{hint}")


class UnknownIdentifierError(ExprSyntaxError):
    """Identifier outside {x, t1..td, exp, log, xlogy}."""


class ConfigError(DesignError, ValueError):
    """Problem configuration could not be read or validated."""

    def __init__(self, message: str, diagnostics: Iterable[str] = ()):
        self.diagnostics = list(diagnostics)
        body = message if not self.diagnostics else message + "\n  " + "\n  ".join(self.diagnostics)
        super().__init__(body)
