"""Exception hierarchy shared by every fwformer module."""

from typing import Any


class FWFormerError(Exception):
    """Base class for all fwformer errors."""


class DimensionError(FWFormerError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(FWFormerError, ValueError):
    """A documented precondition of an operation does not hold."""


class EmptyInputError(ContractError):
    """An operation received an empty batch, stream or sequence."""


class NumericalError(FWFormerError, ArithmeticError):
    """An operation would have produced NaN or Inf."""


class ConfigError(FWFormerError, ValueError):
    """Invalid configuration value, file or path."""


class FormatError(FWFormerError, ValueError):
    """Malformed serialized input.

    Args:
        message: What is wrong with the input.
        offset: Byte offset (binary formats) or line number (text formats)
            where the problem was found.
    """

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class TrainingError(FWFormerError, RuntimeError):
    """Training cannot continue; ``diagnostics`` describes the failing step."""

    def __init__(self, message: str, diagnostics: dict[str, Any]) -> None:
        details = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        super().__init__(f"{message} [{details}]")
        self.diagnostics = diagnostics
