"""Desk-scale spiking transformer with interchangeable token-mixing heads.

Note: Imports of the model, runner and profiler are lazy so that config
parsing and the error types load without building the numerical stack.
"""

from fwformer.errors import (
    ConfigError,
    ContractError,
    DimensionError,
    EmptyInputError,
    FormatError,
    FWFormerError,
    NumericalError,
    TrainingError,
)
from fwformer.shared import (
    EpochMetrics,
    LIFParams,
    MixerKind,
    MixerSpec,
    ModelConfig,
    RunConfig,
    Shortcut,
    StepResult,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "EmptyInputError",
    "EpochMetrics",
    "FWFormerError",
    "FormatError",
    "LIFParams",
    "MixerKind",
    "MixerSpec",
    "ModelConfig",
    "NumericalError",
    "RunConfig",
    "Shortcut",
    "StepResult",
    "TrainingError",
]


def __getattr__(name: str) -> object:
    """Lazy import heavy modules."""
    if name == "FWFormer":
        from fwformer.model import FWFormer

        return FWFormer
    if name == "load_checkpoint":
        from fwformer.model import load_checkpoint

        return load_checkpoint
    if name == "run_training":
        from fwformer.runner import run_training

        return run_training
    if name == "total_energy":
        from fwformer.profiler import total_energy

        return total_energy
    if name == "count_ops":
        from fwformer.heads import count_ops

        return count_ops
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
