"""Shared data models for fwformer."""

from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

from fwformer.errors import ConfigError


class MixerKind(str, Enum):
    """Token-mixing head families."""

    SSA = "ssa"
    FFT1D = "fft1d"
    FFT2D = "fft2d"
    WT = "wt"
    WT_COMBINED = "wt-combined"


class MultOrder(str, Enum):
    """Association order of the SSA product Q·Kᵀ·V."""

    QK_FIRST = "qk_first"
    KV_FIRST = "kv_first"


class Shortcut(str, Enum):
    """Residual style of the encoder layers."""

    VANILLA = "vanilla"
    MEMBRANE = "ms"


WAVELET_HEAD_NAMES = {
    "wt-haar": "haar",
    "wt-db1": "db1",
    "wt-bior11": "bior1.1",
    "wt-rbio11": "rbio1.1",
}
HEAD_NAMES = ("ssa", "fft1d", "fft2d", *WAVELET_HEAD_NAMES, "wt-combined")


@dataclass(frozen=True)
class LIFParams:
    """Leaky integrate-and-fire constants."""

    tau: float = 2.0
    v_th: float = 1.0
    v_reset: float = 0.0
    surrogate_width: float = 2.0

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.v_th <= self.v_reset:
            raise ConfigError(
                f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})"
            )
        if self.surrogate_width <= 0:
            raise ConfigError("surrogate_width must be positive")


@dataclass(frozen=True)
class MixerSpec:
    """Which token mixer a model uses, with its hyperparameters.

    ``heads``, ``scale`` and ``mult_order`` only matter for SSA; ``basis``
    only for WT; ``wt_dims`` for WT and WT_COMBINED.
    """

    kind: MixerKind = MixerKind.SSA
    basis: str = "haar"
    heads: int = 8
    scale: float = 0.125
    mult_order: MultOrder = MultOrder.QK_FIRST
    wt_dims: int = 2

    def __post_init__(self) -> None:
        if self.heads < 1:
            raise ConfigError(f"heads must be >= 1, got {self.heads}")
        if self.scale <= 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if self.wt_dims not in (1, 2):
            raise ConfigError(f"wt_dims must be 1 or 2, got {self.wt_dims}")

    @classmethod
    def from_name(cls, name: str, **overrides: object) -> "MixerSpec":
        """Build a spec from a CLI head name such as ``fft1d`` or ``wt-bior11``."""
        if name == "ssa":
            return cls(kind=MixerKind.SSA, **overrides)  # type: ignore[arg-type]
        if name in ("fft1d", "fft2d"):
            return cls(kind=MixerKind(name), **overrides)  # type: ignore[arg-type]
        if name in WAVELET_HEAD_NAMES:
            return cls(
                kind=MixerKind.WT,
                basis=WAVELET_HEAD_NAMES[name],
                **overrides,  # type: ignore[arg-type]
            )
        if name == "wt-combined":
            kind = MixerKind.WT_COMBINED
            return cls(kind=kind, **overrides)  # type: ignore[arg-type]
        choices = ", ".join(HEAD_NAMES)
        raise ConfigError(f"unknown head {name!r}; choose from {choices}")

    @property
    def name(self) -> str:
        if self.kind is MixerKind.WT:
            for head, basis in WAVELET_HEAD_NAMES.items():
                if basis == self.basis:
                    return head
            return f"wt-{self.basis}"
        return self.kind.value

    def check_dim(self, dim: int) -> None:
        if self.kind is MixerKind.SSA and dim % self.heads:
            raise ConfigError(f"D={dim} is not divisible by {self.heads} heads")


@dataclass(frozen=True)
class ModelConfig:
    """Network shape. Defaults follow the static-image setting (N=64, D=384)."""

    T: int = 4
    C: int = 3
    H: int = 32
    W: int = 32
    patch: int = 4
    D: int = 384
    L: int = 4
    mixer: MixerSpec = field(default_factory=MixerSpec)
    mlp_ratio: int = 4
    shortcut: Shortcut = Shortcut.VANILLA
    classes: int = 10
    lif: LIFParams = field(default_factory=LIFParams)

    def __post_init__(self) -> None:
        if min(self.T, self.C, self.H, self.W, self.D, self.classes) < 1:
            raise ConfigError("T, C, H, W, D and classes must be positive")
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if self.patch < 1 or self.patch & (self.patch - 1) or self.patch > 16:
            raise ConfigError(f"patch must be a power of two <= 16, got {self.patch}")
        if self.H % self.patch or self.W % self.patch:
            raise ConfigError(
                f"input {self.H}x{self.W} is not divisible by patch {self.patch}"
            )
        if self.D % 8:
            raise ConfigError(f"D={self.D} must be divisible by 8 for the SPS ladder")
        if self.mlp_ratio < 1:
            raise ConfigError("mlp_ratio must be >= 1")
        self.mixer.check_dim(self.D)

    @property
    def N(self) -> int:
        return (self.H // self.patch) * (self.W // self.patch)


@dataclass
class RunConfig:
    """Everything one CLI run needs: model, optimiser, data and output."""

    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    out_dir: Path = Path("runs/default")
    data_root: Path | None = None
    epochs: int = 30
    batch_size: int = 16
    lr: float = 5e-4
    min_lr: float = 0.0
    weight_decay: float = 0.01
    workers: int = 1
    train_samples: int = 400
    test_samples: int = 100
    bench_batches: int = 100
    bench_warmup: int = 10

    def __post_init__(self) -> None:
        for name in ("epochs", "batch_size", "workers", "bench_batches"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr < 0 or self.min_lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr, min_lr and weight_decay must be non-negative")

    def validate_paths(self) -> None:
        """Raise if a referenced input path does not exist."""
        if self.data_root is not None and not self.data_root.exists():
            raise ConfigError(f"dataset path does not exist: {self.data_root}")

    def field_names(self) -> list[str]:
        return [f.name for f in fields(self)]


@dataclass
class StepResult:
    """Result from a single optimisation step."""

    step_number: int
    epoch: int
    loss: float
    lr: float


@dataclass
class EpochMetrics:
    """Per-epoch training and evaluation figures."""

    epoch: int
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float


@dataclass
class TrainCheckpoint:
    """Where a training run stands; restored on resume."""

    path: Path
    epoch: int = 0
    step: int = 0


@dataclass
class OrthoPoint:
    """Orthogonality score of the SSA bases after one training step."""

    step: int
    score: float
