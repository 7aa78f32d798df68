"""Base interface for token-mixing heads."""

from abc import ABC, abstractmethod

from fwformer.layers import BatchNorm, Module
from fwformer.shared import LIFParams, MixerSpec
from fwformer.spiking import SpikeTrain, lif_run, require_binary
from fwformer.tensor import Tensor


class MixerHead(Module, ABC):
    """Abstract base class for mixing heads.

    A head maps binary spikes [T, B, N, D] to binary spikes of the same shape:
    ``SN(BN(mix(x)))``. Subclasses only define ``mix``; the trailing batch
    norm and spiking layer live here so every head ends the same way, and so
    the membrane-shortcut encoder can take the pre-spike current directly.
    """

    def __init__(self, spec: MixerSpec, dim: int, lif: LIFParams) -> None:
        self.norm = BatchNorm(dim, axis=-1)
        self._spec = spec
        self._dim = dim
        self._lif = lif

    @property
    def spec(self) -> MixerSpec:
        return self._spec

    @property
    @abstractmethod
    def has_learnable_mixing(self) -> bool:
        """Whether the mixing operator itself has trainable parameters."""
        ...

    @abstractmethod
    def mix(self, x: Tensor) -> Tensor:
        """Apply the token mixer to spikes [T, B, N, D], before normalisation.

        Args:
            x: Binary spike tensor.

        Returns:
            Real-valued mixed tensor with the shape of ``x``.
        """
        ...

    def mixing_parameters(self) -> list[Tensor]:
        """Trainable tensors of the head, excluding the output batch norm."""
        return [
            p for name, p in self.named_parameters() if not name.startswith("norm.")
        ]

    def current(self, x: Tensor) -> Tensor:
        """Input current of the head's output neurons: BN(mix(x))."""
        return self.norm(self.mix(x))

    def __call__(self, x: SpikeTrain) -> SpikeTrain:
        require_binary(x.spikes, self.trace_name or type(self).__name__)
        return lif_run(self.current(x.spikes), self._lif)
