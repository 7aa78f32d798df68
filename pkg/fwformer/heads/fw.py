"""Fourier / wavelet head: a fixed (or learnably combined) linear mixer."""

from fwformer.errors import ConfigError, DimensionError
from fwformer.heads.base import MixerHead
from fwformer.heads.ops import count_ops
from fwformer.profiler import LayerKind, observe
from fwformer.shared import LIFParams, MixerKind, MixerSpec
from fwformer.tensor import Tensor
from fwformer.transforms import (
    CombinedBasis,
    LinearMixer,
    combined_mix,
    fourier_mixer,
    get_basis,
    wavelet_mixer,
)


class FWHead(MixerHead):
    """SN(BN(FW(x))) with no Q/K/V projections.

    Fixed-basis heads have no trainable mixing parameters. The combined head
    owns the three basis coefficients a, b and c.
    """

    def __init__(self, spec: MixerSpec, dim: int, lif: LIFParams) -> None:
        super().__init__(spec, dim, lif)
        self._mixer: LinearMixer | None = None
        self._combined: CombinedBasis | None = None
        if spec.kind is MixerKind.FFT1D:
            self._mixer = fourier_mixer(1)
        elif spec.kind is MixerKind.FFT2D:
            self._mixer = fourier_mixer(2)
        elif spec.kind is MixerKind.WT:
            self._mixer = wavelet_mixer(get_basis(spec.basis), spec.wt_dims)
        elif spec.kind is MixerKind.WT_COMBINED:
            self._combined = CombinedBasis.create(dims=spec.wt_dims)
            self.coeffs = list(self._combined.coeffs)
        else:
            raise ConfigError(f"FWHead cannot run mixer kind {spec.kind.value}")

    @property
    def has_learnable_mixing(self) -> bool:
        return self._combined is not None

    @property
    def combined(self) -> CombinedBasis | None:
        return self._combined

    def mix(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise DimensionError(f"FW head expects [T, B, N, D], got {x.shape}")
        steps, batch, n, d = x.shape
        ops = count_ops(self._spec, n, d)
        observe(self.trace_name, LayerKind.MIXER, x, 2 * ops.mixing * steps * batch)
        if self._combined is not None:
            return combined_mix(x, self._combined)
        assert self._mixer is not None
        return self._mixer(x)
