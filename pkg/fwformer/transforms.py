"""Fourier and wavelet machinery for the FW head.

Array-level kernels (``fft``, ``dwt_full``, ...) work on numpy arrays along one
axis. Mixers wrap them as tape-aware ops on Tensors of shape [..., N, D] whose
last two axes are (sequence, feature). Every mixer is linear; its backward is
the adjoint of its forward.

Axes whose length is not a power of two are zero-padded to the next power of
two before transforming and truncated afterwards.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import numpy.typing as npt

from fwformer.errors import ConfigError, ContractError, DimensionError
from fwformer.tensor import FloatArray, Tensor, record_op

logger = logging.getLogger(__name__)

ComplexArray = npt.NDArray[np.complex128]
ArrayFn = Callable[[FloatArray], FloatArray]

_S = math.sqrt(0.5)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length()


# ---------------------------------------------------------------------------
# Fourier
# ---------------------------------------------------------------------------


def dft_naive(x: npt.ArrayLike) -> ComplexArray:
    """Direct O(N^2) DFT, X[n] = sum_k x[k] exp(-2 pi i k n / N). Test oracle."""
    seq = np.asarray(x, dtype=np.complex128)
    n = seq.shape[0]
    if n < 1:
        raise ContractError("dft_naive needs at least one sample")
    k = np.arange(n)
    kernel = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return kernel @ seq


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> npt.NDArray[np.intp]:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x: npt.ArrayLike, inverse: bool = False, axis: int = -1) -> ComplexArray:
    """Radix-2 decimation-in-time Cooley-Tukey FFT along ``axis``.

    The inverse is conj(fft(conj(x))) / N. Callers pad to a power of two.
    """
    arr = np.asarray(x, dtype=np.complex128)
    if inverse:
        return np.conj(fft(np.conj(arr), axis=axis)) / arr.shape[axis]
    a = np.moveaxis(arr, axis, -1)
    n = a.shape[-1]
    if not is_power_of_two(n):
        raise ContractError(f"fft length {n} is not a power of two")
    lead = a.shape[:-1]
    a = a[..., _bit_reversal(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return np.moveaxis(a, -1, axis)


def _pad_axis(arr: FloatArray, axis: int, length: int) -> FloatArray:
    extra = length - arr.shape[axis]
    if extra == 0:
        return arr
    widths = [(0, 0)] * arr.ndim
    widths[axis] = (0, extra)
    return np.pad(arr, widths)


def _truncate_axis(arr: FloatArray, axis: int, length: int) -> FloatArray:
    if arr.shape[axis] == length:
        return arr
    return np.take(arr, np.arange(length), axis=axis)


def _fft_real(arr: FloatArray, axes: tuple[int, ...]) -> FloatArray:
    """Re(F_axes x) with pad/truncate; feature axis first when both are given."""
    out: FloatArray | ComplexArray = arr
    for ax in axes:
        size = next_power_of_two(arr.shape[ax])
        out = _pad_axis(out, ax, size)  # type: ignore[arg-type]
        out = fft(out, axis=ax)
    real = np.real(out)
    for ax in axes:
        real = _truncate_axis(real, ax, arr.shape[ax])
    return np.ascontiguousarray(real)


# ---------------------------------------------------------------------------
# Wavelets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WaveletBasis:
    """Two-channel filter bank.

    Filter tables use the usual convolution convention: analysis correlates
    with the reversed decomposition filters, synthesis convolves with the
    reconstruction filters.
    """

    name: str
    decomposition_lowpass: tuple[float, ...]
    decomposition_highpass: tuple[float, ...]
    reconstruction_lowpass: tuple[float, ...]
    reconstruction_highpass: tuple[float, ...]
    orthogonal: bool = True

    def __post_init__(self) -> None:
        filters = (
            self.decomposition_lowpass,
            self.decomposition_highpass,
            self.reconstruction_lowpass,
            self.reconstruction_highpass,
        )
        lengths = {len(f) for f in filters}
        if len(lengths) != 1 or min(lengths) < 2:
            raise ConfigError(f"{self.name}: filters must share a length >= 2")
        if self.orthogonal:
            lo, hi = self.analysis_filters
            mirror = np.array([(-1) ** m * lo[-1 - m] for m in range(len(lo))])
            if not np.allclose(hi, mirror, atol=1e-12):
                raise ConfigError(f"{self.name}: highpass is not the QMF of lowpass")

    @property
    def analysis_filters(self) -> tuple[FloatArray, FloatArray]:
        return (
            np.array(self.decomposition_lowpass[::-1]),
            np.array(self.decomposition_highpass[::-1]),
        )

    @property
    def synthesis_filters(self) -> tuple[FloatArray, FloatArray]:
        return (
            np.array(self.reconstruction_lowpass),
            np.array(self.reconstruction_highpass),
        )

    @property
    def filter_length(self) -> int:
        return len(self.decomposition_lowpass)


def _order_one_basis(name: str, orthogonal: bool = True) -> WaveletBasis:
    return WaveletBasis(name, (_S, _S), (-_S, _S), (_S, _S), (_S, -_S), orthogonal)


# Standard tables; at order 1 these four coincide.
HAAR = _order_one_basis("haar")
DB1 = _order_one_basis("db1")
BIOR11 = _order_one_basis("bior1.1")
RBIO11 = _order_one_basis("rbio1.1")

BASES: dict[str, WaveletBasis] = {b.name: b for b in (HAAR, DB1, BIOR11, RBIO11)}


def get_basis(name: str) -> WaveletBasis:
    key = name.lower()
    aliases = {"bior11": "bior1.1", "rbio11": "rbio1.1"}
    key = aliases.get(key, key)
    if key not in BASES:
        raise ConfigError(f"unknown wavelet basis {name!r}; known: {sorted(BASES)}")
    return BASES[key]


def _analysis_step(
    x: FloatArray, lo: FloatArray, hi: FloatArray
) -> tuple[FloatArray, FloatArray]:
    n = x.shape[-1]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(lo.size)[None, :]) % n
    windows = x[..., idx]
    return windows @ lo, windows @ hi


def _synthesis_step(
    a: FloatArray, d: FloatArray, lo: FloatArray, hi: FloatArray
) -> FloatArray:
    m = a.shape[-1]
    n = 2 * m
    out = np.zeros((*a.shape[:-1], n))
    base = 2 * np.arange(m)
    for j in range(lo.size):
        out[..., (base + j) % n] += a * lo[j] + d * hi[j]
    return out


def _levels_for(n: int, levels: int | None) -> int:
    if not is_power_of_two(n):
        raise ContractError(f"wavelet length {n} is not a power of two")
    depth = n.bit_length() - 1
    if levels is None:
        return depth
    if not 0 <= levels <= depth:
        raise ContractError(f"levels={levels} outside [0, {depth}] for length {n}")
    return levels


def dwt_full(
    x: npt.ArrayLike,
    basis: WaveletBasis,
    levels: int | None = None,
    axis: int = -1,
) -> FloatArray:
    """Multi-level periodised DWT along ``axis`` (full depth by default).

    Output layout along ``axis``: [approx | coarsest detail | ... | finest
    detail], N coefficients in total.
    """
    arr = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
    n = arr.shape[-1]
    depth = _levels_for(n, levels)
    lo, hi = basis.analysis_filters
    approx = arr
    details: list[FloatArray] = []
    for _ in range(depth):
        approx, d = _analysis_step(approx, lo, hi)
        details.insert(0, d)
    out = np.concatenate([approx, *details], axis=-1)
    if out.shape[-1] != n:
        raise ContractError(f"dwt produced {out.shape[-1]} coefficients for {n}")
    return np.moveaxis(out, -1, axis)


def idwt_full(
    coeffs: npt.ArrayLike,
    basis: WaveletBasis,
    levels: int | None = None,
    axis: int = -1,
    adjoint: bool = False,
) -> FloatArray:
    """Invert :func:`dwt_full`; ``adjoint=True`` applies its transpose instead.

    The two coincide for orthogonal bases.
    """
    arr = np.moveaxis(np.asarray(coeffs, dtype=np.float64), axis, -1)
    n = arr.shape[-1]
    depth = _levels_for(n, levels)
    lo, hi = basis.analysis_filters if adjoint else basis.synthesis_filters
    width = n >> depth
    approx = arr[..., :width]
    while width < n:
        detail = arr[..., width : 2 * width]
        approx = _synthesis_step(approx, detail, lo, hi)
        width *= 2
    return np.moveaxis(approx, -1, axis)


def _wavelet_axes(
    arr: FloatArray, basis: WaveletBasis, axes: tuple[int, ...], adjoint: bool
) -> FloatArray:
    out = arr
    for ax in axes if not adjoint else tuple(reversed(axes)):
        length = arr.shape[ax]
        out = _pad_axis(out, ax, next_power_of_two(length))
        if adjoint:
            out = idwt_full(out, basis, axis=ax, adjoint=True)
        else:
            out = dwt_full(out, basis, axis=ax)
        out = _truncate_axis(out, ax, length)
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# Tensor mixers
# ---------------------------------------------------------------------------

SEQ_AXIS = -2
FEATURE_AXIS = -1


@dataclass(frozen=True)
class LinearMixer:
    """Fixed linear operator over the (sequence, feature) axes of a Tensor."""

    name: str
    forward: ArrayFn
    adjoint: ArrayFn

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim < 2:
            raise DimensionError(f"{self.name} needs [..., N, D], got {x.shape}")

        def fn(g: FloatArray) -> tuple[FloatArray]:
            return (self.adjoint(g),)

        return record_op(self.forward(x.data), (x,), fn, f"mix:{self.name}")


def fourier_mixer(dims: int) -> LinearMixer:
    """Real part of the DFT along the sequence axis (dims=1) or both (dims=2).

    Re(F) is symmetric, and so is x -> Re(F_N x F_D), so each is self-adjoint.
    """
    axes = (SEQ_AXIS,) if dims == 1 else (FEATURE_AXIS, SEQ_AXIS)

    def op(a: FloatArray) -> FloatArray:
        return _fft_real(a, axes)

    return LinearMixer(f"fft{dims}d", op, op)


def wavelet_mixer(basis: WaveletBasis, dims: int) -> LinearMixer:
    """Full-depth DWT along the sequence axis (dims=1) or feature then sequence."""
    axes = (SEQ_AXIS,) if dims == 1 else (FEATURE_AXIS, SEQ_AXIS)

    def fwd(a: FloatArray) -> FloatArray:
        return _wavelet_axes(a, basis, axes, adjoint=False)

    def adj(a: FloatArray) -> FloatArray:
        return _wavelet_axes(a, basis, axes, adjoint=True)

    return LinearMixer(f"wt{dims}d-{basis.name}", fwd, adj)


def fourier_mix_1d(x: Tensor) -> Tensor:
    return fourier_mixer(1)(x)


def fourier_mix_2d(x: Tensor) -> Tensor:
    return fourier_mixer(2)(x)


def wavelet_mix_1d(x: Tensor, basis: WaveletBasis) -> Tensor:
    return wavelet_mixer(basis, 1)(x)


def wavelet_mix_2d(x: Tensor, basis: WaveletBasis) -> Tensor:
    return wavelet_mixer(basis, 2)(x)


@dataclass
class CombinedBasis:
    """Learnable combination a·Base1 + b·Base2 + c·Base3 of wavelet mixers."""

    bases: tuple[WaveletBasis, WaveletBasis, WaveletBasis]
    coeffs: tuple[Tensor, Tensor, Tensor]
    dims: int = 2
    _mixers: tuple[LinearMixer, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.bases) != 3 or len(self.coeffs) != 3:
            raise ContractError("a combined basis needs exactly three bases")
        self._mixers = tuple(wavelet_mixer(b, self.dims) for b in self.bases)

    @classmethod
    def create(
        cls,
        dims: int = 2,
        init: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3),
        bases: tuple[WaveletBasis, WaveletBasis, WaveletBasis] = (BIOR11, HAAR, DB1),
    ) -> "CombinedBasis":
        names = ("a", "b", "c")
        coeffs = tuple(
            Tensor(v, requires_grad=True, name=n)
            for v, n in zip(init, names, strict=True)
        )
        return cls(bases, coeffs, dims)  # type: ignore[arg-type]

    @property
    def mixers(self) -> tuple[LinearMixer, ...]:
        return self._mixers


def combined_mix(x: Tensor, cb: CombinedBasis) -> Tensor:
    out: Tensor | None = None
    for coeff, mixer in zip(cb.coeffs, cb.mixers, strict=True):
        term = coeff * mixer(x)
        out = term if out is None else out + term
    assert out is not None
    return out


def basis_matrix(transform: Callable[[Tensor], Tensor], n: int) -> Tensor:
    """Materialise a linear mixer over length ``n`` as an [n, n] matrix.

    Column i is the mixer applied to the i-th standard basis vector, so
    ``basis_matrix(m, n).data @ x`` equals ``m(x)`` along the sequence axis.
    """
    if not is_power_of_two(n):
        raise ContractError(f"basis_matrix size {n} is not a power of two")
    columns = []
    for i in range(n):
        e = np.zeros((n, 1))
        e[i, 0] = 1.0
        columns.append(transform(Tensor(e)).data[:, 0])
    return Tensor(np.stack(columns, axis=1))
