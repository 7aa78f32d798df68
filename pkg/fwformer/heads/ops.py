"""Closed-form multiply-accumulate counts of the token mixers.

Counts are exact functions of (spec, N, D). Axes that the transforms pad are
counted at their padded length; a radix-2 butterfly counts as one operation.
"""

import math
from dataclasses import dataclass

from fwformer.shared import MixerKind, MixerSpec, MultOrder
from fwformer.transforms import BASES, get_basis, next_power_of_two


@dataclass(frozen=True)
class OpCount:
    """Mixing operations plus the Q/K/V projection cost (SSA only)."""

    mixing: int
    projection: int = 0

    @property
    def total(self) -> int:
        return self.mixing + self.projection


def _fft_ops(columns: int, length: int) -> int:
    padded = next_power_of_two(length)
    return columns * (padded // 2) * int(math.log2(padded))


def _wavelet_ops(filter_length: int, n: int, d: int, dims: int) -> int:
    ops = 2 * filter_length * next_power_of_two(n) * d
    if dims == 2:
        ops += 2 * filter_length * n * next_power_of_two(d)
    return ops


def count_ops(spec: MixerSpec, n: int, d: int) -> OpCount:
    """Operations of one mixer application on an [N, D] slice.

    SSA with heads H and d_h = D / H costs 2·H·N²·d_h (QK first) or
    2·H·N·d_h² (KV first), plus 3·N·D² for the Q, K and V projections.
    """
    if spec.kind is MixerKind.SSA:
        spec.check_dim(d)
        dh = d // spec.heads
        if spec.mult_order is MultOrder.QK_FIRST:
            mixing = 2 * spec.heads * n * n * dh
        else:
            mixing = 2 * spec.heads * n * dh * dh
        return OpCount(mixing, 3 * n * d * d)
    if spec.kind is MixerKind.FFT1D:
        return OpCount(_fft_ops(d, n))
    if spec.kind is MixerKind.FFT2D:
        return OpCount(_fft_ops(next_power_of_two(d), n) + _fft_ops(n, d))
    if spec.kind is MixerKind.WT:
        basis = get_basis(spec.basis)
        return OpCount(_wavelet_ops(basis.filter_length, n, d, spec.wt_dims))
    combined = sum(
        _wavelet_ops(BASES[name].filter_length, n, d, spec.wt_dims)
        for name in ("bior1.1", "haar", "db1")
    )
    return OpCount(combined + 3 * n * d)
