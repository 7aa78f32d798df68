"""Spiking Self-Attention head."""

import logging

import numpy as np

from fwformer.errors import DimensionError
from fwformer.heads.base import MixerHead
from fwformer.heads.ops import count_ops
from fwformer.layers import BatchNorm, Linear
from fwformer.profiler import LayerKind, observe
from fwformer.shared import LIFParams, MixerSpec, MultOrder
from fwformer.spiking import lif_run
from fwformer.tensor import FloatArray, Tensor, matmul

logger = logging.getLogger(__name__)


def ssa_product(
    q: Tensor, k: Tensor, v: Tensor, scale: float, order: MultOrder
) -> Tensor:
    """``Q·Kᵀ·V * scale`` over the last two axes, in the requested association.

    On binary Q, K and V every entry before scaling is a non-negative integer,
    so no softmax is needed.
    """
    if not q.shape == k.shape == v.shape:
        raise DimensionError(f"q/k/v shapes differ: {q.shape}, {k.shape}, {v.shape}")
    perm = (*range(k.ndim - 2), k.ndim - 1, k.ndim - 2)
    kt = k.transpose(*perm)
    if order is MultOrder.QK_FIRST:
        out = matmul(matmul(q, kt), v)
    else:
        out = matmul(q, matmul(kt, v))
    return out * scale


class SSAHead(MixerHead):
    """Q, K, V = SN(BN(x·W)); out = SN(BN(SN(Q·Kᵀ·V·s)·W_O)).

    Projections are bias-free D x D matrices, and the Q/K/V batch norms carry
    no affine terms, so the head adds exactly 4·D² parameters over a
    fixed-basis Fourier or wavelet head.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        spec: MixerSpec,
        dim: int,
        lif: LIFParams,
    ) -> None:
        super().__init__(spec, dim, lif)
        spec.check_dim(dim)
        self.q = Linear(rng, dim, dim)
        self.k = Linear(rng, dim, dim)
        self.v = Linear(rng, dim, dim)
        self.o = Linear(rng, dim, dim)
        self.q_norm = BatchNorm(dim, axis=-1, affine=False)
        self.k_norm = BatchNorm(dim, axis=-1, affine=False)
        self.v_norm = BatchNorm(dim, axis=-1, affine=False)
        self.capture = False
        self._captured: tuple[FloatArray, FloatArray] | None = None

    @property
    def has_learnable_mixing(self) -> bool:
        return True

    @property
    def captured(self) -> tuple[FloatArray, FloatArray] | None:
        """Q and K spikes [T, B, H, N, d] of the last forward with ``capture`` on."""
        return self._captured

    def _split_heads(self, x: Tensor) -> Tensor:
        steps, batch, n, d = x.shape
        heads = self._spec.heads
        return x.reshape(steps, batch, n, heads, d // heads).transpose(0, 1, 3, 2, 4)

    def _merge_heads(self, x: Tensor) -> Tensor:
        steps, batch, heads, n, dh = x.shape
        return x.transpose(0, 1, 3, 2, 4).reshape(steps, batch, n, heads * dh)

    def mix(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise DimensionError(f"SSA expects [T, B, N, D], got {x.shape}")
        q = lif_run(self.q_norm(self.q(x)), self._lif).spikes
        k = lif_run(self.k_norm(self.k(x)), self._lif).spikes
        v = lif_run(self.v_norm(self.v(x)), self._lif).spikes
        qh, kh, vh = (self._split_heads(t) for t in (q, k, v))
        if self.capture:
            self._captured = (qh.data, kh.data)

        steps, batch, n, d = x.shape
        ops = count_ops(self._spec, n, d)
        observe(self.trace_name, LayerKind.MIXER, q, 2 * ops.mixing * steps * batch)
        attn = ssa_product(qh, kh, vh, self._spec.scale, self._spec.mult_order)
        attn_spikes = lif_run(attn, self._lif).spikes
        return self.o(self._merge_heads(attn_spikes))
