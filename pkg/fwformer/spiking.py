"""Leaky integrate-and-fire dynamics with surrogate-gradient spikes.

One step of the neuron, with ``H`` the charged potential and ``S`` the spike:

    H = v + (x - (v - v_reset)) / tau
    S = G(H - v_th)              G(0) = 1
    v' = H * (1 - S) + v_reset * S

The spike indicator in the reset is detached from the tape, so gradients flow
through ``H`` only.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from fwformer.errors import ContractError, DimensionError, EmptyInputError
from fwformer.shared import LIFParams
from fwformer.tensor import FloatArray, Tensor, record_op, stack


@dataclass
class LIFState:
    """Membrane potential per element."""

    v: Tensor


@dataclass
class SpikeTrain:
    """Binary tensor with a leading time axis."""

    spikes: Tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spikes.shape

    @property
    def T(self) -> int:
        return self.spikes.shape[0]

    @cached_property
    def rate(self) -> float:
        if self.spikes.size == 0:
            return 0.0
        return float(self.spikes.data.mean())


def heaviside(v: FloatArray) -> FloatArray:
    return (v >= 0).astype(np.float64)


def surrogate_derivative(v: FloatArray, alpha: float) -> FloatArray:
    """Arctan surrogate: alpha / (2 * (1 + (pi/2 * alpha * v)^2))."""
    return alpha / (2.0 * (1.0 + (math.pi / 2.0 * alpha * v) ** 2))


def surrogate_spike(v: Tensor, alpha: float = 2.0) -> Tensor:
    """Heaviside forward, arctan-surrogate backward."""

    def fn(g: FloatArray) -> tuple[FloatArray]:
        return (g * surrogate_derivative(v.data, alpha),)

    return record_op(heaviside(v.data), (v,), fn, "surrogate_spike")


def lif_step(x_t: Tensor, state: LIFState, p: LIFParams) -> tuple[Tensor, LIFState]:
    if x_t.shape != state.v.shape:
        raise DimensionError(f"input {x_t.shape} vs membrane {state.v.shape}")
    h = state.v + (x_t - (state.v - p.v_reset)) * (1.0 / p.tau)
    s = surrogate_spike(h - p.v_th, p.surrogate_width)
    fired = s.detach()
    v_next = h * (1.0 - fired) + fired * p.v_reset
    return s, LIFState(v_next)


def lif_run(x: Tensor, p: LIFParams) -> SpikeTrain:
    """Run the neuron over the leading (time) axis, starting at ``v_reset``."""
    if x.ndim == 0 or x.shape[0] == 0:
        raise EmptyInputError("lif_run needs at least one time step")
    state = LIFState(Tensor(np.full(x.shape[1:], p.v_reset)))
    spikes = []
    for t in range(x.shape[0]):
        s, state = lif_step(x[t], state, p)
        spikes.append(s)
    return SpikeTrain(stack(spikes, axis=0))


def spike_or(a: Tensor, b: Tensor) -> Tensor:
    """Residual add of two spike tensors clamped to {0, 1}.

    The gradient passes straight through to both operands.
    """
    if a.shape != b.shape:
        raise DimensionError(f"spike_or shapes differ: {a.shape} vs {b.shape}")

    def fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return g, g

    return record_op(np.minimum(a.data + b.data, 1.0), (a, b), fn, "spike_or")


def is_binary(x: Tensor) -> bool:
    return bool(np.all((x.data == 0.0) | (x.data == 1.0)))


def require_binary(x: Tensor, what: str) -> None:
    if not is_binary(x):
        raise ContractError(f"{what} expects binary spikes")
