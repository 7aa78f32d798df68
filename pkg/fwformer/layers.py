"""Parametrised building blocks and the Module base class.

Every layer here takes activations with leading time and batch axes
[T, B, ...]. Layers that the energy model accounts for report their input
and FLOPs to :mod:`fwformer.profiler` on each call.
"""

import math
from collections.abc import Iterator
from typing import Self

import numpy as np

from fwformer.errors import DimensionError
from fwformer.profiler import LayerKind, observe
from fwformer.tensor import RunningStats, Tensor, batch_norm, conv2d, matmul


def kaiming_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int
) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    """Container of parameters, running statistics and child modules.

    Attributes are discovered by walking ``vars(self)``: trainable Tensors,
    ``RunningStats``, Modules and lists of Modules. Names starting with an
    underscore are private and skipped.
    """

    training: bool = True
    trace_name: str = ""

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            if isinstance(value, list | tuple):
                for i, item in enumerate(value):
                    yield f"{key}.{i}", item
            else:
                yield key, value

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for key, value in self._children():
            if isinstance(value, Module):
                yield from value.named_modules(f"{prefix}{key}.")

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in self._children():
            if isinstance(value, Tensor) and value.requires_grad:
                yield f"{prefix}{key}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")

    def named_stats(self, prefix: str = "") -> Iterator[tuple[str, RunningStats]]:
        for key, value in self._children():
            if isinstance(value, RunningStats):
                yield f"{prefix}{key}", value
            elif isinstance(value, Module):
                yield from value.named_stats(f"{prefix}{key}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> Self:
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> Self:
        return self.train(False)

    def assign_trace_names(self) -> None:
        """Name every submodule by its attribute path, e.g. ``layers.0.mlp.fc1``."""
        for name, module in self.named_modules():
            module.trace_name = name.rstrip(".") or type(self).__name__


class Linear(Module):
    """Token-wise dense layer; ``weight`` is [in, out]."""

    def __init__(
        self,
        rng: np.random.Generator,
        in_features: int,
        out_features: int,
        bias: bool = False,
        accounted: bool = True,
    ) -> None:
        self.weight = kaiming_uniform(rng, (in_features, out_features), in_features)
        self.bias = (
            kaiming_uniform(rng, (out_features,), in_features) if bias else None
        )
        self._accounted = accounted

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"{self.trace_name}: expected {self.in_features} features, "
                f"got {x.shape}"
            )
        if self._accounted:
            tokens = x.size // self.in_features
            observe(
                self.trace_name,
                LayerKind.FC,
                x,
                2 * tokens * self.in_features * self.out_features,
            )
        out = matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class Conv2d(Module):
    """Bias-free 3x3-style convolution over [T, B, C, H, W] inputs."""

    def __init__(
        self,
        rng: np.random.Generator,
        in_channels: int,
        out_channels: int,
        kernel: int = 3,
        padding: int = 1,
        kind: LayerKind = LayerKind.CONV,
    ) -> None:
        fan_in = in_channels * kernel * kernel
        self.weight = kaiming_uniform(
            rng, (out_channels, in_channels, kernel, kernel), fan_in
        )
        self._padding = padding
        self._kind = kind

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 5:
            raise DimensionError(
                f"{self.trace_name}: expected [T, B, C, H, W], got {x.shape}"
            )
        steps, batch = x.shape[:2]
        merged = x.reshape(steps * batch, *x.shape[2:])
        out = conv2d(merged, self.weight, stride=1, padding=self._padding)
        o, c, kh, kw = self.weight.shape
        observe(
            self.trace_name,
            self._kind,
            x,
            2 * steps * batch * o * c * kh * kw * out.shape[2] * out.shape[3],
        )
        return out.reshape(steps, batch, *out.shape[1:])


class BatchNorm(Module):
    """Batch norm over the feature ``axis``; time and batch are merged."""

    def __init__(self, features: int, axis: int = -1, affine: bool = True) -> None:
        self.gamma = (
            Tensor(np.ones(features), requires_grad=True) if affine else None
        )
        self.beta = (
            Tensor(np.zeros(features), requires_grad=True) if affine else None
        )
        self.stats = RunningStats.fresh(features)
        self._axis = axis

    def __call__(self, x: Tensor) -> Tensor:
        return batch_norm(
            x, self.gamma, self.beta, self.stats, self.training, axis=self._axis
        )
