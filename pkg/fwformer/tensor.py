"""Dense float64 tensors with a define-by-run gradient tape.

Ops record themselves on the active :class:`Tape` whenever one of their inputs
requires a gradient. Without an active tape every op is a plain forward
computation, which is what evaluation and benchmarking use.
"""

from __future__ import annotations

import logging
import math
import struct
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from fwformer.errors import (
    ContractError,
    DimensionError,
    EmptyInputError,
    FormatError,
    NumericalError,
)

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BackwardFn = Callable[[FloatArray], Sequence[FloatArray | None]]

TENSOR_MAGIC = b"FWT1"
BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class Tensor:
    """Immutable n-dimensional float64 array with optional gradient tracking.

    ``data`` is read-only once the tensor exists; only ``grad`` changes, by
    accumulation during :func:`backward`. Parameters are updated by replacing
    their data wholesale through :meth:`assign`.
    """

    __array_ufunc__ = None

    def __init__(
        self, data: Any, requires_grad: bool = False, name: str | None = None
    ) -> None:
        arr = np.array(data, dtype=np.float64)
        _require_finite(arr, "tensor construction")
        arr.flags.writeable = False
        self.data: FloatArray = arr
        self.requires_grad = requires_grad
        self.grad: FloatArray | None = None
        self.name = name
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, arr: FloatArray, op: str) -> Tensor:
        """Wrap an op result without copying."""
        out = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        _require_finite(arr, op)
        arr.flags.writeable = False
        out.data = arr
        out.requires_grad = False
        out.grad = None
        out.name = None
        out._tape = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single element, shape={self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> FloatArray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor._wrap(self.data, "detach")

    def assign(self, data: FloatArray) -> None:
        """Replace the payload of a parameter, keeping its shape."""
        arr = np.array(data, dtype=np.float64)
        if arr.shape != self.data.shape:
            raise DimensionError(f"assign: {arr.shape} into {self.shape}")
        _require_finite(arr, "assign")
        arr.flags.writeable = False
        self.data = arr

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other: Tensor | float) -> Tensor:
        return add(self, other)

    def __radd__(self, other: float) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor | float) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: float) -> Tensor:
        return sub(_as_tensor(other), self)

    def __mul__(self, other: Tensor | float) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: float) -> Tensor:
        return mul(self, other)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __truediv__(self, other: float) -> Tensor:
        if isinstance(other, Tensor):
            raise ContractError("division is only defined by a python scalar")
        if other == 0:
            raise NumericalError("division by zero")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index: int | slice | tuple[int | slice, ...]) -> Tensor:
        return index_select(self, index)

    def sum(self, axis: int | tuple[int, ...] | None = None) -> Tensor:
        return reduce_sum(self, axis)

    def mean(self, axis: int | tuple[int, ...] | None = None) -> Tensor:
        return reduce_mean(self, axis)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes)


def _require_finite(arr: FloatArray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{op} produced non-finite values")


def _as_tensor(value: Tensor | float | int) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(float(value))


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


@dataclass
class _Record:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    op: str


_active_tape: ContextVar[Tape | None] = ContextVar("fwformer_tape", default=None)


class Tape:
    """Ordered record of the ops of one forward pass.

    Records are appended in execution order, so every record's inputs were
    produced before it. A tape is consumed by exactly one backward pass.
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []
        self.consumed = False
        self._token: Any = None

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(
        self, inputs: tuple[Tensor, ...], output: Tensor, fn: BackwardFn, op: str
    ) -> None:
        if self.consumed:
            raise ContractError("cannot record on a tape that was already consumed")
        output._tape = self
        self.records.append(_Record(inputs, output, fn, op))

    def gradients(self, loss: Tensor) -> dict[int, tuple[Tensor, FloatArray]]:
        """Reverse sweep returning leaf gradients without touching ``.grad``."""
        if loss.size != 1:
            raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not recorded on this tape")
        if self.consumed:
            raise ContractError("backward already ran on this tape; re-record first")
        self.consumed = True

        produced = {id(r.output) for r in self.records}
        grads: dict[int, FloatArray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g), strict=True):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.shape:
                    raise DimensionError(
                        f"{rec.op} backward gave {gi.shape} for input {inp.shape}"
                    )
                key = id(inp)
                grads[key] = grads[key] + gi if key in grads else gi
                if key not in produced:
                    leaves[key] = inp
        return {k: (leaves[k], grads[k]) for k in leaves}


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every leaf reachable from ``loss``.

    Gradients accumulate into existing ``grad`` arrays.
    """
    tape = loss._tape
    if tape is None:
        raise ContractError("loss was not produced under an active tape")
    for tensor, g in tape.gradients(loss).values():
        tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
    logger.debug("backward over %d records", len(tape))


def record_op(
    data: FloatArray, inputs: Sequence[Tensor], fn: BackwardFn, op: str
) -> Tensor:
    """Wrap ``data`` as an op output, recording ``fn`` on the active tape.

    ``fn`` maps the output gradient to one gradient (or ``None``) per input.
    This is the hook other modules use to define custom-gradient nodes.
    """
    out = Tensor._wrap(data, op)
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(tuple(inputs), out, fn, op)
    return out


def active_tape() -> Tape | None:
    return _active_tape.get()


# ---------------------------------------------------------------------------
# FLOP counting
# ---------------------------------------------------------------------------


@dataclass
class FlopCounter:
    """Running FLOP totals; one multiply-accumulate counts as 2 FLOPs."""

    flops: int = 0
    by_op: dict[str, int] = field(default_factory=dict)

    def add(self, op: str, flops: int) -> None:
        self.flops += flops
        self.by_op[op] = self.by_op.get(op, 0) + flops


_flop_counter: ContextVar[FlopCounter | None] = ContextVar(
    "fwformer_flops", default=None
)


@contextmanager
def count_flops() -> Iterator[FlopCounter]:
    """Count dense FLOPs of matmul and conv2d inside the block."""
    counter = FlopCounter()
    token = _flop_counter.set(counter)
    try:
        yield counter
    finally:
        _flop_counter.reset(token)


def _count(op: str, flops: int) -> None:
    counter = _flop_counter.get()
    if counter is not None:
        counter.add(op, flops)


# ---------------------------------------------------------------------------
# Elementwise and shape ops
# ---------------------------------------------------------------------------


def _broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    try:
        out = tuple(np.broadcast_shapes(a, b))
    except ValueError as err:
        raise DimensionError(f"shapes {a} and {b} do not broadcast") from err
    # Only scalar-times-tensor and bias-style adds: one operand keeps its shape.
    if out != a and out != b:
        raise DimensionError(f"shapes {a} and {b} need two-sided broadcasting")
    return out


def _unbroadcast(grad: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor | float, b: Tensor | float) -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(ta.shape, tb.shape)

    def fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return _unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)

    return record_op(ta.data + tb.data, (ta, tb), fn, "add")


def sub(a: Tensor | float, b: Tensor | float) -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(ta.shape, tb.shape)

    def fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return _unbroadcast(g, ta.shape), _unbroadcast(-g, tb.shape)

    return record_op(ta.data - tb.data, (ta, tb), fn, "sub")


def mul(a: Tensor | float, b: Tensor | float) -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(ta.shape, tb.shape)

    def fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        return _unbroadcast(g * tb.data, ta.shape), _unbroadcast(g * ta.data, tb.shape)

    return record_op(ta.data * tb.data, (ta, tb), fn, "mul")


def reduce_sum(x: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    out = x.data.sum(axis=axis)

    def fn(g: FloatArray) -> tuple[FloatArray]:
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record_op(np.asarray(out), (x,), fn, "sum")


def reduce_mean(x: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    if x.size == 0:
        raise EmptyInputError("mean of an empty tensor")
    count = x.size // max(np.asarray(x.data.sum(axis=axis)).size, 1)
    return reduce_sum(x, axis) * (1.0 / count)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as err:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from err

    def fn(g: FloatArray) -> tuple[FloatArray]:
        return (g.reshape(x.shape),)

    return record_op(out, (x,), fn, "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    perm = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    if sorted(perm) != list(range(x.ndim)):
        raise DimensionError(f"bad permutation {perm} for rank {x.ndim}")
    inverse = tuple(np.argsort(perm))

    def fn(g: FloatArray) -> tuple[FloatArray]:
        return (g.transpose(inverse),)

    return record_op(x.data.transpose(perm), (x,), fn, "transpose")


def index_select(x: Tensor, index: int | slice | tuple[int | slice, ...]) -> Tensor:
    """Basic (int/slice) indexing with a scatter backward."""
    parts = index if isinstance(index, tuple) else (index,)
    if not all(isinstance(p, int | slice) for p in parts):
        raise ContractError("only int and slice indexing is supported")
    try:
        out = x.data[index]
    except IndexError as err:
        raise DimensionError(f"index {index} out of range for {x.shape}") from err

    def fn(g: FloatArray) -> tuple[FloatArray]:
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return record_op(np.asarray(out), (x,), fn, "index")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise EmptyInputError("stack of zero tensors")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack needs equal shapes, got {sorted(shapes)}")

    def fn(g: FloatArray) -> list[FloatArray]:
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    data = np.stack([t.data for t in tensors], axis=axis)
    return record_op(data, tensors, fn, "stack")


# ---------------------------------------------------------------------------
# Dense linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product ``a @ b``.

    ``a`` is [..., M, K]; ``b`` is either [K, P] (shared across the leading
    axes of ``a``) or [..., K, P] with the same leading axes.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    shared = b.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch extents differ: {a.shape} @ {b.shape}")
    m, k = a.shape[-2:]
    p = b.shape[-1]
    batch = int(np.prod(a.shape[:-2], dtype=np.int64))
    _count("matmul", 2 * batch * m * k * p)

    def fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        da = g @ np.swapaxes(b.data, -1, -2)
        if shared:
            db = a.data.reshape(-1, k).T @ g.reshape(-1, p)
        else:
            db = np.swapaxes(a.data, -1, -2) @ g
        return da, db

    return record_op(a.data @ b.data, (a, b), fn, "matmul")


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation of x[B, C, H, W] with w[O, C, k, k]."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d needs rank-4 operands, got {x.shape}, {w.shape}")
    if stride < 1 or padding < 0:
        raise ContractError("conv2d needs stride >= 1, padding >= 0")
    bsz, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if cw != c:
        raise DimensionError(f"conv2d channels differ: input {c}, kernel {cw}")
    if kh > h + 2 * padding or kw > wd + 2 * padding:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x"
            f"{wd + 2 * padding}"
        )
    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    xp = np.pad(x.data, pad)
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    out = np.einsum("bchwij,ocij->bohw", windows, w.data, optimize=True)
    _count("conv2d", 2 * bsz * o * c * kh * kw * ho * wo)

    def fn(g: FloatArray) -> tuple[FloatArray, FloatArray]:
        dw = np.einsum("bohw,bchwij->ocij", g, windows, optimize=True)
        dwin = np.einsum("bohw,ocij->bchwij", g, w.data, optimize=True)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[
                    :,
                    :,
                    i : i + stride * ho : stride,
                    j : j + stride * wo : stride,
                ] += dwin[..., i, j]
        dx = dxp[:, :, padding : padding + h, padding : padding + wd]
        return dx, dw

    return record_op(out, (x, w), fn, "conv2d")


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling over the last two axes of x[B, C, H, W]."""
    if x.ndim != 4:
        raise DimensionError(f"max_pool2d needs rank 4, got {x.shape}")
    bsz, c, h, w = x.shape
    if h % size or w % size:
        raise DimensionError(f"max_pool2d: {h}x{w} not divisible by {size}")
    tiles = (
        x.data.reshape(bsz, c, h // size, size, w // size, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(bsz, c, h // size, w // size, size * size)
    )
    winner = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, winner[..., None], axis=-1)[..., 0]

    def fn(g: FloatArray) -> tuple[FloatArray]:
        dt = np.zeros_like(tiles)
        np.put_along_axis(dt, winner[..., None], g[..., None], axis=-1)
        dx = (
            dt.reshape(bsz, c, h // size, w // size, size, size)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(bsz, c, h, w)
        )
        return (dx,)

    return record_op(out, (x,), fn, "max_pool2d")


# ---------------------------------------------------------------------------
# Normalisation and loss
# ---------------------------------------------------------------------------


@dataclass
class RunningStats:
    """Per-feature running mean and variance of a batch-norm layer."""

    mean: FloatArray
    var: FloatArray

    @classmethod
    def fresh(cls, features: int) -> RunningStats:
        return cls(np.zeros(features), np.ones(features))


def batch_norm(
    x: Tensor,
    gamma: Tensor | None,
    beta: Tensor | None,
    stats: RunningStats,
    training: bool,
    axis: int = 1,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Normalise ``x`` per feature along ``axis``, reducing over every other axis.

    Time and batch axes are ordinary reduction axes here, which is how the
    time dimension merges with the batch. Training mode updates ``stats`` in
    place with momentum; eval mode normalises with ``stats``.
    """
    axis = axis % x.ndim
    features = x.shape[axis]
    if stats.mean.shape != (features,):
        raise DimensionError(f"running stats for {stats.mean.shape}, got {features}")
    reduce_axes = tuple(i for i in range(x.ndim) if i != axis)
    count = x.size // max(features, 1)
    if count == 0:
        raise EmptyInputError("batch_norm over an empty batch")
    bshape = [1] * x.ndim
    bshape[axis] = features

    if training:
        mu = x.data.mean(axis=reduce_axes)
        var = x.data.var(axis=reduce_axes)
        unbiased = var * count / (count - 1) if count > 1 else var
        stats.mean = (1 - momentum) * stats.mean + momentum * mu
        stats.var = (1 - momentum) * stats.var + momentum * unbiased
    else:
        mu, var = stats.mean, stats.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    g_arr = gamma.data.reshape(bshape) if gamma is not None else 1.0
    out = xhat * g_arr
    if beta is not None:
        out = out + beta.data.reshape(bshape)

    inputs: list[Tensor] = [x]
    if gamma is not None:
        inputs.append(gamma)
    if beta is not None:
        inputs.append(beta)

    def fn(g: FloatArray) -> list[FloatArray]:
        dxhat = g * g_arr
        if training:
            m1 = dxhat.mean(axis=reduce_axes, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=reduce_axes, keepdims=True)
            dx = (dxhat - m1 - xhat * m2) * inv_std.reshape(bshape)
        else:
            dx = dxhat * inv_std.reshape(bshape)
        grads = [dx]
        if gamma is not None:
            grads.append((g * xhat).sum(axis=reduce_axes))
        if beta is not None:
            grads.append(g.sum(axis=reduce_axes))
        return grads

    return record_op(out, inputs, fn, "batch_norm")


def cross_entropy(logits: Tensor, labels: npt.ArrayLike) -> Tensor:
    """Mean softmax cross-entropy of logits[B, C] against integer labels[B]."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy needs [B, C] logits, got {logits.shape}")
    y = np.asarray(labels, dtype=np.int64)
    bsz, classes = logits.shape
    if y.shape != (bsz,):
        raise DimensionError(f"labels shape {y.shape} for {bsz} logits")
    if bsz == 0:
        raise EmptyInputError("cross_entropy over an empty batch")
    if np.any((y < 0) | (y >= classes)):
        raise ContractError(f"labels outside [0, {classes})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    loss = -logp[np.arange(bsz), y].mean()

    def fn(g: FloatArray) -> tuple[FloatArray]:
        grad = np.exp(logp)
        grad[np.arange(bsz), y] -= 1.0
        return (grad * (float(g) / bsz),)

    return record_op(np.asarray(loss), (logits,), fn, "cross_entropy")


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def finite_diff_check(
    f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5
) -> float:
    """Max relative error between tape and central-difference gradients.

    The denominator per coordinate is ``max(|analytic|, |numeric|, 1e-8)``.
    Custom-gradient nodes (surrogate spikes) are compared against their
    surrogate derivative, since that is what the tape records.
    """
    if h <= 0:
        raise ContractError("finite difference step must be positive")
    point = Tensor(x.data, requires_grad=True)
    with Tape():
        loss = f(point)
    backward(loss)
    analytic = point.grad if point.grad is not None else np.zeros_like(point.data)

    base = x.data.copy()
    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(Tensor(base)).item()
        flat[i] = orig - h
        down = f(Tensor(base)).item()
        flat[i] = orig
        numeric.reshape(-1)[i] = (up - down) / (2 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


# ---------------------------------------------------------------------------
# FWT1 serialization
# ---------------------------------------------------------------------------


def tensor_to_bytes(t: Tensor) -> bytes:
    header = TENSOR_MAGIC + struct.pack("<I", t.ndim)
    header += struct.pack(f"<{t.ndim}Q", *t.shape)
    return header + t.data.astype("<f8").tobytes(order="C")


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[Tensor, int]:
    """Decode one FWT1 tensor at ``offset``; returns it and the end offset."""
    if buf[offset : offset + 4] != TENSOR_MAGIC:
        raise FormatError("bad tensor magic", offset)
    pos = offset + 4
    if len(buf) < pos + 4:
        raise FormatError("truncated tensor rank", pos)
    (rank,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if len(buf) < pos + 8 * rank:
        raise FormatError("truncated tensor extents", pos)
    extents = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    count = math.prod(extents)
    if count > (len(buf) - pos) // 8:
        if count > len(buf):
            raise FormatError(f"implausible tensor extents {extents}", pos)
        raise FormatError(f"truncated payload, expected {count} values", pos)
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=pos)
    pos += 8 * count
    try:
        return Tensor(data.reshape(extents)), pos
    except NumericalError as err:
        raise FormatError("payload holds non-finite values", pos - 8 * count) from err


def save_tensor(t: Tensor, path: str | Path) -> None:
    Path(path).write_bytes(tensor_to_bytes(t))
