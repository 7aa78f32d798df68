"""Orthogonality of the attention bases Q·Kᵀ during training."""

import logging
from collections.abc import Sequence
from typing import TYPE_CHECKING

import numpy as np

from fwformer.errors import ContractError, EmptyInputError
from fwformer.tensor import FloatArray, Tensor

if TYPE_CHECKING:
    from fwformer.model import FWFormer

logger = logging.getLogger(__name__)

_ZERO_ROW = 1e-12


def orthogonality_score(q: Tensor | FloatArray, k: Tensor | FloatArray) -> float:
    """Summed absolute overlap between the unit-normalised rows of A = Q·Kᵀ.

    Each row of A is one basis function. The score is
    ``sum_{i != j} |<a_i, a_j>|`` over rows rescaled to unit length; all-zero
    rows are skipped. Orthonormal bases score 0.
    """
    qa = q.data if isinstance(q, Tensor) else np.asarray(q, dtype=np.float64)
    ka = k.data if isinstance(k, Tensor) else np.asarray(k, dtype=np.float64)
    if qa.ndim != 2 or ka.ndim != 2 or qa.shape != ka.shape:
        raise ContractError(
            f"expected matching [N, d] Q and K, got {qa.shape}, {ka.shape}"
        )
    a = qa @ ka.T
    norms = np.linalg.norm(a, axis=1)
    rows = a[norms > _ZERO_ROW] / norms[norms > _ZERO_ROW, None]
    gram = np.abs(rows @ rows.T)
    return float(gram.sum() - np.trace(gram))


def measure_orthogonality(model: "FWFormer", batch: Tensor) -> float:
    """Mean score over every SSA layer, time step, sample and head for ``batch``.

    The model runs in eval mode so measuring does not move running statistics.
    """
    heads = model.ssa_heads()
    if not heads:
        raise ContractError("orthogonality tracing needs a model with SSA heads")
    was_training = model.training
    model.eval()
    try:
        for head in heads:
            head.capture = True
        model(batch)
    finally:
        for head in heads:
            head.capture = False
        model.train(was_training)

    scores = []
    for head in heads:
        captured = head.captured
        assert captured is not None
        q, k = captured
        n, d = q.shape[-2:]
        for qs, ks in zip(q.reshape(-1, n, d), k.reshape(-1, n, d), strict=True):
            scores.append(orthogonality_score(qs, ks))
    return float(np.mean(scores))


def trend_slope(values: Sequence[float]) -> float:
    """Least-squares slope of ``values`` against their index."""
    if len(values) < 2:
        raise EmptyInputError("a trend needs at least two points")
    steps = np.arange(len(values), dtype=np.float64)
    slope, _ = np.polyfit(steps, np.asarray(values, dtype=np.float64), 1)
    return float(slope)


def window_ratio(values: Sequence[float], fraction: float = 0.1) -> float:
    """Mean of the last ``fraction`` of values over the mean of the first."""
    if not 0 < fraction <= 0.5:
        raise ContractError(f"window fraction must be in (0, 0.5], got {fraction}")
    if not values:
        raise EmptyInputError("window ratio of an empty trace")
    width = max(1, int(len(values) * fraction))
    first = float(np.mean(values[:width]))
    last = float(np.mean(values[-width:]))
    if first == 0:
        raise ContractError("first window mean is zero; ratio undefined")
    return last / first
