"""Token-mixing heads for the encoder layers."""

import numpy as np

from fwformer.heads.base import MixerHead
from fwformer.heads.fw import FWHead
from fwformer.heads.ops import OpCount, count_ops
from fwformer.heads.ortho import (
    measure_orthogonality,
    orthogonality_score,
    trend_slope,
    window_ratio,
)
from fwformer.heads.ssa import SSAHead, ssa_product
from fwformer.shared import LIFParams, MixerKind, MixerSpec

__all__ = [
    "FWHead",
    "MixerHead",
    "OpCount",
    "SSAHead",
    "build_head",
    "count_ops",
    "measure_orthogonality",
    "orthogonality_score",
    "ssa_product",
    "trend_slope",
    "window_ratio",
]


def build_head(
    rng: np.random.Generator, spec: MixerSpec, dim: int, lif: LIFParams
) -> MixerHead:
    """Construct the head named by ``spec``; every head has the same interface."""
    if spec.kind is MixerKind.SSA:
        return SSAHead(rng, spec, dim, lif)
    return FWHead(spec, dim, lif)
