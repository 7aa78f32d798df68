"""Synaptic-operation accounting and the 45nm energy model.

A layer trace holds the FLOPs of one accounted layer for one sample and one
time step, together with the mean firing rate of that layer's input. Spiking
layers cost ``rate * T * FLOPs`` accumulates (SOPs) at ``E_AC_PJ`` each. The
first layer of a static-image model sees real-valued pixels, so its FLOPs are
costed as multiply-accumulates at ``E_MAC_PJ`` instead.
"""

import json
import logging
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from fwformer.errors import ContractError, EmptyInputError, FormatError
from fwformer.tensor import Tensor

if TYPE_CHECKING:
    from fwformer.model import FWFormer

logger = logging.getLogger(__name__)

E_MAC_PJ = 4.6
E_AC_PJ = 0.9
PJ_PER_MJ = 10**9
OPS_PER_G = 10**9


class LayerKind(str, Enum):
    CONV_FIRST = "conv_first"
    CONV = "conv"
    FC = "fc"
    MIXER = "mixer"


@dataclass(frozen=True)
class LayerTrace:
    """FLOPs and input firing rate of one accounted layer."""

    name: str
    kind: LayerKind
    flops: int
    rate: float
    T: int

    def __post_init__(self) -> None:
        _check_rate(self.name, self.rate)
        if self.flops < 0:
            raise ContractError(f"{self.name}: flops must be >= 0, got {self.flops}")
        if self.T < 1:
            raise ContractError(f"{self.name}: T must be >= 1, got {self.T}")


def _check_rate(name: str, rate: float) -> None:
    if not 0.0 <= rate <= 1.0:
        raise ContractError(f"{name}: firing rate {rate} outside [0, 1]")


def sops(trace: LayerTrace) -> float:
    """Synaptic operations of one layer: rate * T * FLOPs."""
    _check_rate(trace.name, trace.rate)
    return trace.rate * trace.T * trace.flops


@dataclass(frozen=True)
class LayerEnergy:
    name: str
    kind: str
    flops: int
    rate: float
    sops: float
    energy_pj: float


@dataclass(frozen=True)
class EnergyReport:
    """Per-layer costs plus totals; totals are exact sums of the layers."""

    layers: tuple[LayerEnergy, ...]
    first_layer_is_float: bool
    e_mac_pj: float = E_MAC_PJ
    e_ac_pj: float = E_AC_PJ

    @property
    def total_ops(self) -> float:
        """Operations of the whole network: MACs of a float first layer plus SOPs."""
        total = 0.0
        for i, layer in enumerate(self.layers):
            is_mac = i == 0 and self.first_layer_is_float
            total += layer.flops if is_mac else layer.sops
        return total

    @property
    def total_ops_g(self) -> float:
        return self.total_ops / OPS_PER_G

    @property
    def total_energy_pj(self) -> float:
        return sum(layer.energy_pj for layer in self.layers)

    @property
    def total_energy_mj(self) -> float:
        return self.total_energy_pj / PJ_PER_MJ

    def to_jsonl(self) -> str:
        """One JSON object per layer, then a footer object with the totals."""
        lines = [json.dumps(asdict(layer)) for layer in self.layers]
        footer = {
            "total_ops_g": self.total_ops_g,
            "total_energy_mj": self.total_energy_mj,
            "first_layer_is_float": self.first_layer_is_float,
        }
        lines.append(json.dumps(footer))
        return "\n".join(lines) + "\n"

    def write(self, path: Path) -> None:
        path.write_text(self.to_jsonl(), encoding="utf-8")


def total_energy(
    traces: Sequence[LayerTrace], first_layer_is_float: bool = True
) -> EnergyReport:
    """Cost a list of traces; the first trace is the network's first layer."""
    if not traces:
        raise EmptyInputError("total_energy needs at least one layer trace")
    layers = []
    for i, trace in enumerate(traces):
        ops = sops(trace)
        if i == 0 and first_layer_is_float:
            energy = E_MAC_PJ * trace.flops
        else:
            energy = E_AC_PJ * ops
        layers.append(
            LayerEnergy(
                trace.name, trace.kind.value, trace.flops, trace.rate, ops, energy
            )
        )
    report = EnergyReport(tuple(layers), first_layer_is_float)
    logger.debug(
        "energy over %d layers: %.6g G-ops, %.6g mJ",
        len(layers),
        report.total_ops_g,
        report.total_energy_mj,
    )
    return report


def read_energy_report(path: Path) -> EnergyReport:
    """Parse a report written by :meth:`EnergyReport.write`."""
    rows = path.read_text(encoding="utf-8").splitlines()
    if not rows:
        raise FormatError("empty energy report", 1)
    layers: list[LayerEnergy] = []
    lineno = 1
    try:
        for lineno, row in enumerate(rows[:-1], start=1):
            layers.append(LayerEnergy(**json.loads(row)))
        lineno = len(rows)
        footer: dict[str, Any] = json.loads(rows[-1])
        first_is_float = bool(footer["first_layer_is_float"])
    except (json.JSONDecodeError, TypeError, KeyError) as err:
        raise FormatError(f"bad energy report line: {err}", lineno) from err
    return EnergyReport(tuple(layers), first_is_float)


# ---------------------------------------------------------------------------
# Rate recording
# ---------------------------------------------------------------------------


@dataclass
class RateRecorder:
    """Collects one trace per accounted layer call during a forward pass."""

    traces: list[LayerTrace] = field(default_factory=list)

    def observe(self, name: str, kind: LayerKind, x: Tensor, flops: int) -> None:
        """Record a layer fed ``x`` of shape [T, B, ...] that spent ``flops``.

        ``flops`` covers the whole call and is divided down to one sample and
        one time step.
        """
        if x.ndim < 2 or x.size == 0:
            raise ContractError(
                f"{name}: accounted input needs [T, B, ...], got {x.shape}"
            )
        steps, batch = x.shape[:2]
        rate = float(np.count_nonzero(x.data)) / x.size
        self.traces.append(
            LayerTrace(name, kind, flops // (steps * batch), rate, steps)
        )


_recorder: ContextVar[RateRecorder | None] = ContextVar(
    "fwformer_rates", default=None
)


def observe(name: str, kind: LayerKind, x: Tensor, flops: int) -> None:
    """Report an accounted layer call to the active recorder, if any."""
    recorder = _recorder.get()
    if recorder is not None:
        recorder.observe(name, kind, x, flops)


@contextmanager
def recording() -> Iterator[RateRecorder]:
    recorder = RateRecorder()
    token = _recorder.set(recorder)
    try:
        yield recorder
    finally:
        _recorder.reset(token)


def record_rates(model: "FWFormer", batch: Tensor) -> list[LayerTrace]:
    """Run ``model`` on ``batch`` in eval mode and return its layer traces."""
    was_training = model.training
    model.eval()
    try:
        with recording() as recorder:
            model(batch)
    finally:
        model.train(was_training)
    logger.debug("recorded %d layer traces", len(recorder.traces))
    return recorder.traces


def average_traces(runs: Sequence[Sequence[LayerTrace]]) -> list[LayerTrace]:
    """Average the rates of several recordings of the same model, layer by layer."""
    if not runs:
        raise EmptyInputError("average_traces needs at least one recording")
    first = runs[0]
    for run in runs[1:]:
        if [t.name for t in run] != [t.name for t in first]:
            raise ContractError("recordings come from different layer sequences")
    averaged = []
    for i, trace in enumerate(first):
        rate = float(np.mean([run[i].rate for run in runs]))
        averaged.append(
            LayerTrace(trace.name, trace.kind, trace.flops, min(rate, 1.0), trace.T)
        )
    return averaged


def accounted_layer_count(layers: int, has_projections: bool) -> int:
    """Traces one forward pass produces.

    Four SPS convolutions and the positional convolution, then per encoder
    layer the mixer and two MLP layers, plus four projections for SSA.
    """
    per_layer = 3 + (4 if has_projections else 0)
    return 5 + layers * per_layer
