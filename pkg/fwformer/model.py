"""Network assembly, the training step, evaluation and checkpoints.

Images enter as [T, B, C, H, W] and token sequences travel as [T, B, N, D].
The forward pass is

    P   = SPS(I)
    X0  = P OR SN(BN(Conv(P)))                      (conditional positions)
    X'  = SN(BN(Mix(X))) OR X                       (per encoder layer)
    X   = SN(BN(MLP(X'))) OR X'
    Y   = FC(mean over T and N of X_L)

With the membrane shortcut the residuals are summed on membrane potentials
instead, and spikes are only taken right before each sub-layer.
"""

import io
import logging
import math
import struct
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt

from fwformer.config import parse_config_text, to_text
from fwformer.errors import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    FormatError,
    NumericalError,
    TrainingError,
)
from fwformer.heads import MixerHead, SSAHead, build_head
from fwformer.layers import BatchNorm, Conv2d, Linear, Module
from fwformer.optim import AdamW
from fwformer.profiler import LayerKind
from fwformer.shared import ModelConfig, RunConfig, Shortcut
from fwformer.spiking import SpikeTrain, lif_run, spike_or
from fwformer.tensor import (
    IntArray,
    Tape,
    Tensor,
    backward,
    cross_entropy,
    max_pool2d,
    tensor_from_bytes,
    tensor_to_bytes,
)

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"FWC1"
SPS_BLOCKS = 4


def _pool(x: Tensor) -> Tensor:
    steps, batch, c, h, w = x.shape
    pooled = max_pool2d(x.reshape(steps * batch, c, h, w), 2)
    return pooled.reshape(steps, batch, c, h // 2, w // 2)


class SpikingPatchSplitting(Module):
    """Conv-BN-SN blocks with channels C -> D/8 -> D/4 -> D/2 -> D.

    The last log2(patch) blocks end in a 2x2 max pool, shrinking H x W to
    (H / patch) x (W / patch) tokens.
    """

    def __init__(self, rng: np.random.Generator, config: ModelConfig) -> None:
        d = config.D
        channels = [config.C, d // 8, d // 4, d // 2, d]
        pools = int(math.log2(config.patch))
        self.convs = [
            Conv2d(
                rng,
                channels[i],
                channels[i + 1],
                kind=LayerKind.CONV_FIRST if i == 0 else LayerKind.CONV,
            )
            for i in range(SPS_BLOCKS)
        ]
        self.norms = [BatchNorm(channels[i + 1], axis=2) for i in range(SPS_BLOCKS)]
        self._pooled = [i >= SPS_BLOCKS - pools for i in range(SPS_BLOCKS)]
        self._config = config

    def __call__(self, images: Tensor) -> SpikeTrain:
        cfg = self._config
        expected = (cfg.T, cfg.C, cfg.H, cfg.W)
        if images.ndim != 5 or (images.shape[0], *images.shape[2:]) != expected:
            raise DimensionError(
                f"expected images [T={cfg.T}, B, {cfg.C}, {cfg.H}, {cfg.W}], "
                f"got {images.shape}"
            )
        x = images
        blocks = zip(self.convs, self.norms, self._pooled, strict=True)
        for conv, norm, pooled in blocks:
            x = lif_run(norm(conv(x)), cfg.lif).spikes
            if pooled:
                x = _pool(x)
        steps, batch, d, h, w = x.shape
        return SpikeTrain(x.reshape(steps, batch, d, h * w).transpose(0, 1, 3, 2))


class ConditionalPositionEmbedding(Module):
    """RPE = SN(BN(Conv3x3(P on its token grid)))."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig) -> None:
        side = math.isqrt(config.N)
        if side * side != config.N:
            raise ConfigError(f"N={config.N} is not a perfect square token grid")
        self.conv = Conv2d(rng, config.D, config.D)
        self.norm = BatchNorm(config.D, axis=2)
        self._side = side
        self._config = config

    def current(self, p: Tensor) -> Tensor:
        steps, batch, n, d = p.shape
        grid = p.transpose(0, 1, 3, 2).reshape(steps, batch, d, self._side, self._side)
        out = self.norm(self.conv(grid))
        return out.reshape(steps, batch, d, n).transpose(0, 1, 3, 2)

    def __call__(self, p: SpikeTrain) -> SpikeTrain:
        """X0 = P OR RPE, which keeps X0 binary where the two overlap."""
        rpe = lif_run(self.current(p.spikes), self._config.lif)
        return SpikeTrain(spike_or(p.spikes, rpe.spikes))

    def membrane(self, p: SpikeTrain) -> Tensor:
        """Membrane-shortcut entry: P plus the RPE current, not yet thresholded."""
        return p.spikes + self.current(p.spikes)


class SpikingMLP(Module):
    """fc1 -> BN -> SN -> fc2 -> BN, with hidden width mlp_ratio * D."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig) -> None:
        hidden = config.mlp_ratio * config.D
        self.fc1 = Linear(rng, config.D, hidden)
        self.norm1 = BatchNorm(hidden, axis=-1)
        self.fc2 = Linear(rng, hidden, config.D)
        self.norm2 = BatchNorm(config.D, axis=-1)
        self._config = config

    def current(self, x: Tensor) -> Tensor:
        hidden = lif_run(self.norm1(self.fc1(x)), self._config.lif).spikes
        return self.norm2(self.fc2(hidden))

    def __call__(self, x: SpikeTrain) -> SpikeTrain:
        return lif_run(self.current(x.spikes), self._config.lif)


class EncoderLayer(Module):
    def __init__(self, rng: np.random.Generator, config: ModelConfig) -> None:
        self.head: MixerHead = build_head(rng, config.mixer, config.D, config.lif)
        self.mlp = SpikingMLP(rng, config)
        self._config = config

    def __call__(self, x: SpikeTrain) -> SpikeTrain:
        mixed = SpikeTrain(spike_or(self.head(x).spikes, x.spikes))
        return SpikeTrain(spike_or(self.mlp(mixed).spikes, mixed.spikes))

    def forward_membrane(self, u: Tensor) -> Tensor:
        """Membrane-shortcut layer: residuals add before thresholding."""
        lif = self._config.lif
        u = u + self.head.current(lif_run(u, lif).spikes)
        return u + self.mlp.current(lif_run(u, lif).spikes)


class Classifier(Module):
    """Global average pooling over T and N, then a dense layer to real logits."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig) -> None:
        self.fc = Linear(rng, config.D, config.classes, bias=True, accounted=False)

    @staticmethod
    def pool(x: SpikeTrain) -> Tensor:
        return x.spikes.mean(axis=(0, 2))

    def __call__(self, x: SpikeTrain) -> Tensor:
        return self.fc(self.pool(x))


class FWFormer(Module):
    """Spiking transformer with an interchangeable token-mixing head."""

    def __init__(self, config: ModelConfig, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        self.sps = SpikingPatchSplitting(rng, config)
        self.cpe = ConditionalPositionEmbedding(rng, config)
        self.layers = [EncoderLayer(rng, config) for _ in range(config.L)]
        self.classifier = Classifier(rng, config)
        self._config = config
        self._seed = seed
        self.assign_trace_names()
        logger.debug(
            "built %s model: %d parameters", config.mixer.name, self.num_parameters()
        )

    @property
    def config(self) -> ModelConfig:
        return self._config

    @property
    def seed(self) -> int:
        return self._seed

    def features(self, images: Tensor) -> SpikeTrain:
        """Encoder output X_L for images [T, B, C, H, W]."""
        patches = self.sps(images)
        if self._config.shortcut is Shortcut.VANILLA:
            x = self.cpe(patches)
            for layer in self.layers:
                x = layer(x)
            return x
        u = self.cpe.membrane(patches)
        for layer in self.layers:
            u = layer.forward_membrane(u)
        return lif_run(u, self._config.lif)

    def __call__(self, images: Tensor) -> Tensor:
        return self.classifier(self.features(images))

    def heads(self) -> list[MixerHead]:
        return [layer.head for layer in self.layers]

    def ssa_heads(self) -> list[SSAHead]:
        return [h for h in self.heads() if isinstance(h, SSAHead)]

    def head_parameter_count(self) -> int:
        """Trainable scalars inside the token mixers, across all layers."""
        return sum(p.size for h in self.heads() for p in h.mixing_parameters())


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------


def train_step(
    model: FWFormer, batch: Tensor, labels: npt.ArrayLike, optimizer: AdamW
) -> float:
    """One AdamW step on cross-entropy; returns the loss before the update."""
    model.train()
    optimizer.zero_grad()
    try:
        with Tape():
            logits = model(batch)
            loss = cross_entropy(logits, labels)
        backward(loss)
        value = loss.item()
        optimizer.step()
    except NumericalError as err:
        raise TrainingError(
            "non-finite values in training step",
            {
                "step": optimizer.step_count,
                "lr": optimizer.current_lr(),
                "batch_shape": batch.shape,
                "cause": str(err),
            },
        ) from err
    return value


@dataclass(frozen=True)
class EvalResult:
    loss: float
    accuracy: float
    samples: int


def _eval_shard(
    model: FWFormer, batch: Tensor, labels: IntArray
) -> tuple[float, int]:
    logits = model(batch)
    loss = cross_entropy(logits, labels).item() * labels.size
    correct = int(np.sum(np.argmax(logits.data, axis=1) == labels))
    return loss, correct


def evaluate(
    model: FWFormer,
    batches: Sequence[tuple[Tensor, IntArray]],
    workers: int = 1,
) -> EvalResult:
    """Mean loss and accuracy over ``batches`` in eval mode.

    With ``workers > 1`` batches are spread over a thread pool; eval mode
    reads parameters and running statistics without writing them.
    """
    if not batches:
        raise EmptyInputError("evaluate needs at least one batch")
    model.eval()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda b: _eval_shard(model, *b), batches))
    else:
        results = [_eval_shard(model, *b) for b in batches]
    samples = sum(labels.size for _, labels in batches)
    loss = sum(r[0] for r in results) / samples
    accuracy = sum(r[1] for r in results) / samples
    return EvalResult(loss, accuracy, samples)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """Config snapshot plus named tensors, as stored in an FWC1 file."""

    config: RunConfig
    tensors: dict[str, Tensor]

    @property
    def epoch(self) -> int:
        meta = self.tensors.get("meta/epoch")
        return int(meta.item()) if meta is not None else 0

    @property
    def step(self) -> int:
        meta = self.tensors.get("meta/step")
        return int(meta.item()) if meta is not None else 0

    def build_model(self) -> FWFormer:
        model = FWFormer(self.config.model, self.config.seed)
        self.restore(model)
        return model

    def restore(self, model: FWFormer, optimizer: AdamW | None = None) -> None:
        for name, param in model.named_parameters():
            param.assign(self._get(f"param/{name}", param.shape).data)
        for name, stats in model.named_stats():
            stats.mean = self._get(f"stats/{name}/mean", stats.mean.shape).data.copy()
            stats.var = self._get(f"stats/{name}/var", stats.var.shape).data.copy()
        if optimizer is not None:
            optimizer.load_state_tensors(self.tensors)

    def _get(self, key: str, shape: tuple[int, ...]) -> Tensor:
        tensor = self.tensors.get(key)
        if tensor is None:
            raise FormatError(f"checkpoint is missing tensor {key!r}", 0)
        if tensor.shape != tuple(shape):
            raise FormatError(f"{key} has shape {tensor.shape}, expected {shape}", 0)
        return tensor


def checkpoint_tensors(
    model: FWFormer,
    optimizer: AdamW | None = None,
    epoch: int = 0,
    step: int = 0,
) -> dict[str, Tensor]:
    tensors = {f"param/{n}": p.detach() for n, p in model.named_parameters()}
    for name, stats in model.named_stats():
        tensors[f"stats/{name}/mean"] = Tensor(stats.mean)
        tensors[f"stats/{name}/var"] = Tensor(stats.var)
    if optimizer is not None:
        tensors.update(optimizer.state_tensors())
    tensors["meta/epoch"] = Tensor(float(epoch))
    tensors["meta/step"] = Tensor(float(step))
    return tensors


def encode_checkpoint(config: RunConfig, tensors: dict[str, Tensor]) -> bytes:
    blob = to_text(config).encode("utf-8")
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(struct.pack("<I", len(blob)))
    out.write(blob)
    out.write(struct.pack("<I", len(tensors)))
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        out.write(struct.pack("<I", len(encoded)))
        out.write(encoded)
        out.write(tensor_to_bytes(tensor))
    return out.getvalue()


def decode_checkpoint(buf: bytes) -> Checkpoint:
    if buf[:4] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic", 0)

    def read_u32(pos: int) -> int:
        if len(buf) < pos + 4:
            raise FormatError("truncated checkpoint header", pos)
        return int(struct.unpack_from("<I", buf, pos)[0])

    size = read_u32(4)
    pos = 8
    if len(buf) < pos + size:
        raise FormatError("truncated config blob", pos)
    try:
        text = buf[pos : pos + size].decode("utf-8")
    except UnicodeDecodeError as err:
        raise FormatError("config blob is not UTF-8", pos) from err
    config = parse_config_text(text, "<checkpoint>")
    pos += size
    count = read_u32(pos)
    pos += 4
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        length = read_u32(pos)
        pos += 4
        if len(buf) < pos + length:
            raise FormatError("truncated tensor name", pos)
        try:
            name = buf[pos : pos + length].decode("utf-8")
        except UnicodeDecodeError as err:
            raise FormatError("tensor name is not UTF-8", pos) from err
        pos += length
        tensors[name], pos = tensor_from_bytes(buf, pos)
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after checkpoint", pos)
    return Checkpoint(config, tensors)


def save_checkpoint(
    path: Path,
    config: RunConfig,
    model: FWFormer,
    optimizer: AdamW | None = None,
    epoch: int = 0,
    step: int = 0,
) -> None:
    """Write an FWC1 checkpoint atomically (temp file, then rename)."""
    data = encode_checkpoint(config, checkpoint_tensors(model, optimizer, epoch, step))
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    logger.debug("saved checkpoint %s (%d bytes)", path, len(data))


def load_checkpoint(path: Path) -> Checkpoint:
    return decode_checkpoint(path.read_bytes())
