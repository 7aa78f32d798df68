"""Event streams, frame binning, the moving-bar dataset and tensor files.

Event files are CSV with the header ``t_us,x,y,p`` plus a ``.label`` sidecar
holding ``label``, ``width`` and ``height`` as ``key=value`` lines. Datasets
live under ``<root>/<split>/<class>/<sample>.csv``.
"""

import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pandas as pd

from fwformer.errors import ContractError, EmptyInputError, FormatError
from fwformer.tensor import FloatArray, IntArray, Tensor, tensor_from_bytes

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ["t_us", "x", "y", "p"]
DIRECTIONS = ("up", "down", "left", "right")
SENSOR_SIZE = 32
POLARITIES = 2


@dataclass(frozen=True)
class EventStream:
    """Time-ordered DVS events of one recording.

    ``t`` is in microseconds; ``p`` is 1 for ON and 0 for OFF events.
    """

    t: IntArray
    x: IntArray
    y: IntArray
    p: IntArray
    width: int
    height: int
    label: int

    def __post_init__(self) -> None:
        n = self.t.shape[0]
        if any(a.shape != (n,) for a in (self.x, self.y, self.p)):
            raise ContractError("event arrays must be 1-D and equally long")
        if self.width < 1 or self.height < 1:
            raise ContractError(f"bad sensor size {self.width}x{self.height}")
        if n == 0:
            return
        if np.any(np.diff(self.t) < 0):
            raise ContractError("event timestamps must be non-decreasing")
        if self.x.min() < 0 or self.x.max() >= self.width:
            raise ContractError(f"x outside [0, {self.width})")
        if self.y.min() < 0 or self.y.max() >= self.height:
            raise ContractError(f"y outside [0, {self.height})")
        if not np.isin(self.p, (0, 1)).all():
            raise ContractError("polarity must be 0 or 1")

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def mirrored_x(self) -> "EventStream":
        return EventStream(
            self.t,
            self.width - 1 - self.x,
            self.y,
            self.p,
            self.width,
            self.height,
            self.label,
        )


@dataclass(frozen=True)
class FrameTensor:
    """Event counts binned to [T, 2, H, W], one channel per polarity."""

    frames: Tensor

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def total(self) -> int:
        return int(self.frames.data.sum())


def events_to_frames(stream: EventStream, T: int) -> FrameTensor:
    """Bin events uniformly over [t_min, t_max]; t_max lands in the last bin."""
    if T < 1:
        raise ContractError(f"T must be >= 1, got {T}")
    if len(stream) == 0:
        raise EmptyInputError("cannot bin an empty event stream")
    t0 = int(stream.t[0])
    span = int(stream.t[-1]) - t0
    if span == 0:
        bins = np.zeros(len(stream), dtype=np.int64)
    else:
        bins = np.minimum((stream.t - t0) * T // span, T - 1)
    frames = np.zeros((T, POLARITIES, stream.height, stream.width))
    np.add.at(frames, (bins, stream.p, stream.y, stream.x), 1.0)
    return FrameTensor(Tensor(frames))


def repeat_static(image: Tensor, T: int) -> Tensor:
    """Stack T copies of a static [C, H, W] image along a new time axis."""
    if T < 1:
        raise ContractError(f"T must be >= 1, got {T}")
    return Tensor(np.broadcast_to(image.data, (T, *image.shape)))


# ---------------------------------------------------------------------------
# Moving bar
# ---------------------------------------------------------------------------


def _rightward_sweep(
    rng: np.random.Generator, size: int
) -> tuple[IntArray, IntArray, IntArray, IntArray]:
    """Events of a vertical bar sweeping towards +x, sorted by time."""
    width = int(rng.integers(2, 5))
    y_lo = int(rng.integers(0, size // 4))
    y_hi = int(rng.integers(3 * size // 4, size + 1))
    step_us = int(rng.integers(800, 1200))
    t_start = int(rng.integers(0, 5000))
    ts: list[IntArray] = []
    xs: list[IntArray] = []
    ys: list[IntArray] = []
    ps: list[IntArray] = []
    rows = np.arange(y_lo, y_hi, dtype=np.int64)
    for step in range(size - width + 1):
        edges = [(step + width - 1, 1)]
        if step > 0:
            edges.append((step - 1, 0))
        for column, polarity in edges:
            keep = rows[rng.random(rows.size) > 0.1]
            jitter = rng.integers(0, step_us // 2, size=keep.size)
            ts.append(t_start + step * step_us + jitter)
            xs.append(np.full(keep.size, column, dtype=np.int64))
            ys.append(keep)
            ps.append(np.full(keep.size, polarity, dtype=np.int64))
    t = np.concatenate(ts).astype(np.int64)
    order = np.argsort(t, kind="stable")
    return (
        t[order],
        np.concatenate(xs)[order],
        np.concatenate(ys)[order],
        np.concatenate(ps)[order],
    )


def gen_moving_bar(direction: str, seed: int, size: int = SENSOR_SIZE) -> EventStream:
    """A bar crossing a size x size sensor; the class is the sweep direction.

    ON events fire at the leading edge and OFF events at the trailing edge.
    All directions share one random sweep per seed, so the ``left`` stream
    mirrored in x is exactly the ``right`` stream.
    """
    if direction not in DIRECTIONS:
        raise ContractError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    t, x, y, p = _rightward_sweep(np.random.default_rng(seed), size)
    if direction == "left":
        x = size - 1 - x
    elif direction == "down":
        x, y = y, x
    elif direction == "up":
        x, y = y, size - 1 - x
    return EventStream(t, x, y, p, size, size, DIRECTIONS.index(direction))


def sample_seed(seed: int, split: str, index: int) -> int:
    """Per-sample generator seed; train and test never share a sweep."""
    offset = 0 if split == "train" else 1_000_000
    return seed * 10_000_019 + offset + index


# ---------------------------------------------------------------------------
# Event CSV files
# ---------------------------------------------------------------------------


def write_event_csv(stream: EventStream, path: Path) -> None:
    """Write ``stream`` as CSV and its label/sensor size as a sidecar."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {"t_us": stream.t, "x": stream.x, "y": stream.y, "p": stream.p},
        columns=EVENT_COLUMNS,
    )
    frame.to_csv(path, index=False)
    path.with_suffix(".label").write_text(
        f"label={stream.label}\nwidth={stream.width}\nheight={stream.height}\n",
        encoding="utf-8",
    )


def _read_sidecar(path: Path) -> dict[str, int]:
    sidecar = path.with_suffix(".label")
    if not sidecar.is_file():
        raise FormatError(f"missing label sidecar {sidecar}", 0)
    values: dict[str, int] = {}
    for lineno, line in enumerate(sidecar.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        try:
            if not sep:
                raise ValueError(line)
            values[key.strip()] = int(value)
        except ValueError as err:
            raise FormatError(f"{sidecar}: bad line {line!r}", lineno) from err
    for key in ("label", "width", "height"):
        if key not in values:
            raise FormatError(f"{sidecar}: missing {key}", 0)
    return values


def read_event_csv(path: Path) -> EventStream:
    """Parse an event CSV; errors carry the 1-based line number in ``offset``."""
    meta = _read_sidecar(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as err:
        raise FormatError(f"{path}: empty event file", 1) from err
    if list(frame.columns) != EVENT_COLUMNS:
        raise FormatError(f"{path}: header must be {','.join(EVENT_COLUMNS)}", 1)
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1) | (numeric % 1 != 0).any(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise FormatError(f"{path}: non-integer field", row + 2)
    cols = {c: numeric[c].to_numpy(dtype=np.int64) for c in EVENT_COLUMNS}
    width, height = meta["width"], meta["height"]
    checks = (
        (np.diff(cols["t_us"], prepend=cols["t_us"][:1]) < 0, "timestamp decreases"),
        ((cols["x"] < 0) | (cols["x"] >= width), "x outside sensor"),
        ((cols["y"] < 0) | (cols["y"] >= height), "y outside sensor"),
        (~np.isin(cols["p"], (0, 1)), "polarity not 0/1"),
    )
    for mask, what in checks:
        if mask.any():
            raise FormatError(f"{path}: {what}", int(np.flatnonzero(mask)[0]) + 2)
    return EventStream(
        cols["t_us"], cols["x"], cols["y"], cols["p"], width, height, meta["label"]
    )


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Inputs [S, T, C, H, W] with integer labels [S]."""

    inputs: FloatArray
    labels: IntArray
    classes: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.inputs.ndim != 5 or self.inputs.shape[0] != self.labels.shape[0]:
            raise ContractError(
                f"inputs {self.inputs.shape} do not match labels {self.labels.shape}"
            )

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.inputs.shape[1:])

    def batches(
        self, batch_size: int, rng: np.random.Generator | None = None
    ) -> list[tuple[Tensor, IntArray]]:
        return list(iter_batches(self, batch_size, rng))


def iter_batches(
    dataset: Dataset, batch_size: int, rng: np.random.Generator | None = None
) -> Iterator[tuple[Tensor, IntArray]]:
    """Yield ([T, B, C, H, W] tensor, labels) batches, shuffled when ``rng`` is set."""
    if len(dataset) == 0:
        raise EmptyInputError("dataset has no samples")
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    count = len(dataset)
    order = rng.permutation(count) if rng is not None else np.arange(count)
    for start in range(0, len(dataset), batch_size):
        idx = order[start : start + batch_size]
        batch = np.moveaxis(dataset.inputs[idx], 0, 1)
        yield Tensor(batch), dataset.labels[idx]


def stack_streams(
    streams: Sequence[EventStream], T: int, classes: tuple[str, ...]
) -> Dataset:
    if not streams:
        raise EmptyInputError("no event streams to stack")
    inputs = np.stack([events_to_frames(s, T).frames.data for s in streams])
    labels = np.array([s.label for s in streams], dtype=np.int64)
    return Dataset(inputs, labels, classes)


def moving_bar_dataset(
    samples: int, seed: int, T: int, split: str = "train"
) -> Dataset:
    """In-memory moving-bar split with classes cycling through the directions."""
    streams = [
        gen_moving_bar(DIRECTIONS[i % len(DIRECTIONS)], sample_seed(seed, split, i))
        for i in range(samples)
    ]
    return stack_streams(streams, T, DIRECTIONS)


def write_moving_bar_dataset(
    root: Path, splits: dict[str, int], seed: int
) -> list[Path]:
    """Write moving-bar CSVs under ``root``; the same seeds as the in-memory set."""
    written = []
    for split, samples in splits.items():
        for i in range(samples):
            direction = DIRECTIONS[i % len(DIRECTIONS)]
            stream = gen_moving_bar(direction, sample_seed(seed, split, i))
            path = root / split / direction / f"{i:05d}.csv"
            write_event_csv(stream, path)
            written.append(path)
    logger.info("wrote %d event files under %s", len(written), root)
    return written


def load_split(root: Path, split: str, T: int) -> Dataset:
    """Load ``<root>/<split>/<class>/*.csv``; class names are the sorted dirs."""
    split_dir = root / split
    if not split_dir.is_dir():
        raise FormatError(f"missing split directory {split_dir}", 0)
    streams = []
    names: dict[int, str] = {}
    for class_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        for path in sorted(class_dir.glob("*.csv")):
            stream = read_event_csv(path)
            if names.setdefault(stream.label, class_dir.name) != class_dir.name:
                raise FormatError(
                    f"{path}: label {stream.label} already used by "
                    f"{names[stream.label]!r}",
                    0,
                )
            streams.append(stream)
    if not streams:
        raise EmptyInputError(f"no event files under {split_dir}")
    classes = tuple(names.get(i, f"class{i}") for i in range(max(names) + 1))
    logger.debug("loaded %d streams from %s", len(streams), split_dir)
    return stack_streams(streams, T, classes)


def load_raw_tensor(path: Path) -> Tensor:
    """Read a single FWT1 tensor file; trailing bytes are an error."""
    buf = path.read_bytes()
    tensor, end = tensor_from_bytes(buf, 0)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after tensor", end)
    return tensor
