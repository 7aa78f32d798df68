"""Generic training runner with per-epoch checkpoints and resume."""

import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd
from rich.console import Console

from fwformer.data import Dataset, iter_batches, load_split, moving_bar_dataset
from fwformer.errors import ConfigError
from fwformer.model import (
    Checkpoint,
    FWFormer,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train_step,
)
from fwformer.optim import AdamW, CosineSchedule
from fwformer.shared import EpochMetrics, RunConfig, StepResult, TrainCheckpoint

logger = logging.getLogger(__name__)
console = Console()

CHECKPOINT_NAME = "checkpoint.fwc"
METRICS_NAME = "metrics.csv"
FLOAT_FORMAT = "%.9g"

StepCallback = Callable[[StepResult, FWFormer], None]


@dataclass
class DatasetSplits:
    train: Dataset
    test: Dataset


@dataclass
class TrainingSummary:
    model: FWFormer
    metrics: list[EpochMetrics]
    checkpoint: TrainCheckpoint


def load_config_split(config: RunConfig, split: str) -> Dataset:
    """Read one split of the configured dataset, or generate it in memory."""
    steps = config.model.T
    if config.data_root is not None:
        config.validate_paths()
        dataset = load_split(config.data_root, split, steps)
    else:
        samples = config.train_samples if split == "train" else config.test_samples
        dataset = moving_bar_dataset(samples, config.seed, steps, split)
    check_dataset_fits(config, dataset)
    return dataset


def load_datasets(config: RunConfig) -> DatasetSplits:
    return DatasetSplits(
        load_config_split(config, "train"), load_config_split(config, "test")
    )


def check_dataset_fits(config: RunConfig, dataset: Dataset) -> None:
    m = config.model
    expected = (m.T, m.C, m.H, m.W)
    if dataset.sample_shape != expected:
        raise ConfigError(
            f"dataset samples are {dataset.sample_shape} but the model expects "
            f"(T, C, H, W) = {expected}"
        )
    if len(dataset.classes) > m.classes:
        raise ConfigError(
            f"dataset has {len(dataset.classes)} classes, model has {m.classes}"
        )


def _restore_checkpoint(path: Path) -> Checkpoint | None:
    """Restore the last epoch checkpoint, if one was written."""
    if not path.is_file():
        return None
    return load_checkpoint(path)


def _read_metrics(path: Path, completed: int) -> list[EpochMetrics]:
    if not path.is_file():
        return []
    frame = pd.read_csv(path)
    rows = frame[frame["epoch"] <= completed].to_dict(orient="records")
    return [
        EpochMetrics(
            epoch=int(r["epoch"]),
            train_loss=float(r["train_loss"]),
            train_acc=float(r["train_acc"]),
            test_loss=float(r["test_loss"]),
            test_acc=float(r["test_acc"]),
        )
        for r in rows
    ]


def write_metrics(path: Path, metrics: list[EpochMetrics]) -> None:
    columns = [f.name for f in fields(EpochMetrics)]
    frame = pd.DataFrame([asdict(m) for m in metrics], columns=columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def run_training(
    config: RunConfig,
    resume: bool = False,
    data: DatasetSplits | None = None,
    on_step: StepCallback | None = None,
    quiet: bool = False,
) -> TrainingSummary:
    """Train ``config`` to completion, checkpointing after every epoch.

    Handles the bookkeeping around :func:`train_step`:
    - Restore model, optimizer and step counter from ``<out>/checkpoint.fwc``
    - Derive each epoch's shuffle from (seed, epoch) so resumed runs match
    - Evaluate and append a metrics row after each epoch

    Args:
        config: Full run configuration.
        resume: Continue from the checkpoint in ``config.out_dir`` if present.
        data: Pre-loaded splits; loaded from ``config`` when omitted.
        on_step: Called after every optimisation step.
        quiet: Suppress per-step console lines.

    Returns:
        The trained model, all epoch metrics and the final checkpoint location.
    """
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / CHECKPOINT_NAME
    metrics_path = out_dir / METRICS_NAME
    splits = data or load_datasets(config)

    model = FWFormer(config.model, config.seed)
    steps_per_epoch = math.ceil(len(splits.train) / config.batch_size)
    schedule = CosineSchedule(
        config.lr, config.epochs * steps_per_epoch, config.min_lr
    )
    optimizer = AdamW(
        list(model.named_parameters()),
        lr=config.lr,
        weight_decay=config.weight_decay,
        schedule=schedule,
    )

    # Restore checkpoint from a previous run
    checkpoint = _restore_checkpoint(ckpt_path) if resume else None
    state = TrainCheckpoint(path=ckpt_path)
    if checkpoint is not None:
        checkpoint.restore(model, optimizer)
        state.epoch, state.step = checkpoint.epoch, checkpoint.step
        console.print(
            f"[bold yellow]↻ RESUMING FROM CHECKPOINT[/]\n"
            f"  [dim]path=[/]{ckpt_path}\n"
            f"  [dim]completed_epochs=[/][cyan]{state.epoch}[/]\n"
            f"  [dim]completed_steps=[/][cyan]{state.step}[/]\n"
            f"  [dim]continuing from epoch[/] [bold cyan]{state.epoch + 1}[/]"
        )
    elif resume:
        console.print(
            f"[bold red]↻ RESTARTING (no checkpoint found)[/]\n"
            f"  [dim]path=[/]{ckpt_path}\n"
            f"  [dim]starting fresh[/]"
        )
    else:
        console.print(
            f"[bold green]★ STARTING FRESH[/] "
            f"[dim]head=[/]{config.model.mixer.name} [dim]out=[/]{out_dir}"
        )

    metrics = _read_metrics(metrics_path, state.epoch) if checkpoint else []
    train_eval = splits.train.batches(config.batch_size)
    test_eval = splits.test.batches(config.batch_size)

    for epoch in range(state.epoch, config.epochs):
        rng = np.random.default_rng([config.seed, epoch])
        losses = []
        for batch, labels in iter_batches(splits.train, config.batch_size, rng):
            lr = optimizer.current_lr()
            loss = train_step(model, batch, labels, optimizer)
            state.step += 1
            losses.append(loss)
            result = StepResult(state.step, epoch + 1, loss, lr)
            if not quiet:
                console.print(
                    f"[bold cyan]▶ STEP {result.step_number}[/] "
                    f"[dim]epoch=[/]{result.epoch} [dim]loss=[/][yellow]{loss:.4f}[/]"
                )
            if on_step is not None:
                on_step(result, model)

        train_result = evaluate(model, train_eval, config.workers)
        test_result = evaluate(model, test_eval, config.workers)
        row = EpochMetrics(
            epoch=epoch + 1,
            train_loss=float(np.mean(losses)),
            train_acc=train_result.accuracy,
            test_loss=test_result.loss,
            test_acc=test_result.accuracy,
        )
        metrics.append(row)
        write_metrics(metrics_path, metrics)
        state.epoch = epoch + 1
        save_checkpoint(ckpt_path, config, model, optimizer, state.epoch, state.step)
        console.print(
            f"[bold green]  ✓ checkpointed[/] [magenta]epoch {row.epoch}[/] "
            f"[dim]train_acc=[/]{row.train_acc:.3f} [dim]test_acc=[/]{row.test_acc:.3f}"
        )

    console.print(
        f"[bold green]★ TRAINING COMPLETE[/] "
        f"[dim]epochs=[/][cyan]{state.epoch}[/] [dim]steps=[/][cyan]{state.step}[/]"
    )
    logger.info("training finished after %d steps", state.step)
    return TrainingSummary(model, metrics, state)
