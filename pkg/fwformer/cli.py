"""Command-line entry point: ``fwformer <command> [options]``.

Commands:
    train     Train a model, checkpointing every epoch (``--resume`` continues)
    eval      Loss and accuracy of a checkpoint on one split
    bench     Forward and training wall time per head
    energy    Per-layer operation and energy report of a checkpoint
    ortho     Train an SSA model and trace the orthogonality of Q·Kᵀ
    scaling   Operation counts and mixer time over growing sequence lengths
    gen-data  Write a moving-bar event dataset to disk

Every report is written under the output directory; floats carry 9
significant digits.
"""

import argparse
import logging
import statistics
import sys
import time
import tracemalloc
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from fwformer.config import load_config, with_overrides
from fwformer.data import write_moving_bar_dataset
from fwformer.errors import ConfigError, ContractError, FWFormerError
from fwformer.heads import (
    FWHead,
    count_ops,
    measure_orthogonality,
    ssa_product,
    trend_slope,
    window_ratio,
)
from fwformer.model import FWFormer, evaluate, load_checkpoint, train_step
from fwformer.optim import AdamW
from fwformer.profiler import average_traces, record_rates, total_energy
from fwformer.runner import (
    FLOAT_FORMAT,
    METRICS_NAME,
    load_config_split,
    run_training,
)
from fwformer.shared import (
    HEAD_NAMES,
    LIFParams,
    MixerKind,
    MixerSpec,
    OrthoPoint,
    RunConfig,
    Shortcut,
    StepResult,
)
from fwformer.tensor import IntArray, Tensor

logger = logging.getLogger("fwformer.cli")
console = Console()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

DEFAULT_BENCH_HEADS = "ssa,fft1d"
DEFAULT_SCALING_HEADS = "ssa,fft1d,fft2d,wt-haar,wt-combined"


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    console.print(f"[dim]wrote[/] {path}")


def _head_list(text: str, minimum: int = 1) -> list[str]:
    heads = [h.strip() for h in text.split(",") if h.strip()]
    unknown = [h for h in heads if h not in HEAD_NAMES]
    if unknown:
        raise ConfigError(
            f"unknown head(s) {', '.join(unknown)}; "
            f"choose from {', '.join(HEAD_NAMES)}"
        )
    if len(heads) < minimum:
        raise ConfigError(f"need at least {minimum} heads, got {len(heads)}")
    return heads


def build_config(args: argparse.Namespace) -> RunConfig:
    """Config file (or defaults) with the command-line flags applied on top."""
    base = load_config(args.config) if args.config is not None else RunConfig()
    return with_overrides(
        base,
        seed=args.seed,
        out_dir=args.out,
        head=args.head,
        shortcut=args.shortcut,
        workers=args.workers,
        wt_dims=args.wt_dims,
        epochs=args.epochs,
        data_root=args.data,
    )


def _checkpoint_config(args: argparse.Namespace) -> tuple[FWFormer, RunConfig]:
    """Model and config of ``--checkpoint``, with data/out/workers overrides."""
    if not args.checkpoint.is_file():
        raise ConfigError(f"checkpoint does not exist: {args.checkpoint}")
    checkpoint = load_checkpoint(args.checkpoint)
    config = with_overrides(
        checkpoint.config,
        out_dir=args.out or args.checkpoint.parent,
        data_root=args.data,
        workers=args.workers,
    )
    return checkpoint.build_model(), config


def _random_batch(config: RunConfig) -> tuple[Tensor, IntArray]:
    m = config.model
    rng = np.random.default_rng(config.seed)
    images = rng.random((m.T, config.batch_size, m.C, m.H, m.W))
    labels = rng.integers(0, m.classes, size=config.batch_size)
    return Tensor(images), labels


def _timed(fn: Callable[[], object], repeats: int) -> list[float]:
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1e3)
    return samples


def _std(values: Sequence[float]) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    config = build_config(args)
    summary = run_training(config, resume=args.resume)

    table = Table(title=f"{config.model.mixer.name} training")
    for column in ("epoch", "train_loss", "train_acc", "test_loss", "test_acc"):
        table.add_column(column, justify="right")
    for row in summary.metrics:
        table.add_row(
            str(row.epoch),
            f"{row.train_loss:.4f}",
            f"{row.train_acc:.3f}",
            f"{row.test_loss:.4f}",
            f"{row.test_acc:.3f}",
        )
    console.print(table)
    console.print(f"[dim]metrics:[/] {config.out_dir / METRICS_NAME}")
    console.print(f"[dim]checkpoint:[/] {summary.checkpoint.path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model, config = _checkpoint_config(args)
    dataset = load_config_split(config, args.split)
    result = evaluate(model, dataset.batches(config.batch_size), config.workers)

    frame = pd.DataFrame(
        [
            {
                "split": args.split,
                "loss": result.loss,
                "accuracy": result.accuracy,
                "samples": result.samples,
            }
        ]
    )
    _write_csv(frame, config.out_dir / "eval.csv")
    console.print(
        Panel(
            f"loss={result.loss:.4f}  accuracy={result.accuracy:.3f}  "
            f"samples={result.samples}",
            title=f"{config.model.mixer.name} on {args.split}",
            border_style="green",
        )
    )
    return EXIT_OK


def _bench_head(config: RunConfig, batches: int, warmup: int) -> dict[str, object]:
    model = FWFormer(config.model, config.seed)
    optimizer = AdamW(list(model.named_parameters()), lr=config.lr)
    batch, labels = _random_batch(config)

    def forward() -> None:
        model.eval()
        model(batch)

    def training() -> None:
        train_step(model, batch, labels, optimizer)

    _timed(forward, warmup)
    fwd = _timed(forward, batches)
    _timed(training, warmup)
    train = _timed(training, batches)

    tracemalloc.start()
    try:
        training()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()

    m = config.model
    return {
        "head": m.mixer.name,
        "fwd_ms": statistics.fmean(fwd),
        "fwd_std_ms": _std(fwd),
        "train_ms": statistics.fmean(train),
        "train_std_ms": _std(train),
        "macs": count_ops(m.mixer, m.N, m.D).total,
        "params": model.num_parameters(),
        "peak_kib": peak / 1024,
    }


def cmd_bench(args: argparse.Namespace) -> int:
    config = build_config(args)
    heads = _head_list(args.heads, minimum=2)
    batches = args.batches or config.bench_batches
    warmup = config.bench_warmup if args.warmup is None else args.warmup

    rows = []
    for name in heads:
        console.print(f"[bold cyan]▶ BENCH {name}[/] [dim]batches=[/]{batches}")
        rows.append(_bench_head(with_overrides(config, head=name), batches, warmup))
    frame = pd.DataFrame(rows)
    _write_csv(frame, config.out_dir / "bench.csv")

    table = Table(title="Speed and memory")
    for column in frame.columns:
        table.add_column(str(column), justify="right")
    for row in rows:
        table.add_row(
            *(f"{v:.2f}" if isinstance(v, float) else str(v) for v in row.values())
        )
    console.print(table)
    return EXIT_OK


def cmd_energy(args: argparse.Namespace) -> int:
    model, config = _checkpoint_config(args)
    dataset = load_config_split(config, args.split)
    batches = dataset.batches(config.batch_size)
    runs = [record_rates(model, batch) for batch, _ in batches]
    report = total_energy(
        average_traces(runs), first_layer_is_float=args.first_layer == "mac"
    )
    path = config.out_dir / "energy.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    report.write(path)

    table = Table(title=f"{config.model.mixer.name} energy per sample")
    for column in ("layer", "kind", "flops", "rate", "sops", "energy_pj"):
        table.add_column(column, justify="right")
    for layer in report.layers:
        table.add_row(
            layer.name,
            layer.kind,
            str(layer.flops),
            f"{layer.rate:.4f}",
            f"{layer.sops:.0f}",
            f"{layer.energy_pj:.1f}",
        )
    console.print(table)
    console.print(
        Panel(
            f"OPs={report.total_ops_g:.4f} G  energy={report.total_energy_mj:.4f} mJ",
            title="Total",
            border_style="green",
        )
    )
    console.print(f"[dim]wrote[/] {path}")
    return EXIT_OK


def cmd_ortho(args: argparse.Namespace) -> int:
    config = build_config(args)
    if config.model.mixer.kind is not MixerKind.SSA:
        logger.info("orthogonality tracing needs SSA; switching head to ssa")
        config = with_overrides(config, head="ssa")
    held_out, _ = load_config_split(config, "test").batches(args.ortho_samples)[0]
    trace: list[OrthoPoint] = []

    def on_step(result: StepResult, model: FWFormer) -> None:
        score = measure_orthogonality(model, held_out)
        trace.append(OrthoPoint(result.step_number, score))

    run_training(config, resume=False, on_step=on_step, quiet=True)
    frame = pd.DataFrame([{"step": p.step, "score": p.score} for p in trace])
    _write_csv(frame, config.out_dir / "ortho.csv")

    scores = [p.score for p in trace]
    summary = f"steps={len(scores)}"
    try:
        summary += f"  slope={trend_slope(scores):.6g}"
        summary += f"  last/first window={window_ratio(scores):.4f}"
    except ContractError as err:
        logger.warning("trend unavailable: %s", err)
    console.print(Panel(summary, title="Orthogonality trend", border_style="cyan"))
    return EXIT_OK


def _random_spikes(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    return Tensor((rng.random(shape) < 0.5).astype(np.float64))


def _mixer_timer(
    spec: MixerSpec, n: int, d: int, lif: LIFParams, rng: np.random.Generator
) -> Callable[[], object]:
    """Timed closure for the token-mixing product alone, on random spikes."""
    if spec.kind is MixerKind.SSA:
        dh = d // spec.heads
        qkv = [
            [_random_spikes(rng, (1, 1, n, dh)) for _ in range(3)]
            for _ in range(spec.heads)
        ]

        def attention() -> None:
            # one head at a time keeps the N x N products bounded
            for q, k, v in qkv:
                ssa_product(q, k, v, spec.scale, spec.mult_order)

        return attention
    head = FWHead(spec, d, lif)
    x = _random_spikes(rng, (1, 1, n, d))
    return lambda: head.mix(x)


def _loglog_slope(ns: Sequence[int], values: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(ns), np.log(values), 1)
    return float(slope)


def cmd_scaling(args: argparse.Namespace) -> int:
    config = build_config(args)
    heads = _head_list(args.heads)
    if args.min_n < 1 or args.max_n < args.min_n:
        raise ConfigError(
            f"need 1 <= --min-n <= --max-n, got {args.min_n} and {args.max_n}"
        )
    ns = [2**k for k in range(args.min_n.bit_length() - 1, args.max_n.bit_length())]
    d = args.dim
    lif = config.model.lif
    rng = np.random.default_rng(config.seed)

    rows = []
    table = Table(title=f"Scaling over N = {ns[0]} … {ns[-1]} (D={d})")
    for column in ("head", "ops_slope", "time_slope"):
        table.add_column(column, justify="right")
    for name in heads:
        spec = MixerSpec.from_name(name, wt_dims=config.model.mixer.wt_dims)
        mixing, times = [], []
        for n in ns:
            ops = count_ops(spec, n, d)
            elapsed = statistics.fmean(_timed(_mixer_timer(spec, n, d, lif, rng), 3))
            mixing.append(ops.mixing)
            times.append(elapsed)
            rows.append(
                {
                    "head": name,
                    "n": n,
                    "mixing_macs": ops.mixing,
                    "macs": ops.total,
                    "time_ms": elapsed,
                }
            )
        table.add_row(
            name,
            f"{_loglog_slope(ns, mixing):.3f}",
            f"{_loglog_slope(ns, times):.3f}",
        )
    _write_csv(pd.DataFrame(rows), config.out_dir / "scaling.csv")
    console.print(table)
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    written = write_moving_bar_dataset(
        args.out, {"train": args.train, "test": args.test}, args.seed
    )
    console.print(
        f"[bold green]★ DATASET WRITTEN[/] [dim]files=[/][cyan]{len(written)}[/] "
        f"[dim]root=[/]{args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _config_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--config", type=Path, help="key=value config file")
    flags.add_argument("--seed", type=int, help="random seed")
    flags.add_argument("--out", type=Path, help="output directory")
    flags.add_argument("--head", choices=HEAD_NAMES, help="token-mixing head")
    flags.add_argument(
        "--shortcut", choices=[s.value for s in Shortcut], help="residual style"
    )
    flags.add_argument("--workers", type=int, help="evaluation worker threads")
    flags.add_argument("--wt-dims", type=int, choices=(1, 2), help="wavelet axes")
    flags.add_argument("--epochs", type=int, help="training epochs")
    flags.add_argument("--data", type=Path, help="event dataset root")
    return flags


def _checkpoint_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--checkpoint", type=Path, required=True)
    flags.add_argument("--data", type=Path, help="event dataset root")
    flags.add_argument("--out", type=Path, help="report directory")
    flags.add_argument("--workers", type=int)
    flags.add_argument("--split", default="test", choices=("train", "test"))
    return flags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fwformer",
        description="Spiking transformer with Fourier and wavelet token mixers",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)
    config_flags = _config_flags()
    checkpoint_flags = _checkpoint_flags()

    train = commands.add_parser("train", parents=[config_flags], help="train a model")
    train.add_argument("--resume", action="store_true", help="continue a run")
    train.set_defaults(handler=cmd_train)

    evaluate_cmd = commands.add_parser(
        "eval", parents=[checkpoint_flags], help="evaluate a checkpoint"
    )
    evaluate_cmd.set_defaults(handler=cmd_eval)

    bench = commands.add_parser("bench", parents=[config_flags], help="time heads")
    bench.add_argument("--heads", default=DEFAULT_BENCH_HEADS)
    bench.add_argument("--batches", type=int, help="timed batches per head")
    bench.add_argument("--warmup", type=int, help="untimed warm-up batches")
    bench.set_defaults(handler=cmd_bench)

    energy = commands.add_parser(
        "energy", parents=[checkpoint_flags], help="energy report of a checkpoint"
    )
    energy.add_argument(
        "--first-layer",
        choices=("mac", "ac"),
        default="ac",
        help="cost the first layer as float MACs (static images) or as AC ops",
    )
    energy.set_defaults(handler=cmd_energy)

    ortho = commands.add_parser(
        "ortho", parents=[config_flags], help="trace SSA orthogonality"
    )
    ortho.add_argument("--ortho-samples", type=int, default=8)
    ortho.set_defaults(handler=cmd_ortho)

    scaling = commands.add_parser(
        "scaling", parents=[config_flags], help="complexity over sequence length"
    )
    scaling.add_argument("--heads", default=DEFAULT_SCALING_HEADS)
    scaling.add_argument("--dim", type=int, default=64)
    scaling.add_argument("--min-n", type=int, default=64)
    scaling.add_argument("--max-n", type=int, default=4096)
    scaling.set_defaults(handler=cmd_scaling)

    gen = commands.add_parser("gen-data", help="write a moving-bar dataset")
    gen.add_argument("--out", type=Path, required=True, help="dataset root")
    gen.add_argument("--train", type=int, default=400)
    gen.add_argument("--test", type=int, default=100)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(handler=cmd_gen_data)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(rich_tracebacks=True)],
    )
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except ConfigError as err:
        logger.error("%s", err)
        return EXIT_USAGE
    except (FWFormerError, OSError) as err:
        logger.error("%s failed: %s", args.command, err)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
