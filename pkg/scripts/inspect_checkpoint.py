#!/usr/bin/env python3
"""Inspect an FWC1 checkpoint written by ``fwformer train``.

Usage:
    uv run scripts/inspect_checkpoint.py runs/smoke/checkpoint.fwc       # summary
    uv run scripts/inspect_checkpoint.py runs/smoke/checkpoint.fwc -d    # tensors
    uv run scripts/inspect_checkpoint.py ckpt.fwc -d --prefix optim/     # filtered
"""

import argparse
import logging
from collections import Counter
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.tree import Tree

from fwformer.config import config_values
from fwformer.errors import FWFormerError
from fwformer.model import Checkpoint, load_checkpoint

console = Console()


def show_summary(path: Path, checkpoint: Checkpoint) -> None:
    """Config values and tensor counts grouped by name prefix."""
    model = checkpoint.config.model
    console.print(
        Panel(
            f"[bold]{path}[/]\n"
            f"[dim]head:[/] [cyan]{model.mixer.name}[/]  "
            f"[dim]epoch:[/] {checkpoint.epoch}  [dim]step:[/] {checkpoint.step}",
            border_style="blue",
        )
    )

    tree = Tree("[bold]config[/]")
    for key, value in config_values(checkpoint.config).items():
        tree.add(f"[cyan]{key}[/] = {value}")
    console.print(tree)

    groups = Counter(name.split("/", 1)[0] for name in checkpoint.tensors)
    sizes: Counter[str] = Counter()
    for name, tensor in checkpoint.tensors.items():
        sizes[name.split("/", 1)[0]] += tensor.data.size

    table = Table(title="Tensors")
    table.add_column("Group", style="cyan")
    table.add_column("Tensors", justify="right", style="green")
    table.add_column("Values", justify="right")
    for group, count in sorted(groups.items()):
        table.add_row(group, str(count), f"{sizes[group]:,}")
    console.print(table)
    console.print("\n[dim]Use -d/--detailed for every tensor[/]")


def show_tensors(checkpoint: Checkpoint, prefix: str) -> None:
    """One row per tensor: shape and simple statistics."""
    table = Table(title=f"Tensors{f' under {prefix}' if prefix else ''}")
    table.add_column("Name", style="cyan")
    table.add_column("Shape")
    table.add_column("Mean", justify="right")
    table.add_column("Std", justify="right")
    table.add_column("Max |x|", justify="right")
    shown = 0
    for name, tensor in checkpoint.tensors.items():
        if not name.startswith(prefix):
            continue
        data = tensor.data
        table.add_row(
            name,
            "×".join(map(str, data.shape)) or "scalar",
            f"{np.mean(data):.4g}",
            f"{np.std(data):.4g}",
            f"{np.max(np.abs(data)):.4g}" if data.size else "-",
        )
        shown += 1
    console.print(table)
    console.print(f"\n[dim]Total: {shown} tensors[/]")


def main() -> None:
    parser = argparse.ArgumentParser(description="Inspect an FWC1 checkpoint")
    parser.add_argument("checkpoint", type=Path, help="path to a .fwc file")
    parser.add_argument(
        "-d", "--detailed", action="store_true", help="list every tensor"
    )
    parser.add_argument("--prefix", default="", help="only tensors with this prefix")
    args = parser.parse_args()

    logging.basicConfig(
        level=logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(rich_tracebacks=True)],
    )

    try:
        checkpoint = load_checkpoint(args.checkpoint)
    except (FWFormerError, OSError) as err:
        logging.error("Cannot read checkpoint: %s", err)
        raise SystemExit(1) from err

    if args.detailed:
        show_tensors(checkpoint, args.prefix)
    else:
        show_summary(args.checkpoint, checkpoint)


if __name__ == "__main__":
    main()
