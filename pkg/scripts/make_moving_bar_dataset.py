#!/usr/bin/env python3
"""Write a moving-bar event dataset and preview one binned sample per class.

Usage:
    uv run scripts/make_moving_bar_dataset.py data/bars
    uv run scripts/make_moving_bar_dataset.py data/bars --train 800 --T 8
"""

import argparse
import logging
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from fwformer.data import DIRECTIONS, load_split, write_moving_bar_dataset
from fwformer.errors import FWFormerError

console = Console()


def preview(root: Path, T: int) -> None:
    """Event counts per time bin of the first test sample of each class."""
    dataset = load_split(root, "test", T)
    table = Table(title=f"Events per bin (T={T})")
    table.add_column("Class", style="cyan")
    for t in range(T):
        table.add_column(f"t{t}", justify="right")
    for label, name in enumerate(dataset.classes):
        matches = (dataset.labels == label).nonzero()[0]
        if len(matches) == 0:
            continue
        counts = dataset.inputs[matches[0]].sum(axis=(1, 2, 3))
        table.add_row(name, *(f"{c:.0f}" for c in counts))
    console.print(table)


def main() -> None:
    parser = argparse.ArgumentParser(description="Write a moving-bar dataset")
    parser.add_argument("root", type=Path, help="output directory")
    parser.add_argument("--train", type=int, default=400, help="training samples")
    parser.add_argument("--test", type=int, default=100, help="test samples")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--T", type=int, default=4, help="time bins for the preview")
    args = parser.parse_args()

    logging.basicConfig(
        level=logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(rich_tracebacks=True)],
    )

    try:
        written = write_moving_bar_dataset(
            args.root, {"train": args.train, "test": args.test}, args.seed
        )
        if args.test:
            preview(args.root, args.T)
    except (FWFormerError, OSError) as err:
        logging.error("Dataset generation failed: %s", err)
        raise SystemExit(1) from err

    console.print(
        Panel(
            f"{len(written)} event files, classes {', '.join(DIRECTIONS)}",
            title=str(args.root),
            border_style="green",
        )
    )


if __name__ == "__main__":
    main()
