"""Shared fixtures: tiny model shapes that keep every test fast."""

from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from fwformer.shared import MixerSpec, ModelConfig, RunConfig, Shortcut
from fwformer.tensor import Tensor

ConfigFactory = Callable[..., ModelConfig]


def tiny_model_config(
    head: str = "ssa", shortcut: Shortcut = Shortcut.VANILLA, **overrides: int
) -> ModelConfig:
    """T=2, 2x8x8 inputs, patch 2 (N=16), D=16, one layer, two SSA heads."""
    values = {
        "T": 2,
        "C": 2,
        "H": 8,
        "W": 8,
        "patch": 2,
        "D": 16,
        "L": 1,
        "mlp_ratio": 2,
        "classes": 3,
    }
    values.update(overrides)
    return ModelConfig(
        mixer=MixerSpec.from_name(head, heads=2), shortcut=shortcut, **values
    )


def tiny_run_config(out_dir: Path, head: str = "ssa", **overrides: object) -> RunConfig:
    """Moving-bar run small enough for a unit test (32x32, D=16, N=64)."""
    model = ModelConfig(
        T=2,
        C=2,
        H=32,
        W=32,
        patch=4,
        D=16,
        L=1,
        mlp_ratio=2,
        classes=4,
        mixer=MixerSpec.from_name(head, heads=2),
    )
    values: dict[str, object] = {
        "model": model,
        "seed": 3,
        "out_dir": out_dir,
        "epochs": 2,
        "batch_size": 8,
        "train_samples": 16,
        "test_samples": 8,
    }
    values.update(overrides)
    return RunConfig(**values)  # type: ignore[arg-type]


TINY_CONFIG_TEXT = """\
# tiny moving-bar run
head=ssa
T=2
C=2
H=32
W=32
patch=4
D=16
L=1
heads=2
mlp_ratio=2
classes=4
epochs=1
batch_size=8
train_samples=8
test_samples=8
"""


@pytest.fixture
def make_config() -> ConfigFactory:
    return tiny_model_config


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def images(rng: np.random.Generator) -> Tensor:
    """Static-style inputs [T=2, B=3, C=2, 8, 8] for the tiny model."""
    return Tensor(rng.random((2, 3, 2, 8, 8)))


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG_TEXT, encoding="utf-8")
    return path
