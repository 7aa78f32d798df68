"""Flat ``key=value`` configuration files.

Lines are ``key=value`` pairs; ``#`` starts a comment and blank lines are
ignored. Model keys (``T``, ``D``, ``head``, ``tau``, ...) and run keys
(``seed``, ``epochs``, ``lr``, ...) share one namespace. :func:`to_text`
renders the canonical form embedded in checkpoints, which
:func:`parse_config_text` reads back to an equal ``RunConfig``.
"""

import logging
from collections.abc import Callable, Mapping
from pathlib import Path
from typing import Any

from fwformer.errors import ConfigError
from fwformer.shared import (
    LIFParams,
    MixerSpec,
    ModelConfig,
    MultOrder,
    RunConfig,
    Shortcut,
)

logger = logging.getLogger(__name__)


def _optional_path(value: str) -> Path | None:
    return Path(value) if value else None


_MODEL_KEYS: dict[str, Callable[[str], Any]] = {
    "T": int,
    "C": int,
    "H": int,
    "W": int,
    "patch": int,
    "D": int,
    "L": int,
    "mlp_ratio": int,
    "classes": int,
    "shortcut": Shortcut,
}
_MIXER_KEYS: dict[str, Callable[[str], Any]] = {
    "heads": int,
    "scale": float,
    "mult_order": MultOrder,
    "wt_dims": int,
}
_LIF_KEYS: dict[str, Callable[[str], Any]] = {
    "tau": float,
    "v_th": float,
    "v_reset": float,
    "surrogate_width": float,
}
_RUN_KEYS: dict[str, Callable[[str], Any]] = {
    "seed": int,
    "out_dir": Path,
    "data_root": _optional_path,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "min_lr": float,
    "weight_decay": float,
    "workers": int,
    "train_samples": int,
    "test_samples": int,
    "bench_batches": int,
    "bench_warmup": int,
}
KNOWN_KEYS = frozenset(
    {"head", *_MODEL_KEYS, *_MIXER_KEYS, *_LIF_KEYS, *_RUN_KEYS}
)


def parse_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    """Split config text into raw string values, rejecting unknown keys."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        pairs[key] = value.strip()
    return pairs


def build_run_config(values: Mapping[str, Any], source: str = "<config>") -> RunConfig:
    """Assemble a ``RunConfig`` from string (or already typed) values."""

    def convert(table: dict[str, Callable[[str], Any]]) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, parse in table.items():
            if key not in values or values[key] is None:
                continue
            raw = values[key]
            try:
                out[key] = parse(raw) if isinstance(raw, str) else raw
            except ValueError as err:
                raise ConfigError(f"{source}: bad value for {key}: {raw!r}") from err
        return out

    lif = LIFParams(**convert(_LIF_KEYS))
    mixer = MixerSpec.from_name(str(values.get("head", "ssa")), **convert(_MIXER_KEYS))
    model = ModelConfig(mixer=mixer, lif=lif, **convert(_MODEL_KEYS))
    return RunConfig(model=model, **convert(_RUN_KEYS))


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    return build_run_config(parse_pairs(text, source), source)


def load_config(path: Path) -> RunConfig:
    """Read a config file; a missing file is a configuration error."""
    if not path.is_file():
        raise ConfigError(f"config file does not exist: {path}")
    config = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    logger.debug("loaded config from %s", path)
    return config


def config_values(config: RunConfig) -> dict[str, Any]:
    """Flatten a ``RunConfig`` into the key namespace of config files."""
    model = config.model
    values: dict[str, Any] = {"head": model.mixer.name}
    for key in _MODEL_KEYS:
        values[key] = getattr(model, key)
    for key in _MIXER_KEYS:
        values[key] = getattr(model.mixer, key)
    for key in _LIF_KEYS:
        values[key] = getattr(model.lif, key)
    for key in _RUN_KEYS:
        values[key] = getattr(config, key)
    return values


def _render(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Shortcut | MultOrder):
        return value.value
    return str(value)


def to_text(config: RunConfig) -> str:
    """Canonical ``key=value`` form; floats use ``repr`` so parsing is exact."""
    return "".join(f"{k}={_render(v)}\n" for k, v in config_values(config).items())


def with_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """Return ``config`` with the non-``None`` overrides applied."""
    values = config_values(config)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown override {key!r}")
        values[key] = value
    return build_run_config(values, "<overrides>")

