"""Training configuration and its flat ``key = value`` file format.

Keys are flat; sub-configurations use a dotted prefix::

    # comments start with '#'
    learning_rate = 1e-5
    encoder.tap_layers = 3, 6, 9, 12
    decoder.num_iterations = 3
    model.use_sgfm = true
    loss.beta = 0.1

Precedence is CLI override > file > defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .losses import LossConfig
from .model import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 4
    epochs: int = 20
    max_steps: int = 0            # 0 = no cap
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    grad_accumulation: int = 1
    data_dir: str = ""
    checkpoint_dir: str = "checkpoints"
    checkpoint_interval: int = 1  # epochs
    log_interval: int = 1         # steps
    deterministic: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "grad_accumulation",
                     "checkpoint_interval", "log_interval"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")


# prefix -> attribute path from TrainConfig
_SECTIONS = {
    "encoder": ("model", "encoder"),
    "decoder": ("model", "decoder"),
    "model": ("model",),
    "loss": ("loss",),
}


def _resolve(cfg: TrainConfig, key: str):
    """Return (owner object, attribute name) for a flat key."""
    prefix, _, name = key.rpartition(".")
    obj: Any = cfg
    if prefix:
        if prefix not in _SECTIONS:
            raise ConfigError(f"unknown config section {prefix!r} in key {key!r}")
        for attr in _SECTIONS[prefix]:
            obj = getattr(obj, attr)
    names = {f.name for f in dataclasses.fields(obj)}
    if name not in names or dataclasses.is_dataclass(getattr(obj, name)):
        raise ConfigError(f"unknown config key {key!r}")
    return obj, name


def _coerce(current: Any, raw: str, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, (list, tuple)):
            items = [x.strip() for x in raw.strip("[]()").split(",") if x.strip()]
            elem = type(current[0]) if current else str
            vals = [_coerce(elem(), x, key) if elem in (int, float, bool) else x for x in items]
            return type(current)(vals)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for key {key!r} (expected {type(current).__name__})") from None


def set_value(cfg: TrainConfig, key: str, raw: str):
    obj, name = _resolve(cfg, key)
    setattr(obj, name, _coerce(getattr(obj, name), raw, key))


def parse_lines(lines) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def _revalidate(cfg: TrainConfig) -> TrainConfig:
    # rebuild so every __post_init__ check runs on the final values
    return from_flat(to_flat(cfg))


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> TrainConfig:
    cfg = TrainConfig()
    if path is not None:
        for k, v in parse_lines(Path(path).read_text().splitlines()):
            set_value(cfg, k, v)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        set_value(cfg, k.strip(), v)
    return _revalidate(cfg)


def to_flat(cfg: TrainConfig) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if not dataclasses.is_dataclass(v):
            flat[f.name] = v
    for prefix, path in _SECTIONS.items():
        obj: Any = cfg
        for attr in path:
            obj = getattr(obj, attr)
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if not dataclasses.is_dataclass(v):
                flat[f"{prefix}.{f.name}"] = list(v) if isinstance(v, tuple) else v
    return flat


def from_flat(flat: dict[str, Any]) -> TrainConfig:
    """Inverse of :func:`to_flat`; values keep their Python types."""
    nested: dict[str, dict] = {"encoder": {}, "decoder": {}, "model": {}, "loss": {}}
    top = {}
    for k, v in flat.items():
        prefix, _, name = k.rpartition(".")
        if prefix:
            if prefix not in nested:
                raise ConfigError(f"unknown config section {prefix!r}")
            nested[prefix][name] = v
        else:
            top[k] = v
    try:
        model = ModelConfig(encoder=EncoderConfig(**nested["encoder"]),
                            decoder=DecoderConfig(**nested["decoder"]), **nested["model"])
        return TrainConfig(model=model, loss=LossConfig(**nested["loss"]), **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for k, v in to_flat(cfg).items():
        if isinstance(v, (list, tuple)):
            v = ", ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
