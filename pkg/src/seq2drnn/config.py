"""Training configuration, decode limits and flat ``key=value`` config files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Any

ARCHS = ("seq2seq", "seq2drnn", "seq2drnn-sync")
INJECTIONS = ("combined", "output_only")
DTYPES = ("float64", "float32")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DecodeLimits:
    max_depth: int = 64
    max_siblings: int = 64
    max_total_nodes: int = 1024

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"{f.name} must be >= 1")


@dataclass
class TrainConfig:
    arch: str = "seq2drnn-sync"
    embed_dim: int = 256
    label_embed_dim: int = 256
    hidden_dim: int = 256
    attention_dim: int = 256
    layers: int = 2
    batch_size: int = 64
    alpha: float = 1.0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 3
    max_epochs: int = 30
    seed: int = 1
    source_vocab: int = 50000
    target_vocab: int = 50000
    max_depth: int = 64
    max_siblings: int = 64
    max_total_nodes: int = 1024
    max_len: int = 100
    attention_injection: str = "combined"
    dtype: str = "float64"
    parser_mode: bool = False
    strip_preterminals: bool = False
    log_wall_time: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.arch not in ARCHS:
            raise ConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.attention_injection not in INJECTIONS:
            raise ConfigError(f"attention_injection must be one of {INJECTIONS}, got {self.attention_injection!r}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {DTYPES}, got {self.dtype!r}")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("int", "float") and v <= 0 and f.name not in ("alpha", "seed"):
                raise ConfigError(f"{f.name} must be positive, got {v}")
        for name in ("alpha", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")

    @property
    def sync(self) -> bool:
        return self.arch == "seq2drnn-sync"

    @property
    def is_tree(self) -> bool:
        return self.arch != "seq2seq"

    @property
    def limits(self) -> DecodeLimits:
        return DecodeLimits(self.max_depth, self.max_siblings, self.max_total_nodes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> str:
        """Effective configuration, one ``key=value`` per line, sorted."""
        d = self.to_dict()
        d["sync"] = self.sync
        return "\n".join(f"{k}={_format(d[k])}" for k in sorted(d))


def parser_defaults() -> TrainConfig:
    """Parsing-as-translation setup: 256-dim, 3 layers."""
    return TrainConfig(parser_mode=True, layers=3)


def _format(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def normalize_key(key: str) -> str:
    return key.strip().replace(".", "_").replace("-", "_")


def coerce(key: str, raw: str) -> Any:
    """Convert a string value to the type of config field ``key``."""
    name = normalize_key(key)
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict[str, Any]:
    """Read ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[normalize_key(key)] = coerce(key, value)
    return out


def merge(base: TrainConfig, *layers: dict[str, Any]) -> TrainConfig:
    """Apply override dicts in order; later layers win."""
    d = base.to_dict()
    for layer in layers:
        for k, v in layer.items():
            name = normalize_key(k)
            if name not in d:
                raise ConfigError(f"unknown config key {k!r}")
            d[name] = v
    return TrainConfig.from_dict(d)
