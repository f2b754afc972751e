"""Run configuration: a flat ``key = value`` file format and per-dataset presets."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping


class ConfigError(ValueError):
    pass


# history length / RGCN layers / raw timestamp interval per benchmark
DATASET_PRESETS: Dict[str, Dict[str, Any]] = {
    "ICEWS14": {"history_len": 8, "layers": 2, "time_interval": 24, "time_unit": "24 hours"},
    "ICEWS18": {"history_len": 10, "layers": 2, "time_interval": 24, "time_unit": "24 hours"},
    "ICEWS05-15": {"history_len": 10, "layers": 2, "time_interval": 24, "time_unit": "24 hours"},
    "YAGO": {"history_len": 1, "layers": 1, "time_interval": 1, "time_unit": "1 year"},
    "WIKI": {"history_len": 2, "layers": 2, "time_interval": 1, "time_unit": "1 year"},
    "GDELT": {"history_len": 6, "layers": 2, "time_interval": 15, "time_unit": "15 mins"},
    # desk-scale synthetic benchmark (see data.make_periodic_dataset)
    "periodic": {
        "history_len": 5,
        "layers": 2,
        "dim": 32,
        "epochs": 50,
        "lr": 0.003,
        "time_interval": 1,
        "time_unit": "1",
    },
    # uniformly random facts (see data.make_random_dataset), for smoke runs
    "random": {"history_len": 3, "layers": 2, "dim": 16, "epochs": 10, "lr": 0.003, "time_interval": 1, "time_unit": "1"},
}


@dataclass
class TrainConfig:
    dataset: str = ""
    dataset_dir: str = ""
    dim: int = 200
    layers: int = 2
    history_len: int = 8
    channels: int = 50
    lambda1: float = 0.5
    lambda2: float = 0.5
    lambda3: float = 0.3
    epochs: int = 30
    lr: float = 0.001
    club_lr: float = -1.0  # negative: follow lr
    club_steps: int = 1
    mi_detach_encoder: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0
    patience: int = 5
    seed: int = 0
    without_td: bool = False
    without_ce: bool = False
    noise_rate: float = 0.0
    noise_slot: str = "object"
    dropout: float = 0.0
    decoder_norm: str = "none"
    normalize_entities: bool = True
    mask_causal_bias: float = 2.0
    negative_slope: float = 0.2
    phi: str = "add"
    static_constraint: bool = False
    dtype: str = "float32"
    time_interval: int = 1
    time_unit: str = ""
    out: str = "runs/default"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.dim <= 0:
            raise ConfigError("dim must be positive")
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.history_len < 1:
            raise ConfigError("history_len must be >= 1")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("lambda weights must be non-negative")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not 0 <= self.noise_rate <= 1:
            raise ConfigError("noise_rate must lie in [0, 1]")
        if self.noise_slot not in ("object", "subject"):
            raise ConfigError("noise_slot must be 'object' or 'subject'")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.phi != "add":
            raise ConfigError("only phi = add is implemented")
        if self.static_constraint:
            raise ConfigError("static_constraint is not implemented")
        if self.time_interval <= 0:
            raise ConfigError("time_interval must be positive")

    @property
    def effective_club_lr(self) -> float:
        return self.lr if self.club_lr < 0 else self.club_lr

    def replace(self, **changes: Any) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind in ("bool", bool):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def parse_config_text(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def build_config(file_values: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None) -> TrainConfig:
    """Resolve defaults < dataset preset < config file < overrides."""
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    dataset = overrides.get("dataset", file_values.get("dataset", ""))
    merged: Dict[str, Any] = {}
    if dataset:
        if dataset not in DATASET_PRESETS:
            raise ConfigError(f"unknown dataset preset {dataset!r}; choose from {sorted(DATASET_PRESETS)}")
        merged.update(DATASET_PRESETS[dataset])
    merged.update(file_values)
    merged.update(overrides)
    for key in merged:
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return TrainConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> TrainConfig:
    file_values = parse_config_text(Path(path).read_text(encoding="utf-8")) if path else {}
    return build_config(file_values, overrides)


def format_config(config: TrainConfig) -> str:
    return "\n".join(f"{k} = {v}" for k, v in config.to_dict().items()) + "\n"
