"""Scenario and training configuration, presets, and override parsing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

BITS_PER_MB = 8e6


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration keys."""


@dataclass(frozen=True)
class Scenario:
    """World description. Defaults are the full-size field and radio parameters."""

    seed: int = 0
    # geometry
    x_max: float = 1000.0
    y_max: float = 1000.0
    altitude: float = 100.0
    n_devices: int = 100
    n_rbs: int = 10
    horizon: int = 500
    slot_len: float = 5.0
    v_max: float = 25.0
    omega_max: float = 1.0
    d_max_mb: float = 20.0
    # channel
    a: float = 15.0
    b: float = 0.5
    g0_db: float = -50.0
    kappa: float = 0.2
    iota: float = 2.2
    p_tx: float = 0.1
    rb_bandwidth: float = 1e6
    n0_dbm_hz: float = -174.0
    interference: float = 0.0
    # propulsion
    p1_blade: float = 79.86
    p2_induced: float = 88.63
    u_tip: float = 120.0
    v0_induced: float = 4.03
    d0_drag: float = 0.6
    rho_air: float = 1.225
    rotor_solidity: float = 0.05
    rotor_area: float = 0.503
    # episode
    gamma: float = 0.99
    early_stop: bool = True

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return from_mapping(cls, json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrainConfig:
    context_k: int = 20
    lambda_reg: float = 1.0
    rho_soft: float = 0.005
    gamma: float = 0.99
    batch_b: int = 64
    epochs: int = 20
    steps_per_epoch: int = 100
    lr_dt: float = 1e-4
    lr_critic: float = 3e-4
    weight_decay: float = 1e-4
    use_critic: bool = True
    # backbone
    hidden: int = 64
    n_layers: int = 2
    n_heads: int = 2
    lora_rank: int = 16
    lora_alpha: float = 32.0
    mode: str = "full"  # full | lora
    critic_width: int = 256
    # evaluation
    eval_episodes: int = 5
    eval_every: int = 0  # 0: only after the final epoch
    seed: int = 0

    def __post_init__(self) -> None:
        if self.context_k < 1:
            raise ConfigError("context_k must be >= 1")
        if not 0.0 < self.rho_soft <= 1.0:
            raise ConfigError("rho_soft must lie in (0, 1]")
        if self.lambda_reg < 0:
            raise ConfigError("lambda_reg must be >= 0")
        if self.mode not in ("full", "lora"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.hidden % self.n_heads:
            raise ConfigError("hidden must be divisible by n_heads")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


DESK_SCENARIO = dict(n_devices=15, n_rbs=4, horizon=60)

# Full-size field with the published fine-tuning settings and a GPT-2 small sized backbone.
PAPER_TRAIN = dict(
    context_k=20, lambda_reg=1.0, rho_soft=0.005, batch_b=128, epochs=1000,
    steps_per_epoch=1, lr_dt=1e-5, lr_critic=1e-5, lora_rank=16, lora_alpha=32.0,
    hidden=768, n_layers=12, n_heads=12, critic_width=512, mode="lora",
)

PRESETS: dict[str, tuple[dict, dict]] = {
    "desk": (DESK_SCENARIO, {}),
    "paper": ({}, PAPER_TRAIN),
}


def _coerce(kind: Any, value: Any, key: str) -> Any:
    kind = {"int": int, "float": float, "bool": bool, "str": str}.get(kind, kind)
    if kind is bool:
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes", "on"):
            return True
        if str(value).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {kind.__name__}") from None


def from_mapping(cls, mapping: dict[str, Any], base: Any = None):
    """Build ``cls`` from a mapping, rejecting keys it does not define."""
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(mapping) - set(known))
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    values = base.to_dict() if base is not None else {}
    for key, value in mapping.items():
        values[key] = _coerce(known[key].type, value, key)
    return cls(**values)


def parse_overrides(items: list[str] | None) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def split_overrides(overrides: dict[str, Any]) -> tuple[dict, dict]:
    """Route flat ``key=value`` overrides to Scenario or TrainConfig."""
    scen_keys = {f.name for f in fields(Scenario)}
    train_keys = {f.name for f in fields(TrainConfig)}
    scen, train = {}, {}
    for key, value in overrides.items():
        if key in scen_keys:
            scen[key] = value
        if key in train_keys:
            train[key] = value
        if key not in scen_keys and key not in train_keys:
            raise ConfigError(f"unknown override key {key!r}")
    return scen, train


def resolve(preset: str = "desk", overrides: dict[str, Any] | None = None,
            scenario: Scenario | None = None) -> tuple[Scenario, TrainConfig]:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    scen_preset, train_preset = PRESETS[preset]
    scen_over, train_over = split_overrides(overrides or {})
    if scenario is None:
        scenario = from_mapping(Scenario, scen_preset)
    scenario = from_mapping(Scenario, scen_over, base=scenario)
    train = from_mapping(TrainConfig, {**train_preset, "gamma": scenario.gamma, **train_over})
    return scenario, train


def desk_scenario(**kw: Any) -> Scenario:
    return Scenario(**{**DESK_SCENARIO, **kw})


@dataclass
class RunConfig:
    scenario: str | None = None
    dataset: str | None = None
    checkpoint: str | None = None
    preset: str = "desk"
    seed: int = 0
    overrides: dict[str, Any] = field(default_factory=dict)
