"""Run configuration: flat key=value files and method identifiers.

A config file is plain text, one ``key = value`` pair per line, with ``#``
comments and blank lines ignored. Every key must be a TrainConfig field;
anything else is an error so that typos never silently fall back to a
default. Serialization is canonical (field order, repr floats), which makes
the config hash stable and the files byte-for-byte round-trippable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..errors import ConfigError

BASE_METHODS = ("mappo", "q-shapley", "mb-shapley", "mb-banzhaf", "mb-loo")
FIXED_PREFIX = "mb-fixed:"


def check_method(method: str) -> None:
    if method in BASE_METHODS:
        return
    if method.startswith(FIXED_PREFIX):
        tail = method[len(FIXED_PREFIX):]
        if tail.isdigit():
            return
        raise ConfigError(f"bad fixed coalition size in method {method!r}")
    raise ConfigError(f"unknown method {method!r}; expected one of {BASE_METHODS} or {FIXED_PREFIX}<size>")


def method_credit_spec(method: str) -> str | None:
    """Semivalue family the method estimates, or None for a shared baseline."""
    check_method(method)
    if method == "mappo":
        return None
    if method == "q-shapley":
        return "shapley"
    if method.startswith(FIXED_PREFIX):
        return "fixed:" + method[len(FIXED_PREFIX):]
    return method[len("mb-"):]


def method_uses_model(method: str) -> bool:
    check_method(method)
    return method.startswith("mb-")


def method_uses_q(method: str) -> bool:
    check_method(method)
    return method == "q-shapley"


def parse_sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"bad layer sizes {text!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise ConfigError(f"bad layer sizes {text!r}")
    return sizes


@dataclass
class TrainConfig:
    """Everything a single training run needs, and nothing environment-derived."""

    env: str = "chain4"
    method: str = "mb-shapley"
    seed: int = 1
    iterations: int = 60
    steps_per_iteration: int = 2048
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    ppo_epochs: int = 10
    minibatch_size: int = 64
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    model_lr: float = 1e-3
    model_epochs: int = 10
    critic_epochs: int = 10
    samples_per_agent: int = 5
    exact_credit: bool = False
    standardize_advantages: bool = True
    log_std_init: float = -0.5
    actor_hidden: str = "32,32,32"
    critic_hidden: str = "32,32,32"
    model_state_hidden: str = "128,128,128,128"
    model_reward_hidden: str = "128,128,128"
    grad_clip_norm: float = 0.0
    checkpoint_every: int = 0
    out: str = "runs"

    def __post_init__(self):
        check_method(self.method)
        if not self.env:
            raise ConfigError("env must be named")
        for name in ("iterations", "steps_per_iteration", "ppo_epochs", "minibatch_size", "model_epochs", "critic_epochs", "samples_per_agent"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma {self.gamma} outside [0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError(f"gae_lambda {self.gae_lambda} outside [0, 1]")
        if self.clip_eps <= 0.0:
            raise ConfigError("clip_eps must be positive")
        if self.grad_clip_norm < 0.0:
            raise ConfigError("grad_clip_norm must be nonnegative (0 disables)")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be nonnegative (0 means final only)")
        for name in ("actor_hidden", "critic_hidden", "model_state_hidden", "model_reward_hidden"):
            parse_sizes(getattr(self, name))

    def with_overrides(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    @property
    def run_name(self) -> str:
        return f"{self.method}_s{self.seed}"


def _coerce(field, raw: str):
    if field.type in ("bool", bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{field.name} expects true/false, got {raw!r}")
    if field.type in ("int", int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{field.name} expects an integer, got {raw!r}") from None
    if field.type in ("float", float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{field.name} expects a number, got {raw!r}") from None
    return raw


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    known = {f.name: f for f in fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(known[key], raw)
    if base is None:
        return TrainConfig(**values)
    return replace(base, **values)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_config(Path(path).read_text(), base=base)
