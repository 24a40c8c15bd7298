"""Flat, typed run configuration read from a JSON object.

Every key has a default except the file paths.  Unknown keys are rejected,
and any key may be overridden through a ``STACKNER_<KEY>`` environment
variable.
"""

from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, fields

from .augment import AugmentConfig, AugmentMode
from .corpus import SCHEMES
from .model import BilateralConfig, CharEncoder, SubNetworkSpec, WordEncoder
from .training import TrainConfig

ENV_PREFIX = "STACKNER_"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_SPEC_DEFAULTS = SubNetworkSpec()
_TRAIN_DEFAULTS = TrainConfig()


@dataclass
class RunConfig:
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    embeddings_path: str | None = None
    output_dir: str = "runs"
    run_name: str = "run"
    token_column: int = 0
    label_column: int = -1
    scheme: str = "iob2"
    min_frequency: int = 1
    training_mode: str = "separate"

    left_char_encoder: str = "convolutional"
    left_word_encoder: str = "recurrent"
    right_char_encoder: str = "convolutional"
    right_word_encoder: str = "recurrent"
    char_dim: int = _SPEC_DEFAULTS.char_dim
    char_hidden_dim: int = _SPEC_DEFAULTS.char_hidden_dim
    char_filters: int = _SPEC_DEFAULTS.char_filters
    char_kernel_width: int = _SPEC_DEFAULTS.char_kernel_width
    word_dim: int = _SPEC_DEFAULTS.word_dim
    hidden_dim: int = _SPEC_DEFAULTS.hidden_dim
    conv_kernel_width: int = _SPEC_DEFAULTS.conv_kernel_width
    conv_filters: int = _SPEC_DEFAULTS.conv_filters
    conv_layers: int = _SPEC_DEFAULTS.conv_layers
    conv_activation: str = _SPEC_DEFAULTS.conv_activation
    dropout: float = _SPEC_DEFAULTS.dropout
    shared_embeddings: bool = False
    pairwise_emissions: bool = False
    constrained_transitions: bool = False

    epochs_left: int = 20
    epochs_right: int = 20
    epochs_finetune: int = _TRAIN_DEFAULTS.epochs_finetune
    epochs_joint: int = 20
    batch_size: int = _TRAIN_DEFAULTS.batch_size
    learning_rate: float = _TRAIN_DEFAULTS.learning_rate
    momentum: float = _TRAIN_DEFAULTS.momentum
    lr_decay: float = _TRAIN_DEFAULTS.lr_decay
    gradient_clip: float | None = _TRAIN_DEFAULTS.gradient_clip
    optimizer: str = "sgd_momentum"
    seed: int = 0
    early_stopping_patience: int = _TRAIN_DEFAULTS.early_stopping_patience
    singleton_unk: float = _TRAIN_DEFAULTS.singleton_unk

    augment_mode: str = "sca"
    augment_p: float = 0.7
    augment_max_per_epoch: int | None = None
    augment_frequency_weighted: bool = False

    @classmethod
    def from_mapping(cls, data: dict, env: dict | None = None) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        hints = typing.get_type_hints(cls)
        values = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            values[key] = _coerce(key, value, hints[key])
        env = os.environ if env is None else env
        for key in known:
            raw = env.get(ENV_PREFIX + key.upper())
            if raw is not None:
                values[key] = _coerce(key, _parse_env(raw), hints[key])
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike, env: dict | None = None, **overrides) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError as err:
            raise ConfigError("config", f"file not found: {path}") from err
        except json.JSONDecodeError as err:
            raise ConfigError("config", f"invalid JSON: {err}") from err
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(data, env)

    def validate(self, need_train: bool = True) -> None:
        if need_train:
            if not self.train_path:
                raise ConfigError("train_path", "required")
        for key in ("train_path", "dev_path", "test_path", "embeddings_path"):
            path = getattr(self, key)
            if path and not os.path.exists(path):
                raise ConfigError(key, f"file does not exist: {path}")
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme", f"must be one of {SCHEMES}")
        if self.training_mode not in ("separate", "joint"):
            raise ConfigError("training_mode", "must be 'separate' or 'joint'")
        choices = {"optimizer": ("sgd_momentum", "adaptive"),
                   "augment_mode": ("sca", "eca", "off"),
                   "conv_activation": ("tanh", "relu", "identity")}
        for side in ("left", "right"):
            choices[f"{side}_char_encoder"] = tuple(e.value for e in CharEncoder)
            choices[f"{side}_word_encoder"] = tuple(e.value for e in WordEncoder)
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"must be one of {allowed}")
        try:
            self.bilateral_config(("O",))
            self.train_config()
        except ValueError as err:
            key = str(err).split()[0]
            raise ConfigError(key if hasattr(self, key) else "config", str(err)) from err

    def subnetwork(self, side: str) -> SubNetworkSpec:
        shared = {f.name: getattr(self, f.name) for f in fields(SubNetworkSpec)
                  if f.name not in ("char_encoder", "word_encoder")}
        return SubNetworkSpec(char_encoder=getattr(self, f"{side}_char_encoder"),
                              word_encoder=getattr(self, f"{side}_word_encoder"), **shared)

    def bilateral_config(self, labelset) -> BilateralConfig:
        return BilateralConfig(self.subnetwork("left"), self.subnetwork("right"),
                               tuple(labelset), self.shared_embeddings,
                               self.pairwise_emissions, self.constrained_transitions)

    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(AugmentMode(self.augment_mode), self.augment_p, self.seed,
                             self.augment_max_per_epoch, self.augment_frequency_weighted)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs_left=self.epochs_left, epochs_right=self.epochs_right,
            epochs_finetune=self.epochs_finetune, epochs_joint=self.epochs_joint,
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            momentum=self.momentum, lr_decay=self.lr_decay,
            gradient_clip=self.gradient_clip, optimizer=self.optimizer, seed=self.seed,
            augment=self.augment_config(),
            early_stopping_patience=self.early_stopping_patience,
            singleton_unk=self.singleton_unk)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _parse_env(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _coerce(key: str, value, hint):
    args = typing.get_args(hint)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    if value is None:
        if optional:
            return None
        raise ConfigError(key, "may not be null")
    if base is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(key, f"expected a boolean, got {value!r}")
    if base is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if base is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(key, f"expected a number, got {value!r}")
    if base is str:
        if isinstance(value, str):
            return value
        raise ConfigError(key, f"expected a string, got {value!r}")
    return value
