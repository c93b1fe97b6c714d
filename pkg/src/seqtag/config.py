"""One point of the network hyperparameter space."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .nn.dropout import DropoutSpec
from .optim import OPTIMIZERS, GradientPolicy, LrSchedule
from .tagscheme import RepairStrategy, TagScheme

CHAR_REPS = ("none", "cnn", "lstm")
CLASSIFIERS = ("softmax", "crf")
LAYER_COUNTS = (1, 2, 3)
UNIT_CHOICES = (25, 50, 75, 100, 125)
BATCH_SIZES = (1, 8, 16, 32, 64)
TAG_SCHEMES = ("BIO", "IOB", "IOBES", "NONE")


class ConfigError(ValueError):
    def __init__(self, field_name: str, value, allowed=None, reason: str | None = None):
        msg = f"invalid {field_name}={value!r}"
        if allowed is not None:
            msg += f"; allowed: {list(allowed)}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)
        self.field = field_name


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class NetworkConfig:
    embedding_path: str | None = None
    char_rep: str = "none"
    classifier: str = "crf"
    dropout: DropoutSpec = field(default_factory=DropoutSpec)
    layers: int = 2
    units_per_layer: tuple = (100, 100)
    optimizer: str = "nadam"
    learning_rate: float | None = None
    gradient_policy: GradientPolicy = field(default_factory=lambda: GradientPolicy("normalize_l2", 1.0))
    batch_size: int = 32
    tag_scheme: str = "BIO"
    seed: int = 0
    lr_schedule: LrSchedule | None = None
    max_epochs: int = 100
    patience: int = 5
    repair: str = "to_outside"
    freeze_embeddings: bool = False
    lowercase_embeddings: bool = False
    # only used when no embedding file is given
    word_dim: int = 50

    def __post_init__(self):
        set_ = object.__setattr__
        if isinstance(self.dropout, dict):
            set_(self, "dropout", DropoutSpec(**self.dropout))
        if isinstance(self.gradient_policy, dict):
            gp = dict(self.gradient_policy)
            if "tau" in gp:
                gp["tau"] = float(gp["tau"])
            set_(self, "gradient_policy", GradientPolicy(**gp))
        if self.lr_schedule is not None and not isinstance(self.lr_schedule, LrSchedule):
            set_(self, "lr_schedule", LrSchedule(tuple(tuple(p) for p in self.lr_schedule)))
        set_(self, "units_per_layer", tuple(int(u) for u in self.units_per_layer))
        set_(self, "tag_scheme", str(self.tag_scheme).upper())
        set_(self, "optimizer", str(self.optimizer).lower())
        self._validate()

    def _validate(self):
        def choice(name, allowed):
            value = getattr(self, name)
            if value not in allowed:
                raise ConfigError(name, value, allowed)

        choice("char_rep", CHAR_REPS)
        choice("classifier", CLASSIFIERS)
        choice("layers", LAYER_COUNTS)
        choice("optimizer", OPTIMIZERS)
        choice("batch_size", BATCH_SIZES)
        choice("tag_scheme", TAG_SCHEMES)
        choice("repair", [s.value for s in RepairStrategy])
        units = self.units_per_layer
        if len(units) != self.layers:
            raise ConfigError("units_per_layer", units, reason=f"needs {self.layers} entries")
        if any(u < 1 for u in units):
            raise ConfigError("units_per_layer", units, reason="units must be positive")
        if any(b > a for a, b in zip(units, units[1:])):
            raise ConfigError("units_per_layer", units, reason="layer sizes may not increase")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ConfigError("learning_rate", self.learning_rate, reason="must be positive")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs", self.max_epochs, reason="must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience", self.patience, reason="must be >= 1")
        if self.word_dim < 1:
            raise ConfigError("word_dim", self.word_dim, reason="must be >= 1")

    @property
    def scheme(self) -> TagScheme:
        return TagScheme.parse(self.tag_scheme)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["units_per_layer"] = list(self.units_per_layer)
        d["lr_schedule"] = None if self.lr_schedule is None else self.lr_schedule.to_json()
        return d

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], d[sorted(unknown)[0]], reason="unknown field")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "NetworkConfig":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        return hashlib.sha1(self.to_json().encode()).hexdigest()[:12]

    def get(self, path: str):
        """Value of a (possibly dotted) field path such as ``dropout.kind``."""
        obj = self
        for part in path.split("."):
            obj = getattr(obj, part)
        return obj

    def with_value(self, path: str, value) -> "NetworkConfig":
        d = self.to_dict()
        parts = path.split(".")
        target = d
        for part in parts[:-1]:
            if part not in target or not isinstance(target[part], dict):
                raise ConfigError(path, value, reason="unknown field")
            target = target[part]
        if parts[-1] not in target:
            raise ConfigError(path, value, reason="unknown field")
        target[parts[-1]] = value
        return NetworkConfig.from_dict(d)
