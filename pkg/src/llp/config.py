"""Configuration dataclasses with lossless JSON round-tripping."""
import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigurationError


@dataclass
class PropagationConfig:
    k: int = 10
    t: int = 25
    tau: float = 0.07
    local_weighting: bool = True
    use_confidence: bool = True
    # neighbours for the density sum: "all" bank points or "labeled" only
    density_pool: str = "all"
    density_exclude_self: bool = True
    # "epoch": pseudo-labels frozen per epoch; "batch": refreshed before every batch
    cadence: str = "epoch"
    workers: int = 1

    def validate(self):
        if self.k < 1 or self.t < 1:
            raise ConfigurationError("k and t must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1]")
        if self.density_pool not in ("all", "labeled"):
            raise ConfigurationError(f"unknown density_pool {self.density_pool!r}")
        if self.cadence not in ("epoch", "batch"):
            raise ConfigurationError(f"unknown cadence {self.cadence!r}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        return self


@dataclass
class TrainSchedule:
    warmup_epochs: int = 10
    base_lr: float = 0.03
    # None: warm up at base_lr
    warmup_lr: float = None
    lr_drop_factor: float = 10.0
    sgd_momentum: float = 0.9
    batch_size: int = 128
    weight_decay: float = 1e-4
    max_epochs: int = 30
    patience: int = 5
    max_drops: int = 3
    seed: int = 0
    bank_momentum: float = 0.5
    category_loss: bool = True
    agg_weight: float = 1.0
    confidence_floor: float = 0.0
    hidden: tuple = (64, 64)
    trunk: int = 32
    embed_dim: int = 16

    def validate(self):
        if self.warmup_lr is not None and self.warmup_lr <= 0:
            raise ConfigurationError("warmup_lr must be positive")
        if self.base_lr <= 0 or self.lr_drop_factor <= 0 or self.batch_size < 1:
            raise ConfigurationError("learning rate, drop factor and batch size must be positive")
        if not 0.0 <= self.sgd_momentum < 1.0:
            raise ConfigurationError("sgd_momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be non-negative")
        if self.patience < 1 or self.max_drops < 0 or self.max_epochs < 0 or self.warmup_epochs < 0:
            raise ConfigurationError("patience >= 1, max_drops/max_epochs/warmup_epochs >= 0 required")
        if not 0.0 <= self.bank_momentum < 1.0:
            raise ConfigurationError("bank_momentum must lie in [0, 1)")
        if self.embed_dim < 2:
            raise ConfigurationError("embed_dim must be >= 2")
        return self


@dataclass
class ExperimentConfig:
    dataset: str = "blobs:q=4,n=5000,spread=0.5,seed=1"
    label_fraction: float = 0.02
    unlabeled_fraction: float = 1.0
    # features are z-scored then scaled by this; None leaves them raw
    input_scale: float = 0.5
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    out: str = "run"
    seed: int = 0
    workers: int = 1

    def validate(self):
        for name in ("label_fraction", "unlabeled_fraction"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1], got {value}")
        if self.input_scale is not None and not self.input_scale > 0:
            raise ConfigurationError("input_scale must be positive")
        self.propagation.validate()
        self.schedule.validate()
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["schedule"]["hidden"] = list(self.schedule.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sched = dict(d.pop("schedule", {}))
        if "hidden" in sched:
            sched["hidden"] = tuple(sched["hidden"])
        try:
            prop = PropagationConfig(**d.pop("propagation", {}))
            return cls(propagation=prop, schedule=TrainSchedule(**sched), **d)
        except TypeError as exc:
            raise ConfigurationError(f"unknown or malformed config field: {exc}") from None

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))
