"""Run configuration, stored as a flat JSON object mirroring the field names."""

import dataclasses
import json
from dataclasses import dataclass

from .autodiff import ContractViolation


@dataclass
class TrainingConfig:
    # stage schedules
    stage1_epochs: int = 100
    stage1_lr: float = 0.001
    stage2_epochs: int = 50
    stage2_lr: float = 0.0005
    lambda_mv: float = 1.0
    batch_size: int = 1
    # geometry / resolution
    image_size: int = 64
    grid_res: int = 32  # extraction lattice during training
    eval_grid_res: int = 64  # extraction lattice for reconstruction/eval
    seed: int = 0
    # desk-scale overrides: cap on optimizer steps per stage (0 = no cap)
    max_steps_stage1: int = 0
    max_steps_stage2: int = 0
    # dataset generation
    n_shapes: int = 20
    n_points: int = 30000
    n_uniform: int = 128
    n_surface: int = 384
    noise_sd: float = 0.05

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.stage1_lr <= 0 or self.stage2_lr <= 0:
            raise ContractViolation("learning rates must be positive")
        if self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise ContractViolation("epoch counts must be >= 1")
        if self.lambda_mv < 0:
            raise ContractViolation("lambda_mv must be >= 0")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")
        if self.image_size < 8 or self.image_size % 4 != 0:
            raise ContractViolation("image_size must be >= 8 and divisible by 4")
        if self.grid_res < 8 or self.eval_grid_res < 8:
            raise ContractViolation("grid resolutions must be >= 8")
        if self.max_steps_stage1 < 0 or self.max_steps_stage2 < 0:
            raise ContractViolation("step caps must be >= 0")
        if self.n_shapes < 1 or self.n_points < 1 or self.n_uniform < 1 or self.n_surface < 1:
            raise ContractViolation("dataset counts must be positive")
        if self.noise_sd <= 0:
            raise ContractViolation("noise_sd must be positive")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, path) -> "TrainingConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ContractViolation("unknown config keys: %s" % ", ".join(sorted(unknown)))
        return cls(**raw)

    def to_json(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def apply_overrides(self, pairs) -> "TrainingConfig":
        """New config with `key=value` string overrides coerced to field types."""
        values = self.as_dict()
        types = {f.name: f.type for f in dataclasses.fields(self)}
        for key, text in pairs:
            if key not in values:
                raise ContractViolation("unknown config key %r" % key)
            kind = types[key]
            try:
                values[key] = int(text) if kind in ("int", int) else float(text)
            except ValueError:
                raise ContractViolation("cannot parse %r as %s for key %r" % (text, kind, key))
        return TrainingConfig(**values)
