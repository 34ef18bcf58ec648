from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..errors import ConfigError

ABLATIONS = ("none", "minip-only", "sequence-only")


@dataclass
class ModelConfig:
    base_channels: int = 8
    levels: int = 5
    frames: int = 8
    num_classes: int = 3
    tf_layers: int = 4
    tf_heads: int = 4
    mlp_ratio: float = 4.0
    patch_size: int = 64
    ablation: str = "none"

    @property
    def bottleneck_channels(self) -> int:
        return self.base_channels * 2 ** (self.levels - 1)

    @property
    def skip_channels(self):
        return [self.base_channels * 2 ** i for i in range(self.levels - 1)]

    def validate(self, height: int | None = None, width: int | None = None):
        if self.levels < 4:
            raise ConfigError("levels must be >= 4 to provide three supervised decoder heads")
        if self.bottleneck_channels % self.tf_heads:
            raise ConfigError(f"tf_heads={self.tf_heads} does not divide bottleneck channels "
                              f"{self.bottleneck_channels}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        # the bottleneck must still be even for the fusion module's max-pool
        need = 2 ** self.levels
        for name, size in (("height", height), ("width", width), ("patch_size", self.patch_size)):
            if size is not None and size % need:
                raise ConfigError(f"{name}={size} must be divisible by {need} for "
                                  f"levels={self.levels}")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model config keys: {sorted(extra)}")
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))
