"""Run configuration.

Field names are the config-file vocabulary: a YAML or JSON document with
these exact keys configures a run, and CLI flags override file values.
"lambda" is accepted in files as an alias for `lam` (keyword clash).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

POOLINGS = ("pool", "mha", "mham")
VIEWS = ("e2t", "c2t", "e2c")


@dataclass
class TrainConfig:
    d: int = 100  # embedding dim per stream (final concat is 2d)
    lr: float = 0.001
    tau: float = 0.6
    L: int = 4  # propagation layers
    H: int = 5  # attention heads
    M: int = 32  # experts in the mham gate
    beta: float = 4.0
    lam: float = 0.001  # contrastive weight ("lambda" in files)
    gamma: float = 1e-5
    epochs: int = 500
    batch_size: int = 128
    seed: int = 0
    pooling: str = "mham"
    view_ablation: tuple[str, ...] = ()
    include_final_layer: bool = False
    negative_cap: int | None = None
    patience: int = 20
    eval_every: int = 1

    def validate(self) -> None:
        if self.d <= 0:
            raise ValueError(f"d must be positive, got {self.d}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.L < 0:
            raise ValueError(f"L must be nonnegative, got {self.L}")
        if self.H <= 0 or self.M <= 0:
            raise ValueError(f"H and M must be positive, got H={self.H} M={self.M}")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be nonnegative")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        bad = set(self.view_ablation) - set(VIEWS)
        if bad:
            raise ValueError(f"unknown views in ablation: {sorted(bad)}")
        if self.negative_cap is not None and self.negative_cap <= 0:
            raise ValueError(f"negative_cap must be positive or None, got {self.negative_cap}")
        if self.patience < 0 or self.eval_every <= 0:
            raise ValueError("patience must be >= 0 and eval_every positive")

    def replace(self, **overrides) -> "TrainConfig":
        cfg = dataclasses.replace(self, **overrides)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["view_ablation"] = list(self.view_ablation)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "lambda" in data:
            if "lam" in data and data["lam"] != data["lambda"]:
                raise ValueError("config sets both 'lam' and 'lambda' with different values")
            data["lam"] = data.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "view_ablation" in data and data["view_ablation"] is not None:
            data["view_ablation"] = tuple(data["view_ablation"])
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        text = Path(path).read_text(encoding="utf-8")
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError(f"config file must hold a mapping: {path}")
        return cls.from_dict(data)


# Best known settings per corpus (the class defaults are the fb15ket row).
DATASET_PRESETS = {
    "fb15ket": TrainConfig(),
    "yago43ket": TrainConfig(L=1, beta=2.0),
}

# Search ranges the original tuning swept; exposed for optional sweeps.
GRID_SEARCH_SPACE = {
    "lr": (0.01, 0.005, 0.001, 0.0001),
    "batch_size": (128, 256, 512, 1024),
    "tau": (0.1, 0.2, 0.4, 0.6, 0.8, 1.0),
    "beta": (1.0, 2.0, 3.0, 4.0),
    "L": (1, 2, 3, 4),
}
