"""One config object for the whole pipeline, loadable from TOML or JSON.

Every stage's randomness flows from the single `seed`; stages derive their
own generators at fixed offsets so that adding a stage never perturbs the
draws of another.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# Offsets added to the base seed, one per pipeline stage.
SEED_OFFSETS = {
    "split": 1,
    "cluster": 2,
    "hashing": 3,
    "classifier": 4,
}


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters and paths for build/search/eval runs."""

    k: int = 10
    bits: int = 128
    n_recall: int = 100
    beta: float = 0.6
    eta: float = 0.4
    mu: float = 1.5
    lambda1: float = 0.1
    lambda2: float = 0.1
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    kmeans_max_iter: int = 100
    kmeans_restarts: int = 4
    test_fraction: float = 0.05
    seed: int = 0
    code_path: str | None = None
    desc_path: str | None = None
    index_dir: str | None = None

    def __post_init__(self):
        if self.n_recall <= self.k:
            raise ValueError("n_recall must exceed k")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in [0, 1)")

    def sub_seed(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]

    def replace(self, **kwargs) -> "PipelineConfig":
        return dataclasses.replace(self, **kwargs)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write_json(self, path: Path | str) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_config(path: Path | str) -> PipelineConfig:
    """Read a .toml or .json config; unknown keys are rejected."""
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    elif path.suffix == ".json":
        with open(path) as fh:
            raw = json.load(fh)
    else:
        raise ValueError(f"config must be .toml or .json, got {path.suffix!r}")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return PipelineConfig(**raw)
