"""Run configuration shared by the CLI, scripts and the experiment harness."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

from .errors import ConfigError, DataError, FormatError

SPONTANEOUS = ("positive", "neutral", "negative")

FRONTAL = ["E23", "E18", "E16", "E10", "E3", "E19", "E11", "E4", "E20", "E12", "E5", "E118"]
PARIETO_OCCIPITAL = ["E62", "E60", "E67", "E72", "E77", "E85", "E59", "E66", "E71", "E76",
                     "E84", "E91", "E65", "E70", "E75", "E83", "E90"]

BANDS = {"theta": (3.0, 7.0), "alpha": (8.0, 12.0)}
WINDOWS = {"early": (0.0, 200.0), "late": (400.0, 600.0)}


def default_rois() -> Dict[str, List[str]]:
    return {"frontal": list(FRONTAL), "parieto-occipital": list(PARIETO_OCCIPITAL)}


@dataclass
class RunConfig:
    data_root: str = field(default_factory=lambda: os.environ.get("CDMA_DATA_ROOT", "data"))
    output_root: str = "out"

    segment_len: int = 128
    stride: int = 64
    hidden: int = 32
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    iterations: int = 50
    folds: int = 5
    seed: int = 0
    jobs: int = 1

    conditions: List[str] = field(default_factory=lambda: list(SPONTANEOUS))
    reshuffle_folds: bool = True
    pad_read: bool = False
    pad_spontaneous: bool = True
    standardize: bool = True
    welch: bool = False

    rois: Dict[str, List[str]] = field(default_factory=default_rois)
    frontal_extra: Optional[str] = None
    ersp_window: int = 64
    reject_uv: float = 100.0

    def __post_init__(self):
        for name in ("segment_len", "stride", "hidden", "batch_size", "epochs", "iterations",
                     "folds", "jobs", "ersp_window"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate <= 0 or self.reject_uv <= 0:
            raise ConfigError("learning_rate and reject_uv must be positive")
        bad = [c for c in self.conditions if c not in SPONTANEOUS]
        if bad or not self.conditions:
            raise ConfigError(f"conditions must be a non-empty subset of {SPONTANEOUS}")

    def roi_channels(self, name: str) -> List[str]:
        chans = list(self.rois[name])
        if name == "frontal" and self.frontal_extra and self.frontal_extra not in chans:
            chans.append(self.frontal_extra)
        return chans

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        # paths and worker counts do not change results
        d = {k: v for k, v in self.to_dict().items() if k not in ("data_root", "output_root", "jobs")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise DataError(f"config not found: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
        return cls.from_dict(d, **overrides)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
