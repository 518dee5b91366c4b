"""Pipeline configuration: one dataclass tree, overridable from a JSON file.

The effective configuration is snapshotted into every artifact the pipeline
writes (feature stores, model files) so results stay auditable.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .datamodel import DataError
from .ensemble import EnsembleParams
from .physio import PhysioParams
from .visual import VisualThresholds

WORKERS_ENV_VAR = "ENGAGEKIT_WORKERS"


@dataclass(frozen=True)
class PipelineConfig:
    visual: VisualThresholds = field(default_factory=VisualThresholds)
    physio: PhysioParams = field(default_factory=PhysioParams)
    ensemble: EnsembleParams = field(default_factory=EnsembleParams)
    seed: int = 0
    worker_count: int = 1
    focal_length_px: Optional[float] = None  # camera override; default = image width

    def __post_init__(self) -> None:
        if self.worker_count < 1:
            raise DataError(f"worker_count must be >= 1, got {self.worker_count}")
        if self.focal_length_px is not None and self.focal_length_px <= 0:
            raise DataError("focal_length_px override must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build_section(cls, overrides: dict, section: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(overrides) - known
    if unknown:
        raise DataError(f"unknown config keys in {section!r}: {sorted(unknown)}")
    return cls(**overrides)


def config_from_dict(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise DataError("config must be a JSON object")
    sections = {"visual": VisualThresholds, "physio": PhysioParams, "ensemble": EnsembleParams}
    scalars = {"seed", "worker_count", "focal_length_px"}
    unknown = set(doc) - set(sections) - scalars
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for name, cls in sections.items():
        overrides = doc.get(name, {})
        if not isinstance(overrides, dict):
            raise DataError(f"config section {name!r} must be an object")
        kwargs[name] = _build_section(cls, overrides, name)
    for name in scalars:
        if name in doc:
            kwargs[name] = doc[name]
    return PipelineConfig(**kwargs)


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """Config from a JSON file (all keys optional), then env overrides.

    The ENGAGEKIT_WORKERS environment variable, when set, overrides
    worker_count from any source.
    """
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(open(path, encoding="utf-8").read())
        except OSError as e:
            raise DataError(f"cannot read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise DataError(f"malformed config file {path}: {e}") from e
    cfg = config_from_dict(doc)
    env_workers = os.environ.get(WORKERS_ENV_VAR)
    if env_workers:
        try:
            cfg = dataclasses.replace(cfg, worker_count=int(env_workers))
        except ValueError:
            raise DataError(f"{WORKERS_ENV_VAR} must be an integer, got {env_workers!r}") from None
    return cfg
