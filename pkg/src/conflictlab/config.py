"""Run configuration: one YAML file plus command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .conflict import CheckConfig
from .mixture import FitConfig
from .models import MODELS
from .weakinfo import WeakInformativityConfig

MODEL_NAMES = tuple(MODELS) + ("external",)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "logistic"
    seed: int = 0
    output_dir: Path = Path("out")
    workers: int | None = None
    model_options: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    wi: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    external: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODEL_NAMES)}")
        self.output_dir = Path(self.output_dir)
        if self.workers is None:
            self.workers = default_workers()
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def fit_config(self) -> FitConfig:
        opts = dict(self.fit)
        if "covariance_structure" in opts and isinstance(opts["covariance_structure"], list):
            opts["covariance_structure"] = tuple(opts["covariance_structure"])
        opts.setdefault("seed", self.seed)
        opts.setdefault("workers", self.workers)
        try:
            return FitConfig(**opts)
        except TypeError as exc:
            raise ConfigError(f"fit block: {exc}") from exc

    def check_config(self) -> CheckConfig:
        try:
            return CheckConfig(seed=self.seed, fit=self.fit_config(), **self.check)
        except TypeError as exc:
            raise ConfigError(f"check block: {exc}") from exc

    def wi_config(self) -> WeakInformativityConfig:
        try:
            return WeakInformativityConfig(seed=self.seed, fit=self.fit_config(), **self.wi)
        except TypeError as exc:
            raise ConfigError(f"wi block: {exc}") from exc


def load_config(path: str | os.PathLike | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read the YAML config (if any) and apply flag overrides.

    Override keys are either top-level fields or ``block.key`` paths such as
    ``check.n_replicates``; flags win over the file.
    """
    doc: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a mapping")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            block, sub = key.split(".", 1)
            doc.setdefault(block, {})
            doc[block][sub] = value
        else:
            doc[key] = value
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return RunConfig(**doc)


def default_workers() -> int:
    env = os.environ.get("CONFLICTLAB_WORKERS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            raise ConfigError(f"CONFLICTLAB_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1
