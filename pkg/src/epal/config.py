"""Run configuration: a flat key-value text format, typed parsing, validation.

A config file is lines of ``key = value`` with ``#`` comments; unknown keys
and type errors are reported as field-level diagnostics rather than
exceptions, so the CLI can print everything wrong with a file at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

from .network import Architecture, paper_architecture, small_architecture


@dataclass(frozen=True)
class RunConfig:
    # dataset
    dataset: str = "synthetic"              # "synthetic" | "cifar10"
    cifar10_dir: str = ""
    synthetic_classes: int = 10
    synthetic_per_class: int = 230
    synthetic_test_count: int = 300
    synthetic_noise: float = 0.35
    # protocol
    n_splits: int = 10
    strategies: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    trials: int = 10
    theta: float = 0.8
    theta_sweep: tuple[float, ...] = ()
    mc_passes: int = 64
    master_seed: int = 0
    baseline_fraction: float = 0.74
    xi_baseline: float = 0.0                # 0 = derive from strategy 6 if run
    # model / training
    architecture: str = "paper"             # "paper" | "small"
    dropout_rate: float = 0.5
    precision: str = "float64"              # "float64" | "float32"
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    early_stop_patience: int = 5
    validation_fraction: float = 0.1
    # execution
    workers: int = 1
    output_dir: str = "out"

    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32

    def build_architecture(self) -> Architecture:
        if self.architecture == "paper":
            return paper_architecture(self.dropout_rate)
        return small_architecture(self.dropout_rate)


_INT_LIST_KEYS = {"strategies"}
_FLOAT_LIST_KEYS = {"theta_sweep"}


def parse_config_text(text: str) -> tuple[dict[str, Any], list[str]]:
    """Parse ``key = value`` lines into typed values plus diagnostics."""
    type_by_key = {f.name: f.type for f in fields(RunConfig)}
    defaults = RunConfig()
    values: dict[str, Any] = {}
    diagnostics: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            diagnostics.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in type_by_key:
            diagnostics.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            if key in _INT_LIST_KEYS:
                values[key] = tuple(int(v) for v in value.split(",") if v.strip())
            elif key in _FLOAT_LIST_KEYS:
                values[key] = tuple(float(v) for v in value.split(",") if v.strip())
            else:
                current = getattr(defaults, key)
                if isinstance(current, bool):
                    values[key] = value.lower() in ("1", "true", "yes")
                elif isinstance(current, int):
                    values[key] = int(value)
                elif isinstance(current, float):
                    values[key] = float(value)
                else:
                    values[key] = value
        except ValueError:
            diagnostics.append(f"{key}: cannot parse {value!r}")
    return values, diagnostics


def validate(config: RunConfig) -> list[str]:
    """Every violated invariant yields one diagnostic naming the field."""
    diags: list[str] = []
    if config.dataset not in ("synthetic", "cifar10"):
        diags.append(f"dataset: must be 'synthetic' or 'cifar10', got {config.dataset!r}")
    if config.dataset == "cifar10" and not config.cifar10_dir:
        diags.append("cifar10_dir: required when dataset = cifar10")
    if config.synthetic_classes < 2:
        diags.append("synthetic_classes: must be >= 2")
    if config.synthetic_per_class < 1:
        diags.append("synthetic_per_class: must be >= 1")
    if config.synthetic_test_count < 1 and config.dataset == "synthetic":
        diags.append("synthetic_test_count: must be >= 1")
    if config.synthetic_noise < 0:
        diags.append("synthetic_noise: must be >= 0")
    if config.n_splits < 2:
        diags.append("n_splits: must be >= 2 (initial split plus at least one episode)")
    if config.dataset == "synthetic":
        pool = config.synthetic_classes * config.synthetic_per_class - config.synthetic_test_count
        if pool <= 0 or pool % config.n_splits:
            diags.append(
                f"n_splits: training pool of {pool} images does not divide into "
                f"{config.n_splits} equal splits"
            )
    if not config.strategies:
        diags.append("strategies: at least one strategy id required")
    bad = [s for s in config.strategies if s not in range(1, 8)]
    if bad:
        diags.append(f"strategies: unknown ids {bad}; valid ids are 1..7")
    if len(set(config.strategies)) != len(config.strategies):
        diags.append("strategies: duplicate ids")
    if config.trials < 1:
        diags.append("trials: must be >= 1")
    if config.theta < 0:
        diags.append("theta: must be >= 0")
    if any(t < 0 for t in config.theta_sweep):
        diags.append("theta_sweep: all values must be >= 0")
    if config.mc_passes < 1:
        diags.append("mc_passes: must be >= 1")
    if not 0.0 < config.baseline_fraction <= 1.0:
        diags.append("baseline_fraction: must be in (0, 1]")
    if config.xi_baseline < 0:
        diags.append("xi_baseline: must be >= 0 (0 means derive from strategy 6)")
    if config.architecture not in ("paper", "small"):
        diags.append(f"architecture: must be 'paper' or 'small', got {config.architecture!r}")
    if not 0.0 <= config.dropout_rate < 1.0:
        diags.append("dropout_rate: must be in [0, 1)")
    if config.precision not in ("float64", "float32"):
        diags.append(f"precision: must be 'float64' or 'float32', got {config.precision!r}")
    if config.learning_rate <= 0:
        diags.append("learning_rate: must be > 0")
    if config.batch_size < 1:
        diags.append("batch_size: must be >= 1")
    if config.max_epochs < 0:
        diags.append("max_epochs: must be >= 0")
    if config.early_stop_patience < 1:
        diags.append("early_stop_patience: must be >= 1")
    if not 0.0 < config.validation_fraction < 1.0:
        diags.append("validation_fraction: must be in (0, 1)")
    if config.workers < 1:
        diags.append("workers: must be >= 1")
    if not config.output_dir:
        diags.append("output_dir: must not be empty")
    return diags


def load_config(path) -> tuple[RunConfig | None, list[str]]:
    """Read, parse, and validate a config file.

    Returns (config, []) on success or (None, diagnostics) on any failure.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        return None, [f"config: cannot read {path}: {e}"]
    values, diags = parse_config_text(text)
    if diags:
        return None, diags
    config = RunConfig(**values)
    diags = validate(config)
    if diags:
        return None, diags
    return config, []
