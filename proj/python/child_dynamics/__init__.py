"""Hierarchical temporal latent-variable toolkit (Python bindings)."""

from ._core import (
    ConfigError,
    DataError,
    NumericalError,
    compute_mcc,
    correlational_score,
    generate,
    preset_names,
    run_config_preset,
    spectral_sweep,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "compute_mcc",
    "correlational_score",
    "generate",
    "preset_names",
    "run_config_preset",
    "spectral_sweep",
    "train",
]
