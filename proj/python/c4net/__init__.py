"""Salient-object network, losses and metrics."""

from ._core import (
    ConfigError,
    ContractError,
    FormatError,
    Model,
    ShapeError,
    evaluate,
    generate_dataset,
    gradcheck,
    gradcheck_units,
    normalize_config,
    wbce,
    weight_map,
    wel,
    wiou,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "FormatError",
    "Model",
    "ShapeError",
    "evaluate",
    "generate_dataset",
    "gradcheck",
    "gradcheck_units",
    "normalize_config",
    "wbce",
    "weight_map",
    "wel",
    "wiou",
]
