"""Python bindings for the strokediff C++ core."""

from ._strokediff import (
    CheckpointError,
    ConfigError,
    DataError,
    Model,
    ModeError,
    StrokeDiffError,
    chamfer_distance,
    forward_diffuse,
    generate_toy_dataset,
    linear_schedule,
    resample,
    temporal_lowpass,
    to_velocities,
    train,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DataError",
    "Model",
    "ModeError",
    "StrokeDiffError",
    "chamfer_distance",
    "forward_diffuse",
    "generate_toy_dataset",
    "linear_schedule",
    "resample",
    "temporal_lowpass",
    "to_velocities",
    "train",
]
