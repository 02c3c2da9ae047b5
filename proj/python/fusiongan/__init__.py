"""Python bindings for the fusiongan library.

Tensors cross the boundary as float32 numpy arrays in NCHW layout; label maps
as 2-D int arrays.
"""

from ._core import (
    ArchitectureError,
    CheckpointError,
    ConfigError,
    DataError,
    DimensionError,
    DivergenceError,
    Error,
    GraphError,
    IoError,
    check_fusion_inequality,
    check_lemma1,
    conv2d,
    d_loss,
    depth_metrics,
    find_leaky_counterexample,
    g_loss,
    generate_sample,
    mean_iou,
    pixel_accuracy,
    run_cli,
    spectral_normalize,
    sweep_fusion_inequality,
    sweep_lemma1,
    transposed_conv2d,
)

__all__ = [
    "ArchitectureError",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "DivergenceError",
    "Error",
    "GraphError",
    "IoError",
    "check_fusion_inequality",
    "check_lemma1",
    "conv2d",
    "d_loss",
    "depth_metrics",
    "find_leaky_counterexample",
    "g_loss",
    "generate_sample",
    "mean_iou",
    "pixel_accuracy",
    "run_cli",
    "spectral_normalize",
    "sweep_fusion_inequality",
    "sweep_lemma1",
    "transposed_conv2d",
]
