"""Deterministic pseudo-fake synthesis and detector-robustness evaluation.

The package blends transformed or artifact-substituted copies of a face
image under randomized landmark-derived masks (alpha or gradient-domain
Poisson compositing), pushes the result through a randomized degradation
model, and records everything needed to replay any output bit-exactly.
A separate harness applies fixed degradation sweeps and turns detector
score files into AUC robustness curves.
"""

from .core import (
    ArtifactError,
    BlendError,
    BlendMask,
    ConfigError,
    DegradationError,
    HarnessError,
    ImageBuffer,
    LandmarkSet,
    MaskError,
    MetricError,
    PipelineError,
    PmmConfig,
    PseudofakeError,
    RngStream,
    ValidationError,
    fork_stream,
    load_config,
    load_image,
    load_landmarks,
    save_image_png,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "BlendError",
    "BlendMask",
    "ConfigError",
    "DegradationError",
    "HarnessError",
    "ImageBuffer",
    "LandmarkSet",
    "MaskError",
    "MetricError",
    "PipelineError",
    "PmmConfig",
    "PseudofakeError",
    "RngStream",
    "ValidationError",
    "fork_stream",
    "load_config",
    "load_image",
    "load_landmarks",
    "save_image_png",
    "__version__",
]
