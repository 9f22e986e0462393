"""Baseline and dilated CRNN architectures."""

from .crnn import CRNN, ConvLayerConfig, ModelConfig, build_crnn, count_params, receptive_field

__all__ = [
    "CRNN",
    "ConvLayerConfig",
    "ModelConfig",
    "build_crnn",
    "count_params",
    "receptive_field",
]
