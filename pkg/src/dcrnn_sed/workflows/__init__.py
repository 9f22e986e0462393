"""Workflows that synthesise corpora, train networks and run dilation ablations."""

from .ablation import Ablation
from .synth import CorpusSynthesis
from .train import Trainer

__all__ = [
    "Ablation",
    "CorpusSynthesis",
    "Trainer",
]
