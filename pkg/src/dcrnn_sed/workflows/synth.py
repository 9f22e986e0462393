"""Synthetic corpus generation driven by the ``synth.yaml`` protocols."""

from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from dcrnn_sed.tools.corpus import CorpusDirectory, split_recordings, synthesize_recordings, write_synthetic_corpus
from dcrnn_sed.workflows.base import ProtocolMixin, Workflow


class CorpusSynthesis(ProtocolMixin, Workflow):
    """Synthesise a corpus on disk or in memory."""

    @classmethod
    def get_protocol_filepath(cls):
        """Return ``pathlib.Path`` to the ``.yaml`` file that defines the protocols."""
        from importlib_resources import files

        from . import protocols

        return files(protocols) / "synth.yaml"

    @classmethod
    def from_protocol(cls, protocol: Optional[str] = None, overrides: Optional[dict] = None) -> "CorpusSynthesis":
        return cls(cls.get_protocol_inputs(protocol, overrides))

    def __init__(self, inputs: dict, label: Optional[str] = None):
        super().__init__(label)
        self.inputs = inputs

    def run(self, directory: Union[str, Path]) -> CorpusDirectory:
        inputs = self.inputs
        self.report(
            f"writing {inputs['n_scenes']} scenes of {inputs['n_classes']} classes with seed {inputs['seed']} "
            f"to `{directory}`"
        )
        return write_synthetic_corpus(
            directory,
            n_classes=inputs["n_classes"],
            n_scenes=inputs["n_scenes"],
            seed=inputs["seed"],
            fractions=tuple(inputs["fractions"]),
            **inputs["recipe"],
        )

    def recordings(self, n_mels: int = 40) -> Tuple[list, Dict[str, list]]:
        """Synthesise in memory; return the labels and the recordings of each split."""
        inputs = self.inputs
        labels, recordings = synthesize_recordings(
            inputs["n_classes"], inputs["n_scenes"], inputs["seed"], n_mels, **inputs["recipe"]
        )
        self.report(f"synthesised {len(recordings)} scenes in memory")
        return labels, split_recordings(recordings, tuple(inputs["fractions"]), inputs["seed"])
