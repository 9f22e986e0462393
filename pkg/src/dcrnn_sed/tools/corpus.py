"""Corpora of recordings and the chunked sequence datasets the networks are trained on.

A corpus directory holds::

    labels.txt               one class label per line (optional; derived from the annotations otherwise)
    audio/<name>.wav         mono recordings
    annotations/<name>.txt   DCASE-style annotations
    features/<name>.feat     cached log mel features (optional)
    train.txt val.txt test.txt   recording names of each split
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Union

import numpy

from dcrnn_sed.common.exceptions import DataError, InputValidationError
from dcrnn_sed.common.log import get_logger
from dcrnn_sed.parsers.annotations import event_labels, read_annotations, write_annotations
from dcrnn_sed.parsers.checkpoint import read_feature_matrix, write_feature_matrix
from dcrnn_sed.parsers.wav import read_wav, write_wav
from dcrnn_sed.tools.features import FeatureMatrix, logmel
from dcrnn_sed.tools.metrics import EventRoll, events_to_roll
from dcrnn_sed.tools.synth import SceneRecipe, chunk_sequences, default_templates, split_corpus, synthesize_scene

LOGGER = get_logger(__name__)

SPLITS = ("train", "val", "test")


@dataclass
class Recording:
    """Features and reference roll of one recording, frame-aligned."""

    name: str
    features: FeatureMatrix
    roll: EventRoll

    def __post_init__(self):
        if self.features.n_frames != self.roll.n_frames:
            raise DataError(
                f"`{self.name}`: {self.features.n_frames} feature frames but {self.roll.n_frames} roll frames"
            )


class Batch(NamedTuple):
    features: numpy.ndarray
    targets: numpy.ndarray
    masks: numpy.ndarray


class SequenceDataset:
    """All recordings of a split cut into fixed-length chunks."""

    def __init__(self, recordings: Sequence[Recording], chunk_frames: int = 256):
        if not recordings:
            raise InputValidationError("a dataset needs at least one recording")
        self.recordings = list(recordings)
        self.chunk_frames = chunk_frames
        chunks = [
            chunk
            for recording in self.recordings
            for chunk in chunk_sequences(recording.features.values, recording.roll.active, chunk_frames)
        ]
        self.features = numpy.stack([chunk.features for chunk in chunks])
        self.targets = numpy.stack([chunk.roll for chunk in chunks]).astype(numpy.float64)
        self.masks = numpy.stack([chunk.mask for chunk in chunks])

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return self.targets.shape[2]

    @property
    def n_mels(self) -> int:
        return self.features.shape[2]

    def batches(self, batch_size: int, rng: Optional[numpy.random.Generator] = None) -> Iterator[Batch]:
        """Yield ``ceil(len / batch_size)`` batches, shuffled when ``rng`` is given; the last may be partial."""
        order = rng.permutation(len(self)) if rng is not None else numpy.arange(len(self))
        for start in range(0, len(self), batch_size):
            index = order[start : start + batch_size]
            yield Batch(self.features[index], self.targets[index], self.masks[index])

    def standardization(self):
        """Per-mel-band mean and deviation over the valid frames."""
        valid = self.features[self.masks]
        std = valid.std(axis=0)
        std[std == 0] = 1.0
        return valid.mean(axis=0), std


class CorpusDirectory:
    """A corpus on disk, real or synthetic."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        if not self.path.is_dir():
            raise DataError(f"corpus directory `{self.path}` does not exist")

    def audio_path(self, name: str) -> Path:
        return self.path / "audio" / f"{name}.wav"

    def annotation_path(self, name: str) -> Path:
        return self.path / "annotations" / f"{name}.txt"

    def feature_path(self, name: str) -> Path:
        return self.path / "features" / f"{name}.feat"

    def names(self) -> List[str]:
        return sorted(path.stem for path in (self.path / "audio").glob("*.wav"))

    @property
    def labels(self) -> List[str]:
        labels_file = self.path / "labels.txt"
        if labels_file.exists():
            return [line.strip() for line in labels_file.read_text().splitlines() if line.strip()]
        labels = set()
        for path in sorted((self.path / "annotations").glob("*.txt")):
            labels.update(event_labels(read_annotations(path)))
        if not labels:
            raise DataError(f"`{self.path}` has neither a `labels.txt` nor any annotated event")
        return sorted(labels)

    def split_names(self, split: str) -> List[str]:
        if split not in SPLITS:
            raise InputValidationError(f"unknown split `{split}`, expected one of {SPLITS}")
        path = self.path / f"{split}.txt"
        if not path.exists():
            raise DataError(f"the fold file `{path}` is missing")
        return [line.strip() for line in path.read_text().splitlines() if line.strip()]

    def features(self, name: str, n_mels: int = 40) -> FeatureMatrix:
        """Cached features of ``name`` when present with ``n_mels`` bands, otherwise computed from the audio."""
        cached = self.feature_path(name)
        if cached.exists():
            features = read_feature_matrix(cached)
            if features.n_mels == n_mels:
                return features
            LOGGER.warning(f"ignoring `{cached}`: it has {features.n_mels} mel bands, {n_mels} requested")
        return logmel(read_wav(self.audio_path(name)), n_mels=n_mels)

    def recording(self, name: str, n_mels: int = 40, labels: Optional[Sequence[str]] = None) -> Recording:
        labels = labels if labels is not None else self.labels
        features = self.features(name, n_mels)
        annotations = self.annotation_path(name)
        events = read_annotations(annotations) if annotations.exists() else []
        roll = events_to_roll(
            events, labels, features.n_frames, features.frame_hop_seconds, features.frame_len_seconds
        )
        return Recording(name, features, roll)

    def load_split(self, split: str, n_mels: int = 40) -> List[Recording]:
        labels = self.labels
        return [self.recording(name, n_mels, labels) for name in self.split_names(split)]

    def cache_features(self, n_mels: int = 40, sample_rate: Optional[int] = None, out: Optional[Path] = None):
        """Compute and store the features of every recording.

        :param sample_rate: expected sample rate; recordings at another rate are rejected.
        :param out: target directory, ``features/`` inside the corpus by default.
        :return: list of written files.
        """
        out = Path(out) if out is not None else self.path / "features"
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in self.names():
            clip = read_wav(self.audio_path(name))
            if sample_rate is not None and clip.sample_rate != sample_rate:
                raise DataError(f"`{self.audio_path(name)}` is sampled at {clip.sample_rate} Hz, not {sample_rate}")
            path = out / f"{name}.feat"
            write_feature_matrix(path, logmel(clip, n_mels=n_mels))
            written.append(path)
        LOGGER.info(f"cached the features of {len(written)} recordings in `{out}`")
        return written


def _scene_seeds(seed: int, n_scenes: int) -> List[int]:
    return [int(value) for value in numpy.random.default_rng(seed).integers(0, 2**31, n_scenes)]


def synthesize_recordings(
    n_classes: int = 4, n_scenes: int = 40, seed: int = 7, n_mels: int = 40, **recipe
) -> tuple:
    """Synthesise scenes in memory.

    :param recipe: further ``SceneRecipe`` fields, e.g. ``duration_seconds`` or ``max_polyphony``.
    :return: tuple of the labels and the list of ``Recording``.
    """
    if n_scenes < 1:
        raise InputValidationError(f"`n_scenes` must be a positive integer, got {n_scenes}")
    sample_rate = recipe.get("sample_rate", 16000)
    templates = default_templates(n_classes, sample_rate)
    labels = [template.label for template in templates]
    recordings = []
    for index, scene_seed in enumerate(_scene_seeds(seed, n_scenes)):
        clip, events = synthesize_scene(SceneRecipe(seed=scene_seed, **recipe), templates)
        features = logmel(clip, n_mels=n_mels)
        roll = events_to_roll(
            events, labels, features.n_frames, features.frame_hop_seconds, features.frame_len_seconds
        )
        recordings.append(Recording(f"scene_{index:03d}", features, roll))
    return labels, recordings


def write_synthetic_corpus(
    directory: Union[str, Path],
    n_classes: int = 4,
    n_scenes: int = 40,
    seed: int = 7,
    fractions=(0.6, 0.2, 0.2),
    **recipe,
) -> CorpusDirectory:
    """Synthesise a corpus and write it, with its fold files, to ``directory``."""
    directory = Path(directory)
    for sub in ("audio", "annotations"):
        (directory / sub).mkdir(parents=True, exist_ok=True)
    sample_rate = recipe.get("sample_rate", 16000)
    templates = default_templates(n_classes, sample_rate)
    (directory / "labels.txt").write_text("".join(f"{template.label}\n" for template in templates))

    names = []
    for index, scene_seed in enumerate(_scene_seeds(seed, n_scenes)):
        name = f"scene_{index:03d}"
        clip, events = synthesize_scene(SceneRecipe(seed=scene_seed, **recipe), templates)
        write_wav(directory / "audio" / f"{name}.wav", clip)
        write_annotations(directory / "annotations" / f"{name}.txt", events)
        names.append(name)

    for split, members in zip(SPLITS, split_corpus(names, fractions, seed)):
        (directory / f"{split}.txt").write_text("".join(f"{name}\n" for name in sorted(members)))
    LOGGER.info(f"wrote {n_scenes} synthetic scenes of {n_classes} classes to `{directory}`")
    return CorpusDirectory(directory)


def split_recordings(recordings: Sequence[Recording], fractions=(0.6, 0.2, 0.2), seed: int = 7) -> Dict:
    """In-memory counterpart of the fold files: ``{"train": [...], "val": [...], "test": [...]}``."""
    return dict(zip(SPLITS, split_corpus(recordings, fractions, seed)))
