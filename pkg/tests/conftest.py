"""Fixtures and configuration for the `dcrnn-sed` package."""

from pathlib import Path

import numpy
import pytest

from dcrnn_sed.models.crnn import ModelConfig, build_crnn
from dcrnn_sed.tools.corpus import Recording, SequenceDataset
from dcrnn_sed.tools.features import FeatureMatrix
from dcrnn_sed.tools.metrics import EventRoll


@pytest.fixture
def files_path():
    """Path to the data files used for the tests."""
    return Path(__file__).parent / "files"


@pytest.fixture
def rng():
    return numpy.random.default_rng(1234)


@pytest.fixture(params=range(20), ids=lambda seed: f"seed{seed}")
def seeded_rng(request):
    """Random generator over twenty seeds, for checks that must hold on many random instances."""
    return numpy.random.default_rng(request.param)


@pytest.fixture
def make_recordings():
    """Return a function that creates recordings with random features and event rolls."""

    def factory(n_recordings: int, n_frames: int = 20, n_mels: int = 5, n_classes: int = 2, seed: int = 0):
        """Create ``n_recordings`` recordings of ``n_frames`` frames.

        :return: list of ``Recording``.
        """
        generator = numpy.random.default_rng(seed)
        return [
            Recording(
                f"rec_{index:03d}",
                FeatureMatrix(generator.normal(size=(n_frames, n_mels))),
                EventRoll(generator.random((n_frames, n_classes)) < 0.3),
            )
            for index in range(n_recordings)
        ]

    return factory


@pytest.fixture
def tiny_config():
    """Two blocks of two filters over five mel bands with a four unit BLSTM."""
    return ModelConfig.from_schedule("1-2", n_classes=2, filters=2, n_mels=5, blstm_hidden=4, dropout=0.0)


@pytest.fixture
def tiny_model(tiny_config):
    return build_crnn(tiny_config, seed=3)


@pytest.fixture
def tiny_datasets(make_recordings):
    """Train, validation and test datasets that fit ``tiny_model``."""
    return {
        split: SequenceDataset(make_recordings(count, n_frames=20, seed=seed), chunk_frames=8)
        for split, count, seed in (("train", 4, 0), ("val", 2, 1), ("test", 2, 2))
    }
