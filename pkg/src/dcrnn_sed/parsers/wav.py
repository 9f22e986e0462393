"""16-bit PCM mono WAV input and output."""

from pathlib import Path
from typing import Union

import numpy
import soundfile

from dcrnn_sed.common.exceptions import DataError
from dcrnn_sed.tools.features import AudioClip


def read_wav(path: Union[str, Path]) -> AudioClip:
    """Read a mono WAV file into an ``AudioClip`` with samples scaled to ``[-1, 1]``."""
    try:
        samples, sample_rate = soundfile.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as exception:
        raise DataError(f"cannot read the audio file `{path}`: {exception}") from exception
    if samples.shape[1] != 1:
        raise DataError(f"`{path}` has {samples.shape[1]} channels; only mono audio is supported")
    return AudioClip(samples[:, 0], int(sample_rate))


def write_wav(path: Union[str, Path], clip: AudioClip) -> None:
    """Write ``clip`` as 16-bit PCM; samples are clipped to ``[-1, 1]``."""
    soundfile.write(str(path), numpy.clip(clip.samples, -1.0, 1.0), clip.sample_rate, subtype="PCM_16")
